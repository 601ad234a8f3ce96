use std::collections::BTreeMap;

use impactflow::zoo::{entry, zoo, DecoupledPair, RigidTrot, ZOO_NAMES};
use impactflow::{
    simulate, sweep, validate_entry, validate_model, ContactMode, Error, Execution, SolverConfig, State, SweepResult,
    SweepSpec, SweepTarget,
};

fn family_sweep(name: &str, start: f64, stop: f64, count: usize, horizon: f64, execution: Execution) -> SweepResult {
    let mut params = BTreeMap::new();
    if name == "decoupled-pair" {
        // Every offset is back in flight after its first bounce at t = 2.
        params.insert("restitution".to_string(), 0.5);
    }
    let e = entry(name, &params).unwrap();
    let spec = SweepSpec { target: SweepTarget::Family(e.family.name.into()), start, stop, count };
    sweep(&*e.model, e.default_initial(), Some(&e.family), &spec, horizon, &SolverConfig::default(), execution).unwrap()
}

fn largest_step(result: &SweepResult) -> f64 {
    result.rows.windows(2).map(|w| (w[1].terminal.stacked() - w[0].terminal.stacked()).amax()).fold(0.0, f64::max)
}

#[test]
fn every_entry_validates_as_declared() {
    for e in zoo() {
        let report = validate_entry(&e);
        assert!(report.checks.iter().all(|c| c.pass), "{}: {:?}", e.name, report.checks);
        assert_eq!(report.decoupled(), e.decoupled, "{}", e.name);
    }
}

#[test]
fn coupling_the_pair_breaks_decoupling() {
    let coupled = DecoupledPair { coupling: 0.2, ..DecoupledPair::default() };
    let probes = [State::from_slices(0.0, &[1.0, 1.0], &[0.0, 0.0], ContactMode::EMPTY)];
    let report = validate_model(&coupled, &probes);
    assert!(!report.decoupled());
    assert!(validate_model(&DecoupledPair::default(), &probes).decoupled());
}

#[test]
fn parameters_override_defaults_and_unknowns_are_rejected() {
    let mut params = BTreeMap::new();
    params.insert("restitution".to_string(), 1.0);
    let ball = entry("bouncing-ball", &params).unwrap();
    let traj = simulate(&*ball.model, ball.default_initial(), 2.0, &SolverConfig::default()).unwrap();
    assert!(traj.terminal.v[0] > 0.0);

    params.insert("stiffness".to_string(), 1.0);
    assert!(matches!(entry("bouncing-ball", &params), Err(Error::InvalidConfig(_))));
    assert!(entry("no-such-model", &BTreeMap::new()).is_err());
    assert_eq!(ZOO_NAMES.len(), zoo().len());
}

#[test]
fn rigid_trot_pitch_rate_after_landing() {
    let trot = RigidTrot::default();
    let config = SolverConfig::default();
    let first_landing = |theta: f64| {
        let traj = simulate(&trot, &trot.pitched(theta), 0.9, &config).unwrap();
        let post = traj.word.events[0].post.clone();
        trot.pitch_rate(&post.q, &post.v)
    };
    assert!(first_landing(0.0).abs() < 1e-9);
    for theta in [1e-2, -1e-2, 1e-4, -1e-4, 1e-6, -1e-6] {
        assert!(first_landing(theta).abs() > 0.1, "theta {theta}: {}", first_landing(theta));
    }
}

#[test]
fn soft_trot_outcome_refines_smoothly() {
    let coarse = largest_step(&family_sweep("soft-trot", -0.02, 0.02, 41, 1.1, Execution::Parallel));
    let fine = largest_step(&family_sweep("soft-trot", -0.02, 0.02, 401, 1.1, Execution::Parallel));
    assert!(fine < 0.2 * coarse, "{coarse} {fine}");
}

#[test]
fn rigid_trot_jump_survives_refinement() {
    let coarse = largest_step(&family_sweep("rigid-trot", -0.02, 0.02, 41, 0.9, Execution::Parallel));
    let fine = largest_step(&family_sweep("rigid-trot", -0.02, 0.02, 401, 0.9, Execution::Parallel));
    assert!(fine > 0.5 * coarse, "{coarse} {fine}");
}

#[test]
fn decoupled_pair_offset_sweep_is_continuous() {
    let coarse = family_sweep("decoupled-pair", -0.1, 0.1, 21, 2.0, Execution::Parallel);
    let fine = family_sweep("decoupled-pair", -0.1, 0.1, 201, 2.0, Execution::Parallel);
    assert!(largest_step(&fine) < 0.2 * largest_step(&coarse));
    assert!(coarse.words.len() >= 3);
}

#[test]
fn sweep_is_identical_in_parallel_and_sequence() {
    let par = family_sweep("soft-trot", -0.05, 0.05, 33, 1.1, Execution::Parallel);
    let seq = family_sweep("soft-trot", -0.05, 0.05, 33, 1.1, Execution::Sequential);
    assert_eq!(par, seq);
}
