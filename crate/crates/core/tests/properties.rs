use impactflow::model::{active_set, coriolis, guard, mass_partials};
use impactflow::zoo::{DecoupledPair, RigidTrot, SoftTrot, SpringLimbs};
use impactflow::{reset_velocity, simulate, ContactMode, ModelSpec, SolverConfig, State};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn kinetic(model: &dyn ModelSpec, s: &State, v: &DVector<f64>) -> f64 {
    0.5 * v.dot(&(model.mass(&s.q) * v))
}

fn rigid_trot_state() -> impl Strategy<Value = State> {
    (-1.0..1.0f64, 0.3..0.9f64, -0.2..0.2f64, prop::array::uniform3(-2.0..2.0f64))
        .prop_map(|(x, z, dz, v)| State::from_slices(0.0, &[x, z + dz, z - dz], &v, ContactMode::EMPTY))
}

fn limb_velocities() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 4)
}

proptest! {
    #[test]
    fn mass_rate_plus_twice_coriolis_is_skew(s in rigid_trot_state()) {
        let trot = RigidTrot::default();
        let partials = mass_partials(&trot, &s.q);
        let mut m_dot = DMatrix::zeros(3, 3);
        for (k, p) in partials.iter().enumerate() {
            m_dot += p * s.v[k];
        }
        let n = m_dot + 2.0 * coriolis(&trot, &s.q, &s.v).unwrap();
        prop_assert!((&n + n.transpose()).amax() < 1e-6 * (1.0 + n.amax()));
    }

    #[test]
    fn guard_gradient_has_no_velocity_part(q in prop::collection::vec(-0.5..1.5f64, 5), j in 0..2usize) {
        let trot = SoftTrot::default();
        let s = State::from_slices(0.0, &q, &[0.1, -0.2, 0.3, 0.4, -0.5], ContactMode::EMPTY);
        let (_, dh) = guard(&trot, j, &s);
        prop_assert!(dh.rows(5, 5).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn active_set_grows_with_tolerance(a in 0.0..1e-3f64, b in 0.0..1e-3f64, t1 in 1e-9..1e-3f64, t2 in 1e-9..1e-3f64) {
        let pair = DecoupledPair::default();
        let q = DVector::from_vec(vec![a, b]);
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        prop_assert!(active_set(&pair, &q, lo).unwrap().is_subset(active_set(&pair, &q, hi).unwrap()));
    }

    #[test]
    fn resets_never_add_energy(s in rigid_trot_state(), gamma in 0.0..=1.0f64, bits in 1..4u64) {
        let trot = RigidTrot { restitution: gamma, ..RigidTrot::default() };
        let mode = ContactMode::from_bits(bits);
        let after = reset_velocity(&trot, &s, mode).unwrap();
        let (before, after_energy) = (kinetic(&trot, &s, &s.v), kinetic(&trot, &s, &after));
        prop_assert!(after_energy <= before * (1.0 + 1e-12) + 1e-15);
        if gamma == 1.0 {
            prop_assert!((after_energy - before).abs() <= 1e-12 * (1.0 + before));
        }
    }

    #[test]
    fn reset_scales_normal_velocity(s in rigid_trot_state(), gamma in 0.0..=1.0f64, bits in 1..4u64) {
        let trot = RigidTrot { restitution: gamma, ..RigidTrot::default() };
        let mode = ContactMode::from_bits(bits);
        let after = reset_velocity(&trot, &s, mode).unwrap();
        for j in mode.iter() {
            let grad = trot.constraint_gradient(j, &s.q);
            prop_assert!((grad.dot(&after) + gamma * grad.dot(&s.v)).abs() < 1e-12 * (1.0 + s.v.amax()));
        }
    }

    #[test]
    fn decoupled_reset_factors_over_limbs(v in limb_velocities(), gamma in 0.0..=1.0f64, bits in 1..8u64) {
        let limbs = SpringLimbs { restitution: gamma, ..SpringLimbs::new(3) };
        let q = vec![1.0, 0.0, 0.0, 0.0];
        let s = State::from_slices(0.0, &q, &v, ContactMode::EMPTY);
        let mode = ContactMode::from_bits(bits);
        let joint = reset_velocity(&limbs, &s, mode).unwrap();
        let mut sequential = s.clone();
        for j in mode.iter() {
            sequential.v = reset_velocity(&limbs, &sequential, ContactMode::single(j)).unwrap();
        }
        prop_assert!((joint - sequential.v).amax() < 1e-12 * (1.0 + s.v.amax()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulation_is_deterministic(h1 in 0.2..1.5f64, h2 in 0.2..1.5f64, v1 in -1.0..1.0f64, v2 in -1.0..1.0f64) {
        let pair = DecoupledPair { restitution: [0.5, 0.3], ..DecoupledPair::default() };
        let initial = State::from_slices(0.0, &[h1, h2], &[v1, v2], ContactMode::EMPTY);
        let a = simulate(&pair, &initial, 2.5, &SolverConfig::default());
        let b = simulate(&pair, &initial, 2.5, &SolverConfig::default());
        prop_assert_eq!(a, b);
    }
}
