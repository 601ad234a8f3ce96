//! Event-driven integration of the hybrid system.
//!
//! Within a contact mode the state follows `ż = F_J(z)`. Inactive constraints
//! are watched for touchdown (`a_i` reaching zero) and active ones for
//! liftoff (`λ_i` reaching zero). Crossings are refined to `tol_event`,
//! clustered into simultaneous sets, classified, and the reset applied.

use std::fmt;

use nalgebra::DVector;
use serde::Serialize;

use crate::dynamics::{self, mode_dynamics_at};
use crate::error::{Error, Result};
use crate::integrator::{self, Step, StepControl, Stepper};
use crate::model::{self, ContactMode, ModelSpec, SolverConfig, State};

/// Samples per horizon when no sample step is requested.
pub const DEFAULT_SAMPLES: usize = 200;

const MAX_BISECTIONS: usize = 200;
const NEWTON_POLISH: usize = 4;

/// What changed at an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Activation,
    Deactivation,
    /// Impact after which some of the just-reset constraints separate at
    /// once, e.g. an elastic bounce.
    ImpactWithInstantDeactivation,
}

/// Why an event was accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Admissibility {
    /// Every activating constraint approached with `Da_i q̇⁻ < -tol_graze`.
    StrictApproach,
    /// Contact force decreasing through zero, `dλ_i/dt < -tol_graze`.
    DecreasingForce,
}

/// One activation or deactivation.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    /// Constraints that activate (impacts) or deactivate (liftoff).
    pub constraints: ContactMode,
    /// Constraints among those reset that separate immediately afterwards.
    pub released: ContactMode,
    /// Left limit; its mode is the mode flowed before the event.
    pub pre: State,
    /// Right limit; its mode is the mode flowed after the event.
    pub post: State,
    pub admissible: bool,
    pub reason: Admissibility,
}

impl Event {
    pub fn is_impact(&self) -> bool {
        self.kind != EventKind::Deactivation
    }
}

/// Contact-mode sequence with transition times.
///
/// `modes[k]` is flowed on `[times[k], times[k + 1]]` and `events[k]`
/// separates `modes[k]` from `modes[k + 1]`. A mode can follow itself only
/// across an impact with instant deactivation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Word {
    pub modes: Vec<ContactMode>,
    pub times: Vec<f64>,
    pub events: Vec<Event>,
}

impl Word {
    /// Key identifying the word: the modes together with the constraint sets
    /// changing at each event.
    pub fn signature(&self) -> String {
        self.to_string()
    }
}

/// `{} -[{1}]-> {1}`
impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, mode) in self.modes.iter().enumerate() {
            if k > 0 {
                let event = &self.events[k - 1];
                let tag = if event.is_impact() { "" } else { "~" };
                write!(f, " -[{tag}{}]-> ", event.constraints)?;
            }
            write!(f, "{mode}")?;
        }
        Ok(())
    }
}

/// Result of [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Initial state tagged with its resolved contact mode.
    pub initial: State,
    /// Left-continuous samples on a regular grid, plus the pre-event state at
    /// every event time and the terminal state.
    pub samples: Vec<State>,
    pub word: Word,
    pub terminal: State,
}

/// Scalar quantity watched for a sign change while flowing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Trigger {
    /// Inactive constraint value `a_i` reaching zero.
    Constraint(usize),
    /// Active contact force `λ_i` reaching zero.
    Force(usize),
}

impl Trigger {
    pub fn index(self) -> usize {
        match self {
            Trigger::Constraint(i) | Trigger::Force(i) => i,
        }
    }
}

/// Integrator step containing at least one sign change, restricted to
/// `[lo, hi]` with the triggers non-negative at `lo` and negative at `hi`.
#[derive(Debug, Clone)]
pub struct Bracket {
    pub mode: ContactMode,
    pub step: Step,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone)]
pub struct Crossing {
    pub triggers: Vec<Trigger>,
    pub bracket: Bracket,
}

/// Outcome of [`flow_mode`]: the state where the flow stopped (the horizon,
/// or the start of the bracketing step) and the crossing, if any.
#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub state: State,
    pub crossing: Option<Crossing>,
}

pub(crate) fn step_control(config: &SolverConfig, error_dims: usize) -> StepControl {
    StepControl { rtol: config.rtol, atol: config.atol, h_max: config.h_max, h_min: config.h_min, error_dims }
}

/// `F_J` as an integrator right-hand side on stacked states.
pub(crate) fn mode_field(
    model: &dyn ModelSpec,
    mode: ContactMode,
) -> impl Fn(&DVector<f64>) -> Result<DVector<f64>> + '_ {
    move |z: &DVector<f64>| dynamics::vector_field(model, z, mode)
}

fn split(z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let d = z.len() / 2;
    (z.rows(0, d).into_owned(), z.rows(d, d).into_owned())
}

fn normal_velocity(model: &dyn ModelSpec, i: usize, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
    model.constraint_gradient(i, q).dot(v)
}

fn trigger_value(model: &dyn ModelSpec, trigger: Trigger, mode: ContactMode, z: &DVector<f64>) -> Result<f64> {
    let (q, v) = split(z);
    match trigger {
        Trigger::Constraint(i) => Ok(model.constraint(i, &q)),
        Trigger::Force(i) => {
            Ok(mode_dynamics_at(model, &q, &v, mode)?.force_on(i).expect("force triggers watch active constraints"))
        }
    }
}

/// Bisection on the dense output of `step` for the point where the guard
/// velocity `Da_i q̇` turns from negative to non-negative.
fn guard_minimum(model: &dyn ModelSpec, i: usize, step: &Step, tol: f64) -> f64 {
    let (mut lo, mut hi) = (step.t0, step.t1());
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (q, v) = split(&step.dense(mid));
        if normal_velocity(model, i, &q, &v) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Flow `ż = F_J(z)` from `state` until `t_max` or the first step over which
/// an inactive constraint or an active contact force changes sign.
///
/// Constraints listed in `dormant` sit at contact while separating (just
/// released); they are only watched for crossings once they have moved
/// beyond `tol_a` or penetrate past it.
pub fn flow_mode(
    model: &dyn ModelSpec,
    state: &State,
    mode: ContactMode,
    t_max: f64,
    config: &SolverConfig,
) -> Result<FlowOutcome> {
    model::check_dims(model, state)?;
    config.validate()?;
    let dormant = ContactMode::from_indices(
        (0..model.constraint_count()).filter(|&i| !mode.contains(i) && model.constraint(i, &state.q) <= config.tol_a),
    );
    flow_observed(model, state, mode, t_max, config, dormant, &mut |_| {})
}

pub(crate) fn flow_observed(
    model: &dyn ModelSpec,
    state: &State,
    mode: ContactMode,
    t_max: f64,
    config: &SolverConfig,
    mut dormant: ContactMode,
    observer: &mut dyn FnMut(&Step),
) -> Result<FlowOutcome> {
    let rhs = mode_field(model, mode);
    let d = state.dof();
    if state.t >= t_max {
        return Ok(FlowOutcome { state: state.clone(), crossing: None });
    }
    let mut stepper = Stepper::new(&rhs, state.t, state.stacked(), step_control(config, 2 * d))?;
    let inactive: Vec<usize> = (0..model.constraint_count()).filter(|&i| !mode.contains(i)).collect();

    loop {
        let step = stepper.propose(&rhs, t_max)?;
        let (q1, v1) = split(&step.y1);
        let (q0, v0) = split(&step.y0);
        let mut triggers = Vec::new();
        let mut hi = step.t1();

        for &i in &inactive {
            let a1 = model.constraint(i, &q1);
            if dormant.contains(i) {
                if a1 > config.tol_a {
                    dormant = dormant.without(i);
                } else if a1 < -config.tol_a {
                    triggers.push(Trigger::Constraint(i));
                }
                continue;
            }
            if a1 < 0.0 {
                triggers.push(Trigger::Constraint(i));
                continue;
            }
            // A guard can dip below zero and recover within one step; look
            // for an interior minimum of a_i on the dense output.
            if normal_velocity(model, i, &q0, &v0) < 0.0 && normal_velocity(model, i, &q1, &v1) > 0.0 {
                let t_min = guard_minimum(model, i, &step, config.tol_event);
                let (qm, vm) = split(&step.dense(t_min));
                let a_min = model.constraint(i, &qm);
                if a_min < 0.0 {
                    triggers.push(Trigger::Constraint(i));
                    hi = hi.min(t_min);
                } else if a_min <= config.tol_a {
                    return Err(Error::GrazingDetected {
                        t: t_min,
                        constraint: i,
                        normal_velocity: normal_velocity(model, i, &qm, &vm),
                    });
                }
            }
        }

        if !mode.is_empty() {
            let dynamics = mode_dynamics_at(model, &q1, &v1, mode)?;
            for (k, i) in mode.iter().enumerate() {
                let a = model.constraint(i, &q1);
                if a.abs() > 10.0 * config.tol_a {
                    return Err(Error::DriftExceeded { constraint: i, value: a, t: step.t1() });
                }
                if dynamics.lambda[k] < 0.0 {
                    triggers.push(Trigger::Force(i));
                }
            }
        }

        if !triggers.is_empty() {
            let at = State::from_stacked(step.t0, &step.y0, mode);
            let lo = step.t0;
            return Ok(FlowOutcome {
                state: at,
                crossing: Some(Crossing { triggers, bracket: Bracket { mode, step, lo, hi } }),
            });
        }

        observer(&step);
        stepper.accept(&step);
        if step.t1() >= t_max {
            return Ok(FlowOutcome { state: State::from_stacked(t_max, &step.y1, mode), crossing: None });
        }
    }
}

/// Locate the zero of `trigger` inside the bracket: bisection on the dense
/// output down to `tol_event`, then Newton polish on states recomputed by a
/// direct step from the bracket start, until the correction reaches rounding
/// level. The result lies in `[lo, hi]`.
pub fn refine_event_time(
    model: &dyn ModelSpec,
    bracket: &Bracket,
    trigger: Trigger,
    config: &SolverConfig,
) -> Result<f64> {
    let mode = bracket.mode;
    let g = |t: f64| trigger_value(model, trigger, mode, &bracket.step.dense(t));
    let (mut lo, mut hi) = (bracket.lo, bracket.hi);
    if g(hi)? >= 0.0 {
        // The sign change sits at the very end of the bracket.
        return Ok(hi);
    }
    let mut iterations = 0;
    while hi - lo > config.tol_event {
        iterations += 1;
        if iterations > MAX_BISECTIONS {
            return Err(Error::NoConvergence { iterations });
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let rhs = mode_field(model, mode);
    let control = step_control(config, bracket.step.y0.len());
    let mut t = 0.5 * (lo + hi);
    for _ in 0..NEWTON_POLISH {
        let z = integrator::substep(&rhs, &bracket.step, t, &control)?;
        let value = trigger_value(model, trigger, mode, &z)?;
        let slope = match trigger {
            Trigger::Constraint(i) => {
                let (q, v) = split(&z);
                normal_velocity(model, i, &q, &v)
            }
            Trigger::Force(_) => force_rate(model, trigger, mode, &z, config)?,
        };
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let next = (t - value / slope).clamp(bracket.lo, bracket.hi);
        let moved = (next - t).abs();
        t = next;
        if moved <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
            break;
        }
    }
    Ok(t)
}

/// `dλ_i/dt` along the flow of `mode`, by central differences along `F_J`.
fn force_rate(
    model: &dyn ModelSpec,
    trigger: Trigger,
    mode: ContactMode,
    z: &DVector<f64>,
    config: &SolverConfig,
) -> Result<f64> {
    let f = dynamics::vector_field(model, z, mode)?;
    let s = config.h_fd * (1.0 + z.amax()) / f.amax().max(1e-300);
    let plus = trigger_value(model, trigger, mode, &(z + &f * s))?;
    let minus = trigger_value(model, trigger, mode, &(z - &f * s))?;
    Ok((plus - minus) / (2.0 * s))
}

/// Constraints at contact (`|a_i| ≤ tol_a`) and not in `mode`.
fn at_contact(model: &dyn ModelSpec, q: &DVector<f64>, mode: ContactMode, tol_a: f64) -> ContactMode {
    ContactMode::from_indices(
        (0..model.constraint_count()).filter(|&i| !mode.contains(i) && model.constraint(i, q).abs() <= tol_a),
    )
}

/// Apply the event at `pre` (whose `mode` is the mode flowed so far) for the
/// triggers that fired together.
///
/// Constraint triggers give an impact: every activating constraint must
/// approach strictly, the velocity is reset over the previous mode together
/// with the activating set (growing the set while the reset drives further
/// constraints at contact inward), and the post-impact mode keeps those reset
/// constraints that neither separate nor pull. Force triggers give a liftoff,
/// admissible when the force decreases strictly through zero.
pub fn classify_event(
    model: &dyn ModelSpec,
    pre: &State,
    triggers: &[Trigger],
    config: &SolverConfig,
) -> Result<Event> {
    model::check_dims(model, pre)?;
    let impacts: Vec<usize> = triggers
        .iter()
        .filter_map(|t| match t {
            Trigger::Constraint(i) => Some(*i),
            Trigger::Force(_) => None,
        })
        .collect();
    if impacts.is_empty() {
        classify_liftoff(model, pre, triggers, config)
    } else {
        classify_impact(model, pre, ContactMode::from_indices(impacts), config)
    }
}

fn classify_impact(
    model: &dyn ModelSpec,
    pre: &State,
    activating: ContactMode,
    config: &SolverConfig,
) -> Result<Event> {
    let (q, v) = (&pre.q, &pre.v);
    let mut activating = activating;
    // Constraints at contact and approaching belong to the same impact even
    // when their crossing fell just outside the step.
    for i in at_contact(model, q, pre.mode, config.tol_a).iter() {
        if normal_velocity(model, i, q, v) < -config.tol_graze {
            activating = activating.with(i);
        }
    }
    for i in activating.iter() {
        let vn = normal_velocity(model, i, q, v);
        if vn >= -config.tol_graze {
            return Err(Error::GrazingDetected { t: pre.t, constraint: i, normal_velocity: vn });
        }
    }

    let (reset, post_v) = loop {
        let reset = pre.mode.union(activating);
        let post_v = dynamics::reset_velocity_at(model, q, v, reset)?;
        let cascade = at_contact(model, q, reset, config.tol_a)
            .iter()
            .filter(|&i| normal_velocity(model, i, q, &post_v) < -config.tol_graze)
            .collect::<Vec<_>>();
        if cascade.is_empty() {
            break (reset, post_v);
        }
        activating = activating.union(ContactMode::from_indices(cascade));
    };

    let post_mode = post_impact_mode(model, q, &post_v, reset, config)?;
    // A rebound below the grazing threshold stays in contact; its residual
    // normal velocity is removed so the held constraint does not drift.
    let rebounding = post_mode.iter().any(|i| model.restitution(i, q, v) > 0.0);
    let post_v = if rebounding {
        let p = dynamics::projection(model, q, post_mode)?;
        &post_v - p * &post_v
    } else {
        post_v
    };
    let released = reset.difference(post_mode);
    let kind = if activating.difference(post_mode).is_empty() {
        EventKind::Activation
    } else {
        EventKind::ImpactWithInstantDeactivation
    };
    Ok(Event {
        t: pre.t,
        kind,
        constraints: activating,
        released,
        pre: pre.clone(),
        post: State::new(pre.t, q.clone(), post_v, post_mode),
        admissible: true,
        reason: Admissibility::StrictApproach,
    })
}

/// Mode entered after a reset over `reset`: constraints with positive normal
/// velocity separate, the rest are resolved by [`dynamics::select_mode`].
pub(crate) fn post_impact_mode(
    model: &dyn ModelSpec,
    q: &DVector<f64>,
    v: &DVector<f64>,
    reset: ContactMode,
    config: &SolverConfig,
) -> Result<ContactMode> {
    let candidates =
        ContactMode::from_indices(reset.iter().filter(|&i| normal_velocity(model, i, q, v).abs() <= config.tol_graze));
    dynamics::select_mode(model, q, v, candidates, config)
}

fn classify_liftoff(model: &dyn ModelSpec, pre: &State, triggers: &[Trigger], config: &SolverConfig) -> Result<Event> {
    let z = pre.stacked();
    let mut lifting = ContactMode::EMPTY;
    for &trigger in triggers {
        let rate = force_rate(model, trigger, pre.mode, &z, config)?;
        if rate >= -config.tol_graze {
            return Err(Error::GrazingDetected { t: pre.t, constraint: trigger.index(), normal_velocity: rate });
        }
        lifting = lifting.with(trigger.index());
    }
    let post_mode = pre.mode.difference(lifting);
    Ok(Event {
        t: pre.t,
        kind: EventKind::Deactivation,
        constraints: lifting,
        released: ContactMode::EMPTY,
        pre: pre.clone(),
        post: State::new(pre.t, pre.q.clone(), pre.v.clone(), post_mode),
        admissible: true,
        reason: Admissibility::DecreasingForce,
    })
}

/// Regular-grid sampler. Grid times are `k * dt`, so they never accumulate
/// rounding.
struct Sampler {
    dt: Option<f64>,
    next: u64,
    horizon: f64,
    samples: Vec<State>,
}

impl Sampler {
    fn new(dt: Option<f64>, horizon: f64) -> Self {
        Sampler { dt, next: 1, horizon, samples: Vec::new() }
    }

    fn push(&mut self, state: State) {
        if self.dt.is_some() {
            self.samples.push(state);
        }
    }

    /// Emit grid points in `(step.t0, until]`.
    fn emit(&mut self, step: &Step, until: f64, mode: ContactMode) {
        let Some(dt) = self.dt else { return };
        loop {
            let t = self.next as f64 * dt;
            if t > until || t >= self.horizon {
                break;
            }
            if t > step.t0 {
                let z = if t == step.t1() { step.y1.clone() } else { step.dense(t) };
                self.samples.push(State::from_stacked(t, &z, mode));
            }
            self.next += 1;
        }
    }
}

/// Simulate with [`DEFAULT_SAMPLES`] samples over the horizon.
pub fn simulate(model: &dyn ModelSpec, initial: &State, horizon: f64, config: &SolverConfig) -> Result<Trajectory> {
    simulate_sampled(model, initial, horizon, Some(horizon / DEFAULT_SAMPLES as f64), config)
}

/// Simulate from `initial.t` to `horizon`. With `sample_step = None` only
/// the word and the terminal state are recorded.
pub fn simulate_sampled(
    model: &dyn ModelSpec,
    initial: &State,
    horizon: f64,
    sample_step: Option<f64>,
    config: &SolverConfig,
) -> Result<Trajectory> {
    config.validate()?;
    model::check_dims(model, initial)?;
    if !horizon.is_finite() || horizon <= initial.t {
        return Err(Error::InvalidConfig(format!("horizon {horizon} must exceed the initial time {}", initial.t)));
    }
    if let Some(dt) = sample_step {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("sample step must be positive, got {dt}")));
        }
    }

    let mut state = initial_state(model, initial, config)?;
    let start = state.clone();
    let mut word = Word { modes: vec![state.mode], times: vec![state.t], events: Vec::new() };
    let mut sampler = Sampler::new(sample_step, horizon);
    if let Some(dt) = sample_step {
        sampler.next = (state.t / dt).floor() as u64 + 1;
    }
    sampler.push(state.clone());
    let mut dormant = at_contact(model, &state.q, state.mode, config.tol_a);

    loop {
        let mode = state.mode;
        let outcome = flow_observed(model, &state, mode, horizon, config, dormant, &mut |step| {
            sampler.emit(step, step.t1(), mode)
        })?;
        let Some(crossing) = outcome.crossing else {
            state = outcome.state;
            break;
        };

        let bracket = &crossing.bracket;
        let mut times = Vec::with_capacity(crossing.triggers.len());
        for &trigger in &crossing.triggers {
            times.push(refine_event_time(model, bracket, trigger, config)?);
        }
        let t_event = times.iter().copied().fold(f64::INFINITY, f64::min);
        let cluster: Vec<Trigger> = crossing
            .triggers
            .iter()
            .zip(&times)
            .filter(|(_, &t)| t <= t_event + config.tol_cluster)
            .map(|(&trigger, _)| trigger)
            .collect();

        let rhs = mode_field(model, mode);
        let control = step_control(config, 2 * state.dof());
        let z = integrator::substep(&rhs, &bracket.step, t_event, &control)?;
        let pre = State::from_stacked(t_event, &z, mode);
        sampler.emit(&bracket.step, t_event, mode);
        if sampler.samples.last().is_none_or(|s| s.t < t_event) {
            sampler.push(pre.clone());
        }

        let event = classify_event(model, &pre, &cluster, config)?;
        if word.events.len() >= config.max_events {
            return Err(Error::ZenoGuard { max_events: config.max_events, t: t_event });
        }
        state = event.post.clone();
        dormant = at_contact(model, &state.q, state.mode, config.tol_a);
        word.modes.push(state.mode);
        word.times.push(t_event);
        word.events.push(event);
        if t_event >= horizon {
            break;
        }
    }

    word.times.push(horizon);
    let terminal = State { t: horizon, ..state };
    if sampler.samples.last().is_none_or(|s| s.t < horizon) {
        sampler.push(terminal.clone());
    }
    Ok(Trajectory { initial: start, samples: sampler.samples, word, terminal })
}

/// Validate and tag the initial state. Constraints at contact and
/// separating are free; those at rest are resolved like a post-impact state.
fn initial_state(model: &dyn ModelSpec, initial: &State, config: &SolverConfig) -> Result<State> {
    let contact = model::active_set(model, &initial.q, config.tol_a)?;
    for i in contact.iter() {
        let vn = normal_velocity(model, i, &initial.q, &initial.v);
        if vn < -config.tol_graze {
            return Err(Error::InvalidConfig(format!(
                "initial state drives constraint {} into contact (normal velocity {vn:e})",
                i + 1
            )));
        }
    }
    let mode = post_impact_mode(model, &initial.q, &initial.v, contact, config)?;
    Ok(State { mode, ..initial.clone() })
}
