//! First-order sensitivity of the hybrid flow to initial conditions.
//!
//! Per-mode variational Jacobians are chained with one saltation matrix per
//! event. Saltation matrices come in two forms: the product over an ordering
//! of the simultaneously activating constraints, and the order-free closed
//! form `DR_K + Σ S̃_k` valid for decoupled limbs.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{self, mode_dynamics_at, reset_velocity_at};
use crate::error::{Error, Result};
use crate::hybrid::{self, post_impact_mode, simulate_sampled, Event, EventKind, Trajectory, Word};
use crate::integrator;
use crate::model::{self, ContactMode, ModelSpec, SolverConfig, State};
use crate::numdiff;
use crate::parallel::{try_par_map, Execution};

/// Largest activating set whose orderings are all enumerated.
pub const FULL_ENUMERATION_LIMIT: usize = 6;

/// Product and closed forms must agree this closely for models declared
/// decoupled.
pub const DECOUPLING_TOLERANCE: f64 = 1e-8;

/// Word-independence verdict threshold.
pub const WORD_INDEPENDENCE_TOLERANCE: f64 = 1e-6;

/// Jump correction of the flow Jacobian across one event.
#[derive(Debug, Clone, PartialEq)]
pub struct SaltationMatrix {
    pub t: f64,
    pub kind: EventKind,
    pub constraints: ContactMode,
    /// `Ξ` from the product form over ascending constraint order.
    pub xi: DMatrix<f64>,
    /// `DR_K` for the whole reset set `K`.
    pub reset_jacobian: DMatrix<f64>,
    /// Rank-one terms `S̃_k` of the closed form, one per activating constraint.
    pub s_terms: Vec<DMatrix<f64>>,
    /// `DR_K + Σ S̃_k`, when the event is an impact.
    pub closed_form: Option<DMatrix<f64>>,
    /// Largest difference between `xi` and any other ordering's product or
    /// the closed form.
    pub form_spread: f64,
}

/// Variational Jacobian over one mode interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeInterval {
    pub mode: ContactMode,
    pub t0: f64,
    pub t1: f64,
    pub jacobian: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityResult {
    /// Derivative of the terminal state with respect to the initial state.
    pub d_phi: DMatrix<f64>,
    pub per_mode: Vec<ModeInterval>,
    pub per_event: Vec<SaltationMatrix>,
    pub word: Word,
}

impl SensitivityResult {
    /// `X_m Ξ_m ⋯ Ξ_1 X_0` recomputed from the stored factors.
    pub fn rechain(&self) -> DMatrix<f64> {
        chain(&self.per_mode, self.per_event.iter().map(|s| &s.xi))
    }
}

fn chain<'a>(per_mode: &[ModeInterval], xis: impl Iterator<Item = &'a DMatrix<f64>>) -> DMatrix<f64> {
    let mut d = per_mode[0].jacobian.clone();
    for (interval, xi) in per_mode[1..].iter().zip(xis) {
        d = &interval.jacobian * (xi * d);
    }
    d
}

/// Central-difference Jacobian of a fallible map.
fn try_jacobian<F>(f: F, x: &DVector<f64>, base: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let failure = RefCell::new(None);
    let jac = numdiff::jacobian(
        |y| match f(y) {
            Ok(value) => value,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                DVector::zeros(x.len())
            }
        },
        x,
        base,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(jac),
    }
}

/// `DF_J(z)` by central differences.
pub fn field_jacobian(
    model: &dyn ModelSpec,
    z: &DVector<f64>,
    mode: ContactMode,
    config: &SolverConfig,
) -> Result<DMatrix<f64>> {
    try_jacobian(|y| dynamics::vector_field(model, y, mode), z, config.h_fd)
}

/// Solve `Ẋ = DF_J(z(t)) X`, `X(0) = I` alongside the state for `duration`.
/// Both share one step controller with the error measured on the state.
pub fn mode_jacobian(
    model: &dyn ModelSpec,
    state: &State,
    mode: ContactMode,
    duration: f64,
    config: &SolverConfig,
) -> Result<DMatrix<f64>> {
    model::check_dims(model, state)?;
    let n = 2 * state.dof();
    if duration <= 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    let rhs = |y: &DVector<f64>| -> Result<DVector<f64>> {
        let z = y.rows(0, n).into_owned();
        let x = DMatrix::from_column_slice(n, n, &y.as_slice()[n..]);
        let field = dynamics::vector_field(model, &z, mode)?;
        let dx = field_jacobian(model, &z, mode, config)? * x;
        let mut out = DVector::zeros(n + n * n);
        out.rows_mut(0, n).copy_from(&field);
        out.rows_mut(n, n * n).copy_from_slice(dx.as_slice());
        Ok(out)
    };
    let mut y0 = DVector::zeros(n + n * n);
    y0.rows_mut(0, n).copy_from(&state.stacked());
    y0.rows_mut(n, n * n).copy_from_slice(DMatrix::<f64>::identity(n, n).as_slice());
    let y = integrator::integrate(&rhs, 0.0, y0, duration, hybrid::step_control(config, n))?;
    Ok(DMatrix::from_column_slice(n, n, &y.as_slice()[n..]))
}

/// `DR_J = [[I, 0], [□_J, ◇_J]]` of the reset over `mode` at `state`.
/// `□` is a central difference over `q`; `◇` is analytic, with the
/// restitution coefficients' velocity dependence differenced.
pub fn reset_jacobian(
    model: &dyn ModelSpec,
    state: &State,
    mode: ContactMode,
    config: &SolverConfig,
) -> Result<DMatrix<f64>> {
    model::check_dims(model, state)?;
    reset_jacobian_at(model, &state.q, &state.v, mode, config)
}

fn reset_jacobian_at(
    model: &dyn ModelSpec,
    q: &DVector<f64>,
    v: &DVector<f64>,
    mode: ContactMode,
    config: &SolverConfig,
) -> Result<DMatrix<f64>> {
    let d = q.len();
    let mut dr = DMatrix::identity(2 * d, 2 * d);
    if mode.is_empty() {
        return Ok(dr);
    }
    let boxed = try_jacobian(|x| reset_velocity_at(model, x, v, mode), q, config.h_fd)?;
    let rows: Vec<_> =
        mode.iter().map(|j| numdiff::gradient(|w| model.restitution(j, q, w), v, config.h_fd).transpose()).collect();
    let dgamma = DMatrix::from_rows(&rows);
    let diamond = dynamics::reset_velocity_jacobian(model, q, v, mode, &dgamma)?;
    dr.view_mut((d, 0), (d, d)).copy_from(&boxed);
    dr.view_mut((d, d), (d, d)).copy_from(&diamond);
    Ok(dr)
}

fn guard_row(model: &dyn ModelSpec, i: usize, q: &DVector<f64>) -> DVector<f64> {
    let d = q.len();
    let mut row = DVector::zeros(2 * d);
    row.rows_mut(0, d).copy_from(&model.constraint_gradient(i, q));
    row
}

fn field_at(model: &dyn ModelSpec, q: &DVector<f64>, v: &DVector<f64>, mode: ContactMode) -> Result<DVector<f64>> {
    Ok(mode_dynamics_at(model, q, v, mode)?.field)
}

/// Checked saltation denominator `Dh_i F`.
fn denominator(i: usize, dh: &DVector<f64>, field: &DVector<f64>, config: &SolverConfig) -> Result<f64> {
    let value = dh.dot(field);
    if value.abs() < config.tol_graze {
        return Err(Error::GrazingDenominator { constraint: i, value });
    }
    Ok(value)
}

/// One factor `DR_ℓ + S_ℓ` of the product form, with its denominator.
#[derive(Debug, Clone, PartialEq)]
pub struct SaltationStep {
    pub constraint: usize,
    pub reset_jacobian: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub denominator: f64,
    pub mode_before: ContactMode,
    pub mode_after: ContactMode,
}

/// Product-form saltation of the impact at `pre` (flowing in `pre.mode`)
/// with the activating constraints processed in `ordering`. Each sub-step
/// resets over the current mode plus the next constraint, then resolves the
/// mode it leaves the state in. Factors are returned first-applied first.
pub fn saltation_product(
    model: &dyn ModelSpec,
    pre: &State,
    ordering: &[usize],
    config: &SolverConfig,
) -> Result<(DMatrix<f64>, Vec<SaltationStep>)> {
    let q = &pre.q;
    let n = 2 * pre.dof();
    let mut v = pre.v.clone();
    let mut mode = pre.mode;
    let mut xi = DMatrix::identity(n, n);
    let mut steps = Vec::with_capacity(ordering.len());
    for &i in ordering {
        let reset = mode.with(i);
        let dh = guard_row(model, i, q);
        let f_pre = field_at(model, q, &v, mode)?;
        let den = denominator(i, &dh, &f_pre, config)?;
        let v_next = reset_velocity_at(model, q, &v, reset)?;
        let mode_next = post_impact_mode(model, q, &v_next, reset, config)?;
        let f_post = field_at(model, q, &v_next, mode_next)?;
        let dr = reset_jacobian_at(model, q, &v, reset, config)?;
        let s = (f_post - &dr * f_pre) * dh.transpose() / den;
        xi = (&dr + &s) * xi;
        steps.push(SaltationStep {
            constraint: i,
            reset_jacobian: dr,
            s,
            denominator: den,
            mode_before: mode,
            mode_after: mode_next,
        });
        v = v_next;
        mode = mode_next;
    }
    Ok((xi, steps))
}

/// `(DR_K + Σ_k S̃_k, DR_K, [S̃_k])`.
pub type ClosedForm = (DMatrix<f64>, DMatrix<f64>, Vec<DMatrix<f64>>);

/// Closed form `DR_K + Σ_k S̃_k` over the activating set, where `K` adds the
/// set to the pre-impact mode and each `S̃_k` is built from the reset of
/// constraint `k` alone, evaluated at the pre-impact state.
pub fn saltation_closed_form(
    model: &dyn ModelSpec,
    pre: &State,
    activating: ContactMode,
    config: &SolverConfig,
) -> Result<ClosedForm> {
    let (q, v) = (&pre.q, &pre.v);
    let dr_all = reset_jacobian_at(model, q, v, pre.mode.union(activating), config)?;
    let f_pre = field_at(model, q, v, pre.mode)?;
    let mut terms = Vec::with_capacity(activating.len());
    for k in activating.iter() {
        let reset = pre.mode.with(k);
        let dh = guard_row(model, k, q);
        let den = denominator(k, &dh, &f_pre, config)?;
        let v_k = reset_velocity_at(model, q, v, reset)?;
        let post = post_impact_mode(model, q, &v_k, reset, config)?;
        let f_post = field_at(model, q, &v_k, post)?;
        let dr = reset_jacobian_at(model, q, v, reset, config)?;
        terms.push((f_post - &dr * &f_pre) * dh.transpose() / den);
    }
    let mut xi = dr_all.clone();
    for s in &terms {
        xi += s;
    }
    Ok((xi, dr_all, terms))
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(k);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Orderings of a simultaneous set: all permutations up to
/// [`FULL_ENUMERATION_LIMIT`] elements, otherwise every cyclic shift of the
/// ascending order and of its reversal.
pub fn orderings(set: ContactMode) -> Vec<Vec<usize>> {
    let items = set.indices();
    if items.len() <= FULL_ENUMERATION_LIMIT {
        return permutations(&items);
    }
    let mut out = Vec::new();
    let reversed: Vec<usize> = items.iter().rev().copied().collect();
    for base in [&items, &reversed] {
        for shift in 0..base.len() {
            let mut o = base.clone();
            o.rotate_left(shift);
            out.push(o);
        }
    }
    out
}

/// Saltation matrix of one event.
///
/// Liftoffs give the identity. Impacts use the product form in ascending
/// order; for simultaneous sets on a model declaring decoupled limbs every
/// ordering and the closed form are cross-checked.
pub fn saltation_event(model: &dyn ModelSpec, event: &Event, config: &SolverConfig) -> Result<SaltationMatrix> {
    let n = 2 * event.pre.dof();
    if !event.is_impact() {
        let identity = DMatrix::identity(n, n);
        return Ok(SaltationMatrix {
            t: event.t,
            kind: event.kind,
            constraints: event.constraints,
            xi: identity.clone(),
            reset_jacobian: identity,
            s_terms: Vec::new(),
            closed_form: None,
            form_spread: 0.0,
        });
    }
    let pre = &event.pre;
    let (xi, _) = saltation_product(model, pre, &event.constraints.indices(), config)?;
    let (closed, dr, s_terms) = saltation_closed_form(model, pre, event.constraints, config)?;
    let mut spread = 0.0f64;
    if event.constraints.len() > 1 && model.decoupling().is_some() {
        spread = (&closed - &xi).amax();
        for ordering in orderings(event.constraints).iter().skip(1) {
            let (other, _) = saltation_product(model, pre, ordering, config)?;
            spread = spread.max((other - &xi).amax());
        }
        if spread > DECOUPLING_TOLERANCE {
            return Err(Error::DecouplingViolated { difference: spread });
        }
    }
    Ok(SaltationMatrix {
        t: event.t,
        kind: event.kind,
        constraints: event.constraints,
        xi,
        reset_jacobian: dr,
        s_terms,
        closed_form: Some(closed),
        form_spread: spread,
    })
}

/// Saltation of a liftoff from the general formula, treating `λ_i = 0` as
/// the guard: `I + (F_post - F_pre) Dλ_i / (Dλ_i F_pre)` per lifting
/// constraint. The vector field is continuous where `λ_i` vanishes, so this
/// reduces to the identity up to the event-time accuracy.
pub fn deactivation_saltation(model: &dyn ModelSpec, event: &Event, config: &SolverConfig) -> Result<DMatrix<f64>> {
    if event.kind != EventKind::Deactivation {
        return Err(Error::InvalidConfig("deactivation saltation needs a liftoff event".into()));
    }
    let z = event.pre.stacked();
    let n = z.len();
    let mut xi = DMatrix::identity(n, n);
    let mut mode = event.pre.mode;
    for i in event.constraints.iter() {
        let force = |y: &DVector<f64>| -> Result<DVector<f64>> {
            let (q, v) = (y.rows(0, n / 2).into_owned(), y.rows(n / 2, n / 2).into_owned());
            let lambda = mode_dynamics_at(model, &q, &v, mode)?.force_on(i).unwrap_or(0.0);
            Ok(DVector::from_element(1, lambda))
        };
        let dlambda = try_jacobian(force, &z, config.h_fd)?.row(0).transpose();
        let f_pre = dynamics::vector_field(model, &z, mode)?;
        let after = mode.without(i);
        let f_post = dynamics::vector_field(model, &z, after)?;
        let den = denominator(i, &dlambda, &f_pre, config)?;
        xi = (DMatrix::identity(n, n) + (f_post - f_pre) * dlambda.transpose() / den) * xi;
        mode = after;
    }
    Ok(xi)
}

/// Rejects a horizon that coincides with an event, either one already taken
/// or an impact the terminal state is about to make.
fn check_terminal(model: &dyn ModelSpec, trajectory: &Trajectory, config: &SolverConfig) -> Result<()> {
    let terminal = &trajectory.terminal;
    let horizon = terminal.t;
    if let Some(event) = trajectory.word.events.iter().find(|e| (horizon - e.t).abs() <= config.tol_event) {
        return Err(Error::TerminalAtEvent { horizon, event_time: event.t });
    }
    for j in (0..model.constraint_count()).filter(|&j| !terminal.mode.contains(j)) {
        let a = model.constraint(j, &terminal.q);
        let vn = model.constraint_gradient(j, &terminal.q).dot(&terminal.v);
        if vn < -config.tol_graze && a.abs() <= config.tol_a.max(-vn * config.tol_event) {
            return Err(Error::TerminalAtEvent { horizon, event_time: horizon - a / vn });
        }
    }
    Ok(())
}

fn mode_intervals(
    model: &dyn ModelSpec,
    trajectory: &Trajectory,
    config: &SolverConfig,
    execution: Execution,
) -> Result<Vec<ModeInterval>> {
    let word = &trajectory.word;
    let starts: Vec<(State, ContactMode, f64)> = (0..word.modes.len())
        .map(|k| {
            let start = if k == 0 { trajectory.initial.clone() } else { word.events[k - 1].post.clone() };
            (start, word.modes[k], word.times[k + 1] - word.times[k])
        })
        .collect();
    try_par_map(execution, &starts, |(start, mode, duration)| {
        Ok(ModeInterval {
            mode: *mode,
            t0: start.t,
            t1: start.t + duration,
            jacobian: mode_jacobian(model, start, *mode, *duration, config)?,
        })
    })
}

/// `Dφ = X_m Ξ_m ⋯ Ξ_1 X_0`, with the variational Jacobians of the mode
/// intervals integrated in parallel.
pub fn trajectory_derivative(
    model: &dyn ModelSpec,
    trajectory: &Trajectory,
    config: &SolverConfig,
) -> Result<SensitivityResult> {
    trajectory_derivative_with(model, trajectory, config, Execution::default())
}

pub fn trajectory_derivative_with(
    model: &dyn ModelSpec,
    trajectory: &Trajectory,
    config: &SolverConfig,
    execution: Execution,
) -> Result<SensitivityResult> {
    check_terminal(model, trajectory, config)?;
    let per_mode = mode_intervals(model, trajectory, config, execution)?;
    let per_event =
        trajectory.word.events.iter().map(|e| saltation_event(model, e, config)).collect::<Result<Vec<_>>>()?;
    let d_phi = chain(&per_mode, per_event.iter().map(|s| &s.xi));
    Ok(SensitivityResult { d_phi, per_mode, per_event, word: trajectory.word.clone() })
}

/// Simulate from `initial` (terminal state only) and differentiate.
pub fn trajectory_derivative_from(
    model: &dyn ModelSpec,
    initial: &State,
    horizon: f64,
    config: &SolverConfig,
) -> Result<SensitivityResult> {
    let trajectory = simulate_sampled(model, initial, horizon, None, config)?;
    trajectory_derivative(model, &trajectory, config)
}

/// Distinct words met by the finite-difference perturbations.
#[derive(Debug, Clone, PartialEq)]
pub struct WordSetReport {
    /// Signatures in first-seen order: nominal, then `+e_k`, `-e_k` by `k`.
    pub words: Vec<String>,
    pub nominal: usize,
    /// Word index of the `(+, -)` perturbation of every coordinate.
    pub per_coordinate: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDifference {
    pub d_phi: DMatrix<f64>,
    pub words: WordSetReport,
}

/// Central differences of the terminal state over every coordinate of
/// `(q, q̇)`; the `4d` simulations run in parallel and are merged in
/// coordinate order.
pub fn finite_difference_derivative(
    model: &dyn ModelSpec,
    initial: &State,
    horizon: f64,
    config: &SolverConfig,
    step: f64,
) -> Result<FiniteDifference> {
    finite_difference_derivative_with(model, initial, horizon, config, step, Execution::default())
}

pub fn finite_difference_derivative_with(
    model: &dyn ModelSpec,
    initial: &State,
    horizon: f64,
    config: &SolverConfig,
    step: f64,
    execution: Execution,
) -> Result<FiniteDifference> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {step}")));
    }
    model::check_dims(model, initial)?;
    let z0 = initial.stacked();
    let n = z0.len();
    let mut probes = vec![z0.clone()];
    for k in 0..n {
        for sign in [1.0, -1.0] {
            let mut z = z0.clone();
            z[k] += sign * step;
            probes.push(z);
        }
    }
    let runs = try_par_map(execution, &probes, |z| {
        let start = State::from_stacked(initial.t, z, ContactMode::EMPTY);
        let traj = simulate_sampled(model, &start, horizon, None, config)?;
        Ok((traj.terminal.stacked(), traj.word.signature()))
    })?;

    let mut words: Vec<String> = Vec::new();
    let mut id = |sig: &String| match words.iter().position(|w| w == sig) {
        Some(k) => k,
        None => {
            words.push(sig.clone());
            words.len() - 1
        }
    };
    let nominal = id(&runs[0].1);
    let mut d_phi = DMatrix::zeros(n, n);
    let mut per_coordinate = Vec::with_capacity(n);
    for k in 0..n {
        let (plus, minus) = (&runs[1 + 2 * k], &runs[2 + 2 * k]);
        d_phi.set_column(k, &((&plus.0 - &minus.0) / (2.0 * step)));
        per_coordinate.push((id(&plus.1), id(&minus.1)));
    }
    Ok(FiniteDifference { d_phi, words: WordSetReport { words, nominal, per_coordinate } })
}

/// Agreement between a derivative and its finite-difference oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub max_abs: f64,
    /// `max_abs` relative to the largest oracle entry.
    pub max_rel: f64,
}

impl Comparison {
    pub fn new(computed: &DMatrix<f64>, oracle: &DMatrix<f64>) -> Self {
        let max_abs = (computed - oracle).amax();
        let scale = oracle.amax();
        let max_rel = if scale > 0.0 { max_abs / scale } else { max_abs };
        Comparison { max_abs, max_rel }
    }

    /// Within `rel` of the oracle's scale, or within `abs` outright.
    pub fn within(&self, rel: f64, abs: f64) -> bool {
        self.max_rel <= rel || self.max_abs <= abs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordIndependenceReport {
    pub pass: bool,
    pub max_difference: f64,
    /// Simultaneous impacts found along the nominal trajectory.
    pub simultaneous_events: usize,
    /// Distinct derivative chains compared.
    pub orderings_compared: usize,
}

/// Compare the derivative chains obtained by resolving every simultaneous
/// impact in each of its orderings. Passes when all agree within
/// [`WORD_INDEPENDENCE_TOLERANCE`]; trivially passes without simultaneous
/// impacts. Order-dependence is reported, never raised.
pub fn word_independence_check(
    model: &dyn ModelSpec,
    initial: &State,
    horizon: f64,
    config: &SolverConfig,
) -> Result<WordIndependenceReport> {
    let trajectory = simulate_sampled(model, initial, horizon, None, config)?;
    check_terminal(model, &trajectory, config)?;
    let per_mode = mode_intervals(model, &trajectory, config, Execution::default())?;
    let events = &trajectory.word.events;
    let mut canonical = Vec::with_capacity(events.len());
    for event in events {
        canonical.push(if event.is_impact() {
            saltation_product(model, &event.pre, &event.constraints.indices(), config)?.0
        } else {
            DMatrix::identity(2 * event.pre.dof(), 2 * event.pre.dof())
        });
    }
    let mut chains = vec![chain(&per_mode, canonical.iter())];
    let mut simultaneous = 0;
    for (e, event) in events.iter().enumerate() {
        if !event.is_impact() || event.constraints.len() < 2 {
            continue;
        }
        simultaneous += 1;
        for ordering in orderings(event.constraints).iter().skip(1) {
            let mut xis = canonical.clone();
            xis[e] = saltation_product(model, &event.pre, ordering, config)?.0;
            chains.push(chain(&per_mode, xis.iter()));
        }
    }
    let mut max_difference = 0.0f64;
    for a in 0..chains.len() {
        for b in a + 1..chains.len() {
            max_difference = max_difference.max((&chains[a] - &chains[b]).amax());
        }
    }
    Ok(WordIndependenceReport {
        pass: max_difference < WORD_INDEPENDENCE_TOLERANCE,
        max_difference,
        simultaneous_events: simultaneous,
        orderings_compared: chains.len(),
    })
}

/// Gradient of the activation time of `constraint` at impact `event_index`
/// with respect to the initial state: `-Dh_i Dφ(τ⁻) / (Dh_i F⁻)`, where
/// `Dφ(τ⁻)` is the flow derivative up to the pre-impact state.
pub fn activation_time_gradient(
    model: &dyn ModelSpec,
    trajectory: &Trajectory,
    event_index: usize,
    constraint: usize,
    config: &SolverConfig,
) -> Result<DVector<f64>> {
    let event = trajectory
        .word
        .events
        .get(event_index)
        .ok_or_else(|| Error::InvalidConfig(format!("no event {event_index}")))?;
    if !event.is_impact() || !event.constraints.contains(constraint) {
        return Err(Error::InvalidConfig(format!(
            "event {event_index} does not activate constraint {}",
            constraint + 1
        )));
    }
    let mut truncated = trajectory.clone();
    truncated.word.modes.truncate(event_index + 1);
    truncated.word.events.truncate(event_index);
    truncated.word.times.truncate(event_index + 2);
    truncated.terminal = event.pre.clone();
    let per_mode = mode_intervals(model, &truncated, config, Execution::default())?;
    let per_event =
        truncated.word.events.iter().map(|e| saltation_event(model, e, config)).collect::<Result<Vec<_>>>()?;
    let d_phi = chain(&per_mode, per_event.iter().map(|s| &s.xi));
    let dh = guard_row(model, constraint, &event.pre.q);
    let f_pre = field_at(model, &event.pre.q, &event.pre.v, event.pre.mode)?;
    let den = denominator(constraint, &dh, &f_pre, config)?;
    Ok(-(d_phi.transpose() * dh) / den)
}
