//! Mechanical systems with unilateral constraints: the model trait, contact
//! modes, hybrid states, solver settings, and the quantities every other
//! module derives from them (Coriolis matrix, guards, active sets).

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numdiff;

/// Relative step used for model-level numerical derivatives (mass partials,
/// constraint gradients and curvature) when no analytic hint is supplied.
pub const MODEL_FD_STEP: f64 = 1e-6;

/// Largest number of unilateral constraints a [`ContactMode`] can index.
pub const MAX_CONSTRAINTS: usize = 63;

/// A mechanical system `M(q) q̈ = f(q, q̇) + c(q, q̇) q̇ + Da_J(q)ᵀ λ_J` subject
/// to unilateral constraints `a(q) ≥ 0` and the restitution law at impacts.
///
/// Implementations must be pure: every method is a function of its
/// arguments only, so a model can be shared across threads.
pub trait ModelSpec: Send + Sync {
    /// Configuration dimension `d`.
    fn dof(&self) -> usize;

    /// Number of unilateral constraints `n`.
    fn constraint_count(&self) -> usize;

    fn mass(&self, q: &DVector<f64>) -> DMatrix<f64>;

    /// Generalized applied and internal forces.
    fn effort(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;

    /// Constraint value `a_j(q)`; admissible configurations have `a_j ≥ 0`.
    fn constraint(&self, j: usize, q: &DVector<f64>) -> f64;

    /// Row gradient `Da_j(q)`.
    fn constraint_gradient(&self, j: usize, q: &DVector<f64>) -> DVector<f64> {
        numdiff::gradient(|x| self.constraint(j, x), q, MODEL_FD_STEP)
    }

    /// Coefficient of restitution `γ_j(q, q̇) ≥ 0`.
    fn restitution(&self, j: usize, q: &DVector<f64>, v: &DVector<f64>) -> f64;

    /// Declared body/limb partition, if the model claims decoupled limbs.
    fn decoupling(&self) -> Option<Decoupling> {
        None
    }

    /// Analytic `∂M/∂q_k` for every `k`, if available.
    fn mass_partials(&self, _q: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    /// Analytic `q̇ᵀ ∇²a_j(q) q̇`, if available.
    fn constraint_curvature(&self, _j: usize, _q: &DVector<f64>, _v: &DVector<f64>) -> Option<f64> {
        None
    }
}

/// Body/limb partition of the coordinates: `body` holds coordinates that
/// never undergo impact, `limbs[j]` the coordinates of the limb constrained by
/// constraint `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoupling {
    pub body: Vec<usize>,
    pub limbs: Vec<Vec<usize>>,
}

impl Decoupling {
    /// Block index of every coordinate: 0 for the body, `j + 1` for limb `j`.
    /// Returns `None` when the blocks overlap or miss a coordinate.
    pub fn block_of(&self, dof: usize) -> Option<Vec<usize>> {
        let mut owner = vec![usize::MAX; dof];
        let blocks = std::iter::once(&self.body).chain(self.limbs.iter());
        for (b, coords) in blocks.enumerate() {
            for &c in coords {
                if c >= dof || owner[c] != usize::MAX {
                    return None;
                }
                owner[c] = b;
            }
        }
        owner.iter().all(|&o| o != usize::MAX).then_some(owner)
    }
}

/// Set of active constraints, stored as a bitmask (bit `j` for constraint `j`).
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContactMode(u64);

impl ContactMode {
    pub const EMPTY: ContactMode = ContactMode(0);

    pub fn from_bits(bits: u64) -> Self {
        ContactMode(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    /// Maximally constrained mode `{0, …, n-1}`.
    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_CONSTRAINTS, "at most {MAX_CONSTRAINTS} constraints");
        ContactMode(if n == 0 { 0 } else { u64::MAX >> (64 - n) })
    }

    pub fn single(j: usize) -> Self {
        assert!(j < MAX_CONSTRAINTS);
        ContactMode(1 << j)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        indices.into_iter().fold(ContactMode::EMPTY, |m, j| m.with(j))
    }

    pub fn contains(self, j: usize) -> bool {
        j < 64 && self.0 & (1 << j) != 0
    }

    #[must_use]
    pub fn with(self, j: usize) -> Self {
        assert!(j < MAX_CONSTRAINTS);
        ContactMode(self.0 | (1 << j))
    }

    #[must_use]
    pub fn without(self, j: usize) -> Self {
        ContactMode(self.0 & !(1 << j))
    }

    #[must_use]
    pub fn union(self, other: Self) -> Self {
        ContactMode(self.0 | other.0)
    }

    #[must_use]
    pub fn difference(self, other: Self) -> Self {
        ContactMode(self.0 & !other.0)
    }

    pub fn is_subset(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Constraint indices in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&j| self.0 & (1 << j) != 0)
    }

    pub fn indices(self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl fmt::Debug for ContactMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// One-based set notation, e.g. `{1,2}` or `{}`.
impl fmt::Display for ContactMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, j) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", j + 1)?;
        }
        write!(f, "}}")
    }
}

/// A point `(q, q̇)` of the tangent bundle at time `t`, tagged with its
/// contact mode.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub mode: ContactMode,
}

impl State {
    pub fn new(t: f64, q: DVector<f64>, v: DVector<f64>, mode: ContactMode) -> Self {
        State { t, q, v, mode }
    }

    pub fn from_slices(t: f64, q: &[f64], v: &[f64], mode: ContactMode) -> Self {
        State::new(t, DVector::from_column_slice(q), DVector::from_column_slice(v), mode)
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    /// Stacked `(q, q̇)` vector of length `2d`.
    pub fn stacked(&self) -> DVector<f64> {
        stack(&self.q, &self.v)
    }

    /// Rebuild from a stacked `(q, q̇)` vector.
    pub fn from_stacked(t: f64, z: &DVector<f64>, mode: ContactMode) -> Self {
        let d = z.len() / 2;
        State::new(t, z.rows(0, d).into_owned(), z.rows(d, d).into_owned(), mode)
    }
}

pub(crate) fn stack(q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let d = q.len();
    let mut z = DVector::zeros(2 * d);
    z.rows_mut(0, d).copy_from(q);
    z.rows_mut(d, d).copy_from(v);
    z
}

/// Tolerances and integrator controls shared by simulation and sensitivity
/// computations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Constraint values within this distance of zero count as active.
    pub tol_a: f64,
    /// Event-time refinement tolerance (s).
    pub tol_event: f64,
    /// Crossings closer than this (s) form one simultaneous event.
    pub tol_cluster: f64,
    /// Normal velocities (and contact-force rates) below this magnitude are
    /// grazing, hence inadmissible.
    pub tol_graze: f64,
    /// Relative step for numerical vector-field and reset Jacobians.
    pub h_fd: f64,
    /// Cap on the number of events in one simulation.
    pub max_events: usize,
    pub rtol: f64,
    pub atol: f64,
    /// Largest integrator step (s); also bounds how long a guard excursion can
    /// hide inside a single step.
    pub h_max: f64,
    pub h_min: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_a: 1e-9,
            tol_event: 1e-12,
            tol_cluster: 1e-9,
            tol_graze: 1e-8,
            h_fd: 1e-6,
            max_events: 10_000,
            rtol: 1e-10,
            atol: 1e-12,
            h_max: 0.05,
            h_min: 1e-14,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_a", self.tol_a),
            ("tol_event", self.tol_event),
            ("tol_cluster", self.tol_cluster),
            ("tol_graze", self.tol_graze),
            ("h_fd", self.h_fd),
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("h_max", self.h_max),
            ("h_min", self.h_min),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {value}")));
            }
        }
        if self.max_events < 1 {
            return Err(Error::InvalidConfig("max_events must be at least 1".into()));
        }
        if self.h_min > self.h_max {
            return Err(Error::InvalidConfig("h_min exceeds h_max".into()));
        }
        Ok(())
    }
}

/// Cholesky factor of `M(q)`; fails with [`Error::DegenerateMass`] when `M` is
/// not positive-definite.
pub fn mass_cholesky(model: &dyn ModelSpec, q: &DVector<f64>) -> Result<Cholesky<f64, Dyn>> {
    let m = model.mass(q);
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateMass);
    }
    Cholesky::new(m).ok_or(Error::DegenerateMass)
}

/// `∂M/∂q_k` for every coordinate, from hints or central differences.
pub fn mass_partials(model: &dyn ModelSpec, q: &DVector<f64>) -> Vec<DMatrix<f64>> {
    model.mass_partials(q).unwrap_or_else(|| numdiff::matrix_partials(|x| model.mass(x), q, MODEL_FD_STEP))
}

/// Coriolis matrix with entries
/// `c_lm = -1/2 Σ_k (∂_k M_lm + ∂_m M_lk - ∂_l M_km) q̇_k`,
/// so that `c(q, q̇) q̇` is the velocity-product force on the right-hand side
/// of the equations of motion.
pub fn coriolis(model: &dyn ModelSpec, q: &DVector<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
    mass_cholesky(model, q)?;
    let partials = mass_partials(model, q);
    Ok(coriolis_from_partials(&partials, v))
}

pub(crate) fn coriolis_from_partials(partials: &[DMatrix<f64>], v: &DVector<f64>) -> DMatrix<f64> {
    let d = v.len();
    let mut c = DMatrix::zeros(d, d);
    for (k, dk) in partials.iter().enumerate() {
        let vk = v[k];
        if vk == 0.0 {
            continue;
        }
        for l in 0..d {
            for m in 0..d {
                c[(l, m)] -= 0.5 * vk * (dk[(l, m)] + partials[m][(l, k)] - partials[l][(k, m)]);
            }
        }
    }
    c
}

/// Guard `h_j(q, q̇) = a_j(q)` and its row gradient `[Da_j(q), 0]`.
pub fn guard(model: &dyn ModelSpec, j: usize, state: &State) -> (f64, DVector<f64>) {
    let d = state.dof();
    let mut grad = DVector::zeros(2 * d);
    grad.rows_mut(0, d).copy_from(&model.constraint_gradient(j, &state.q));
    (model.constraint(j, &state.q), grad)
}

/// Constraints with `|a_j(q)| ≤ tol_a`. Penetration beyond `tol_a` is an error.
pub fn active_set(model: &dyn ModelSpec, q: &DVector<f64>, tol_a: f64) -> Result<ContactMode> {
    let mut mode = ContactMode::EMPTY;
    for j in 0..model.constraint_count() {
        let a = model.constraint(j, q);
        if a < -tol_a {
            return Err(Error::Infeasible { constraint: j, value: a });
        }
        if a <= tol_a {
            mode = mode.with(j);
        }
    }
    Ok(mode)
}

/// Second derivative of `a_j` along `q̇`: `q̇ᵀ ∇²a_j(q) q̇ = D(Da_j q̇) q̇`.
pub fn constraint_curvature(model: &dyn ModelSpec, j: usize, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
    if let Some(k) = model.constraint_curvature(j, q, v) {
        return k;
    }
    let speed = v.norm();
    if speed == 0.0 {
        return 0.0;
    }
    let s = MODEL_FD_STEP * (1.0 + q.amax()) / speed;
    let gp = model.constraint_gradient(j, &(q + v * s));
    let gm = model.constraint_gradient(j, &(q - v * s));
    (gp - gm).dot(v) / (2.0 * s)
}

pub(crate) fn check_dims(model: &dyn ModelSpec, state: &State) -> Result<()> {
    let d = model.dof();
    for len in [state.q.len(), state.v.len()] {
        if len != d {
            return Err(Error::DimensionMismatch { expected: d, found: len });
        }
    }
    Ok(())
}
