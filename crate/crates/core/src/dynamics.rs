//! Per-mode continuous dynamics (contact forces, constrained accelerations,
//! mode vector fields) and the impact restitution law.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{self, constraint_curvature, ContactMode, ModelSpec, SolverConfig, State};

/// Delassus matrices with a condition number above this are treated as
/// singular.
pub const MAX_DELASSUS_CONDITION: f64 = 1e12;

/// Contact forces, acceleration and vector field of one contact mode at one
/// state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeDynamics {
    pub mode: ContactMode,
    /// One force per active constraint, in ascending constraint order.
    pub lambda: DVector<f64>,
    pub accel: DVector<f64>,
    /// `(q̇, accel)`.
    pub field: DVector<f64>,
}

impl ModeDynamics {
    /// Force on constraint `j`, if it is active in this mode.
    pub fn force_on(&self, j: usize) -> Option<f64> {
        self.mode.iter().position(|i| i == j).map(|k| self.lambda[k])
    }
}

/// Active-constraint Jacobian `A = Da_J(q)` together with `M⁻¹Aᵀ` and the
/// factored Delassus matrix `A M⁻¹ Aᵀ`.
struct ConstraintBlock {
    jac: DMatrix<f64>,
    minv_jt: DMatrix<f64>,
    delassus: Cholesky<f64, Dyn>,
}

impl ConstraintBlock {
    fn new(model: &dyn ModelSpec, q: &DVector<f64>, mode: ContactMode, mass: &Cholesky<f64, Dyn>) -> Result<Self> {
        let d = q.len();
        let rows: Vec<_> = mode.iter().map(|j| model.constraint_gradient(j, q).transpose()).collect();
        let jac = DMatrix::from_rows(&rows);
        debug_assert_eq!(jac.ncols(), d);
        let minv_jt = mass.solve(&jac.transpose());
        let g = &jac * &minv_jt;
        let g = (&g + g.transpose()) * 0.5;
        let eig = SymmetricEigen::new(g.clone());
        let lo = eig.eigenvalues.min();
        let hi = eig.eigenvalues.max();
        if lo.is_nan() || lo <= 0.0 || hi / lo > MAX_DELASSUS_CONDITION {
            let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            return Err(Error::RankDeficient { condition });
        }
        let delassus = Cholesky::new(g).ok_or(Error::RankDeficient { condition: f64::INFINITY })?;
        Ok(ConstraintBlock { jac, minv_jt, delassus })
    }
}

fn free_force(model: &dyn ModelSpec, q: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let c = model::coriolis(model, q, v)?;
    Ok(model.effort(q, v) + c * v)
}

/// Contact forces `λ_J` that keep every active constraint at zero
/// acceleration:
/// `λ = -(A M⁻¹ Aᵀ)⁻¹ (A M⁻¹ (f + c q̇) + D(A q̇) q̇)`.
pub fn contact_force(model: &dyn ModelSpec, state: &State, mode: ContactMode) -> Result<DVector<f64>> {
    Ok(mode_dynamics(model, state, mode)?.lambda)
}

/// Mass-metric projection `P_J = M⁻¹ Aᵀ (A M⁻¹ Aᵀ)⁻¹ A`.
pub fn projection(model: &dyn ModelSpec, q: &DVector<f64>, mode: ContactMode) -> Result<DMatrix<f64>> {
    let d = q.len();
    let mass = model::mass_cholesky(model, q)?;
    if mode.is_empty() {
        return Ok(DMatrix::zeros(d, d));
    }
    let block = ConstraintBlock::new(model, q, mode, &mass)?;
    Ok(&block.minv_jt * block.delassus.solve(&block.jac))
}

/// Post-impact velocity `q̇⁺ = q̇⁻ - M⁻¹Aᵀ (A M⁻¹ Aᵀ)⁻¹ (I + Γ) A q̇⁻` with
/// `Γ = diag(γ_j)`. With a common `γ` this is `(I - (1 + γ) P_J) q̇⁻`, and in
/// every case `A q̇⁺ = -Γ A q̇⁻`.
pub fn reset_velocity(model: &dyn ModelSpec, state: &State, mode: ContactMode) -> Result<DVector<f64>> {
    reset_velocity_at(model, &state.q, &state.v, mode)
}

pub(crate) fn reset_velocity_at(
    model: &dyn ModelSpec,
    q: &DVector<f64>,
    v: &DVector<f64>,
    mode: ContactMode,
) -> Result<DVector<f64>> {
    if mode.is_empty() {
        return Ok(v.clone());
    }
    let mass = model::mass_cholesky(model, q)?;
    let block = ConstraintBlock::new(model, q, mode, &mass)?;
    let mut rhs = &block.jac * v;
    for (k, j) in mode.iter().enumerate() {
        rhs[k] *= 1.0 + model.restitution(j, q, v);
    }
    Ok(v - &block.minv_jt * block.delassus.solve(&rhs))
}

/// Analytic velocity block `◇_J = ∂(Δ_J q̇)/∂q̇`, with the restitution
/// coefficients' velocity dependence supplied as `dgamma_dv` (one row per
/// active constraint).
pub(crate) fn reset_velocity_jacobian(
    model: &dyn ModelSpec,
    q: &DVector<f64>,
    v: &DVector<f64>,
    mode: ContactMode,
    dgamma_dv: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let d = q.len();
    if mode.is_empty() {
        return Ok(DMatrix::identity(d, d));
    }
    let mass = model::mass_cholesky(model, q)?;
    let block = ConstraintBlock::new(model, q, mode, &mass)?;
    let normal = &block.jac * v;
    let mut scaled = block.jac.clone();
    let mut gamma_term = dgamma_dv.clone();
    for (k, j) in mode.iter().enumerate() {
        let gamma = model.restitution(j, q, v);
        scaled.row_mut(k).scale_mut(1.0 + gamma);
        gamma_term.row_mut(k).scale_mut(normal[k]);
    }
    let inner = block.delassus.solve(&(scaled + gamma_term));
    Ok(DMatrix::identity(d, d) - &block.minv_jt * inner)
}

/// Constrained acceleration and vector field of mode `J` at `state`
/// (the state's own `mode` tag is ignored).
pub fn mode_dynamics(model: &dyn ModelSpec, state: &State, mode: ContactMode) -> Result<ModeDynamics> {
    model::check_dims(model, state)?;
    mode_dynamics_at(model, &state.q, &state.v, mode)
}

pub(crate) fn mode_dynamics_at(
    model: &dyn ModelSpec,
    q: &DVector<f64>,
    v: &DVector<f64>,
    mode: ContactMode,
) -> Result<ModeDynamics> {
    let mass = model::mass_cholesky(model, q)?;
    let force = free_force(model, q, v)?;
    let (lambda, total) = if mode.is_empty() {
        (DVector::zeros(0), force)
    } else {
        let block = ConstraintBlock::new(model, q, mode, &mass)?;
        let curvature = DVector::from_iterator(mode.len(), mode.iter().map(|j| constraint_curvature(model, j, q, v)));
        let drive = block.minv_jt.transpose() * &force + curvature;
        let lambda = -block.delassus.solve(&drive);
        let total = force + block.jac.transpose() * &lambda;
        (lambda, total)
    };
    let accel = mass.solve(&total);
    let field = model::stack(v, &accel);
    Ok(ModeDynamics { mode, lambda, accel, field })
}

/// Vector field `F_J` on the stacked state `z = (q, q̇)`.
pub fn vector_field(model: &dyn ModelSpec, z: &DVector<f64>, mode: ContactMode) -> Result<DVector<f64>> {
    let d = z.len() / 2;
    let q = z.rows(0, d).into_owned();
    let v = z.rows(d, d).into_owned();
    Ok(mode_dynamics_at(model, &q, &v, mode)?.field)
}

/// Second time derivative of `a_i` along the flow of mode `J`.
pub(crate) fn constraint_acceleration(
    model: &dyn ModelSpec,
    i: usize,
    q: &DVector<f64>,
    v: &DVector<f64>,
    dynamics: &ModeDynamics,
) -> f64 {
    model.constraint_gradient(i, q).dot(&dynamics.accel) + constraint_curvature(model, i, q, v)
}

/// Resolve which of the `candidates` (constraints at contact with zero normal
/// velocity) stay active: the largest subset whose contact forces are
/// non-negative while every released candidate separates with non-negative
/// constraint acceleration. Ties are broken by the lower bitmask.
pub fn select_mode(
    model: &dyn ModelSpec,
    q: &DVector<f64>,
    v: &DVector<f64>,
    candidates: ContactMode,
    config: &SolverConfig,
) -> Result<ContactMode> {
    let idx = candidates.indices();
    let count = idx.len();
    let mut subsets: Vec<ContactMode> = (0u64..(1u64 << count))
        .map(|mask| ContactMode::from_indices((0..count).filter(|b| mask & (1 << b) != 0).map(|b| idx[b])))
        .collect();
    subsets.sort_by(|a, b| b.len().cmp(&a.len()).then(a.bits().cmp(&b.bits())));

    let tol = config.tol_graze;
    let mut best: Option<(f64, ContactMode)> = None;
    for subset in subsets {
        let dynamics = match mode_dynamics_at(model, q, v, subset) {
            Ok(dynamics) => dynamics,
            Err(Error::RankDeficient { .. }) => continue,
            Err(e) => return Err(e),
        };
        let mut violation = dynamics.lambda.iter().map(|&l| (-l).max(0.0)).fold(0.0, f64::max);
        for i in candidates.difference(subset).iter() {
            let acc = constraint_acceleration(model, i, q, v, &dynamics);
            violation = violation.max((-acc).max(0.0));
        }
        if violation <= tol {
            return Ok(subset);
        }
        if best.is_none_or(|(b, _)| violation < b) {
            best = Some((violation, subset));
        }
    }
    best.map(|(_, m)| m).ok_or(Error::RankDeficient { condition: f64::INFINITY })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{BouncingBall, DecoupledPair};

    fn ball(g: f64, gamma: f64) -> BouncingBall {
        BouncingBall { gravity: g, restitution: gamma, mass: 1.0 }
    }

    fn st(q: &[f64], v: &[f64]) -> State {
        State::from_slices(0.0, q, v, ContactMode::EMPTY)
    }

    #[test]
    fn resting_ball_force_balances_gravity() {
        let lambda = contact_force(&ball(1.0, 0.0), &st(&[0.0], &[0.0]), ContactMode::single(0)).unwrap();
        assert!((lambda[0] - 1.0).abs() < 1e-12);
        let empty = contact_force(&ball(1.0, 0.0), &st(&[0.5], &[0.0]), ContactMode::EMPTY).unwrap();
        assert_eq!(empty.len(), 0);
    }

    #[test]
    fn decoupled_forces_are_independent() {
        let pair = DecoupledPair::default();
        let s = st(&[0.0, 0.0], &[0.0, 0.0]);
        let both = contact_force(&pair, &s, ContactMode::full(2)).unwrap();
        assert!((both[0] - 1.0).abs() < 1e-12 && (both[1] - 1.0).abs() < 1e-12);
        let one = contact_force(&pair, &s, ContactMode::single(1)).unwrap();
        assert_eq!(one[0], both[1]);
    }

    #[test]
    fn projection_examples() {
        let p = projection(&ball(1.0, 0.0), &DVector::from_element(1, 0.0), ContactMode::single(0)).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-14);
        let p = projection(&ball(1.0, 0.0), &DVector::from_element(1, 0.0), ContactMode::EMPTY).unwrap();
        assert_eq!(p[(0, 0)], 0.0);

        let pair = DecoupledPair { masses: [2.0, 3.0], ..DecoupledPair::default() };
        let p = projection(&pair, &DVector::zeros(2), ContactMode::single(0)).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!((p - expected).amax() < 1e-14);
    }

    #[test]
    fn reset_examples() {
        let v = reset_velocity(&ball(1.0, 0.0), &st(&[0.0], &[-2.0]), ContactMode::single(0)).unwrap();
        assert!(v[0].abs() < 1e-15);
        let v = reset_velocity(&ball(1.0, 0.5), &st(&[0.0], &[-2.0]), ContactMode::single(0)).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-14);
        let pair = DecoupledPair::default();
        let v = reset_velocity(&pair, &st(&[0.0, 0.4], &[-2.0, -3.0]), ContactMode::single(0)).unwrap();
        assert!(v[0].abs() < 1e-15);
        assert_eq!(v[1], -3.0);
    }

    #[test]
    fn mode_fields() {
        let m = mode_dynamics(&ball(1.0, 0.0), &st(&[1.0], &[0.3]), ContactMode::EMPTY).unwrap();
        assert_eq!(m.field.as_slice(), &[0.3, -1.0]);
        let m = mode_dynamics(&ball(1.0, 0.0), &st(&[0.0], &[0.0]), ContactMode::single(0)).unwrap();
        assert!(m.field.amax() < 1e-15);

        let pair = DecoupledPair::default();
        let s = st(&[0.0, 0.7], &[0.0, -0.2]);
        let free = mode_dynamics(&pair, &s, ContactMode::EMPTY).unwrap();
        let held = mode_dynamics(&pair, &s, ContactMode::single(0)).unwrap();
        assert_eq!(free.accel[1], held.accel[1]);
        assert_eq!(held.accel[0], 0.0);
    }

    #[test]
    fn redundant_constraints_are_rank_deficient() {
        struct Twice;
        impl ModelSpec for Twice {
            fn dof(&self) -> usize {
                1
            }
            fn constraint_count(&self) -> usize {
                2
            }
            fn mass(&self, _q: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::identity(1, 1)
            }
            fn effort(&self, _q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
                DVector::from_element(1, -1.0)
            }
            fn constraint(&self, _j: usize, q: &DVector<f64>) -> f64 {
                q[0]
            }
            fn restitution(&self, _j: usize, _q: &DVector<f64>, _v: &DVector<f64>) -> f64 {
                0.0
            }
        }
        let r = contact_force(&Twice, &st(&[0.0], &[0.0]), ContactMode::full(2));
        assert!(matches!(r, Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn select_mode_releases_pulling_constraint() {
        // Gravity pulls away from a ceiling: the contact cannot hold.
        let ceiling = crate::zoo::CeilingMass { gravity: 1.0, ceiling: 1.0, restitution: 0.0, mass: 1.0 };
        let q = DVector::from_element(1, 1.0);
        let v = DVector::from_element(1, 0.0);
        let mode = select_mode(&ceiling, &q, &v, ContactMode::single(0), &SolverConfig::default()).unwrap();
        assert_eq!(mode, ContactMode::EMPTY);
        let mode =
            select_mode(&ball(1.0, 0.0), &DVector::zeros(1), &v, ContactMode::single(0), &SolverConfig::default())
                .unwrap();
        assert_eq!(mode, ContactMode::single(0));
    }
}
