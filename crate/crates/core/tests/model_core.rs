use impactflow::model::{active_set, coriolis, guard, mass_partials};
use impactflow::zoo::{BouncingBall, DecoupledPair};
use impactflow::{ContactMode, Decoupling, Error, ModelSpec, SolverConfig, State};
use nalgebra::{DMatrix, DVector};

/// d = 1 with `M(q) = q² + 1`, no analytic partials.
struct QuadraticMass;

impl ModelSpec for QuadraticMass {
    fn dof(&self) -> usize {
        1
    }
    fn constraint_count(&self) -> usize {
        1
    }
    fn mass(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, q[0] * q[0] + 1.0)
    }
    fn effort(&self, _q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn constraint(&self, _j: usize, q: &DVector<f64>) -> f64 {
        q[0]
    }
    fn restitution(&self, _j: usize, _q: &DVector<f64>, _v: &DVector<f64>) -> f64 {
        0.0
    }
}

/// Two masses with configuration-dependent inertia, one per block:
/// `M = diag(1 + q₁², 2 + sin q₂)`; second floor raised to 0.3.
struct BlockMasses;

impl ModelSpec for BlockMasses {
    fn dof(&self) -> usize {
        2
    }
    fn constraint_count(&self) -> usize {
        2
    }
    fn mass(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 + q[0] * q[0], 2.0 + q[1].sin()]))
    }
    fn effort(&self, _q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![-1.0, -1.0])
    }
    fn constraint(&self, j: usize, q: &DVector<f64>) -> f64 {
        if j == 0 {
            q[0]
        } else {
            q[1] - 0.3
        }
    }
    fn restitution(&self, _j: usize, _q: &DVector<f64>, _v: &DVector<f64>) -> f64 {
        0.0
    }
    fn decoupling(&self) -> Option<Decoupling> {
        Some(Decoupling { body: vec![], limbs: vec![vec![0], vec![1]] })
    }
}

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(x)
}

#[test]
fn coriolis_vanishes_for_constant_mass() {
    let pair = DecoupledPair::default();
    let c = coriolis(&pair, &v(&[0.3, -2.0]), &v(&[5.0, 7.0])).unwrap();
    assert_eq!(c, DMatrix::zeros(2, 2));
}

#[test]
fn coriolis_of_quadratic_mass() {
    // c = -½ (∂M/∂q) v = -q v.
    let c = coriolis(&QuadraticMass, &v(&[2.0]), &v(&[3.0])).unwrap();
    assert!((c[(0, 0)] + 6.0).abs() < 1e-8, "{c}");
}

#[test]
fn coriolis_block_diagonal_for_decoupled_inertia() {
    let c = coriolis(&BlockMasses, &v(&[0.7, 0.4]), &v(&[1.3, -0.8])).unwrap();
    assert_eq!(c[(0, 1)], 0.0);
    assert_eq!(c[(1, 0)], 0.0);
    // c₁₁ = -q₁ q̇₁, c₂₂ = -½ cos(q₂) q̇₂.
    assert!((c[(0, 0)] + 0.7 * 1.3).abs() < 1e-8);
    assert!((c[(1, 1)] - 0.5 * 0.4f64.cos() * 0.8).abs() < 1e-8);
}

#[test]
fn guard_values_and_gradients() {
    let ball = BouncingBall::default();
    let (h, dh) = guard(&ball, 0, &State::from_slices(0.0, &[1.0], &[-2.0], ContactMode::EMPTY));
    assert_eq!((h, dh.as_slice()), (1.0, &[1.0, 0.0][..]));
    let (h, dh) = guard(&ball, 0, &State::from_slices(0.0, &[0.0], &[-2.0], ContactMode::EMPTY));
    assert_eq!((h, dh.as_slice()), (0.0, &[1.0, 0.0][..]));

    let (h, dh) = guard(&BlockMasses, 1, &State::from_slices(0.0, &[1.0, 0.3], &[0.0, 0.0], ContactMode::EMPTY));
    assert!(h.abs() < 1e-15);
    assert!((dh - v(&[0.0, 1.0, 0.0, 0.0])).amax() < 1e-9);
}

#[test]
fn active_set_examples() {
    let ball = BouncingBall::default();
    assert_eq!(active_set(&ball, &v(&[0.0]), 1e-9).unwrap(), ContactMode::single(0));
    assert_eq!(active_set(&ball, &v(&[1.0]), 1e-9).unwrap(), ContactMode::EMPTY);
    let pair = DecoupledPair::default();
    assert_eq!(active_set(&pair, &v(&[0.0, 0.5]), 1e-9).unwrap(), ContactMode::single(0));
    assert!(matches!(active_set(&ball, &v(&[-1e-6]), 1e-9), Err(Error::Infeasible { constraint: 0, .. })));
}

#[test]
fn numerical_mass_partials_match_closed_form() {
    let partials = mass_partials(&BlockMasses, &v(&[0.7, 0.4]));
    assert!((partials[0][(0, 0)] - 1.4).abs() < 1e-8);
    assert!((partials[1][(1, 1)] - 0.4f64.cos()).abs() < 1e-8);
    assert_eq!(partials[0][(1, 1)], 0.0);
}

#[test]
fn degenerate_mass_is_reported() {
    struct Flat;
    impl ModelSpec for Flat {
        fn dof(&self) -> usize {
            1
        }
        fn constraint_count(&self) -> usize {
            0
        }
        fn mass(&self, _q: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::zeros(1, 1)
        }
        fn effort(&self, _q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(1)
        }
        fn constraint(&self, _j: usize, _q: &DVector<f64>) -> f64 {
            0.0
        }
        fn restitution(&self, _j: usize, _q: &DVector<f64>, _v: &DVector<f64>) -> f64 {
            0.0
        }
    }
    assert_eq!(coriolis(&Flat, &v(&[0.0]), &v(&[1.0])), Err(Error::DegenerateMass));
}

#[test]
fn config_rejects_non_positive_tolerances() {
    assert!(SolverConfig::default().validate().is_ok());
    let bad = SolverConfig { tol_event: 0.0, ..SolverConfig::default() };
    assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
    let bad = SolverConfig { max_events: 0, ..SolverConfig::default() };
    assert!(bad.validate().is_err());
}
