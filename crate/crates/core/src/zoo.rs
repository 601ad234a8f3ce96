//! Reference models with known closed-form behaviour.
//!
//! All parameters are order-one dimensionless values. Each model documents
//! its coordinates, constraints and defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{ContactMode, Decoupling, ModelSpec, State};

/// Unit-free point mass above a floor: `q` is the height, `a(q) = q`,
/// constant gravity. Defaults: `m = 1`, `g = 1`, `γ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BouncingBall {
    pub mass: f64,
    pub gravity: f64,
    pub restitution: f64,
}

impl Default for BouncingBall {
    fn default() -> Self {
        BouncingBall { mass: 1.0, gravity: 1.0, restitution: 0.0 }
    }
}

impl ModelSpec for BouncingBall {
    fn dof(&self) -> usize {
        1
    }
    fn constraint_count(&self) -> usize {
        1
    }
    fn mass(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.mass)
    }
    fn effort(&self, _q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, -self.mass * self.gravity)
    }
    fn constraint(&self, _j: usize, q: &DVector<f64>) -> f64 {
        q[0]
    }
    fn constraint_gradient(&self, _j: usize, _q: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, 1.0)
    }
    fn restitution(&self, _j: usize, _q: &DVector<f64>, _v: &DVector<f64>) -> f64 {
        self.restitution
    }
    fn decoupling(&self) -> Option<Decoupling> {
        Some(Decoupling { body: vec![], limbs: vec![vec![0]] })
    }
    fn mass_partials(&self, _q: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(1, 1)])
    }
    fn constraint_curvature(&self, _j: usize, _q: &DVector<f64>, _v: &DVector<f64>) -> Option<f64> {
        Some(0.0)
    }
}

/// Point mass below a ceiling: `a(q) = q_max - q`, gravity pulling away from
/// the constraint. Defaults: `m = 1`, `g = 1`, `q_max = 1`, `γ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CeilingMass {
    pub mass: f64,
    pub gravity: f64,
    pub ceiling: f64,
    pub restitution: f64,
}

impl Default for CeilingMass {
    fn default() -> Self {
        CeilingMass { mass: 1.0, gravity: 1.0, ceiling: 1.0, restitution: 0.0 }
    }
}

impl ModelSpec for CeilingMass {
    fn dof(&self) -> usize {
        1
    }
    fn constraint_count(&self) -> usize {
        1
    }
    fn mass(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.mass)
    }
    fn effort(&self, _q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, -self.mass * self.gravity)
    }
    fn constraint(&self, _j: usize, q: &DVector<f64>) -> f64 {
        self.ceiling - q[0]
    }
    fn constraint_gradient(&self, _j: usize, _q: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, -1.0)
    }
    fn restitution(&self, _j: usize, _q: &DVector<f64>, _v: &DVector<f64>) -> f64 {
        self.restitution
    }
    fn decoupling(&self) -> Option<Decoupling> {
        Some(Decoupling { body: vec![], limbs: vec![vec![0]] })
    }
    fn mass_partials(&self, _q: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(1, 1)])
    }
    fn constraint_curvature(&self, _j: usize, _q: &DVector<f64>, _v: &DVector<f64>) -> Option<f64> {
        Some(0.0)
    }
}

/// Two point masses falling onto their own floors, `a_j(q) = q_j`.
///
/// `coupling` injects an off-diagonal mass entry; any nonzero value breaks
/// limb decoupling while keeping the declared partition, which is how the
/// validators and the word-independence check are exercised on a coupled
/// system. Defaults: unit masses, `g = 1`, plastic impacts, no coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoupledPair {
    pub masses: [f64; 2],
    pub gravity: [f64; 2],
    pub restitution: [f64; 2],
    pub coupling: f64,
}

impl Default for DecoupledPair {
    fn default() -> Self {
        DecoupledPair { masses: [1.0, 1.0], gravity: [1.0, 1.0], restitution: [0.0, 0.0], coupling: 0.0 }
    }
}

impl ModelSpec for DecoupledPair {
    fn dof(&self) -> usize {
        2
    }
    fn constraint_count(&self) -> usize {
        2
    }
    fn mass(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[self.masses[0], self.coupling, self.coupling, self.masses[1]])
    }
    fn effort(&self, _q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![-self.masses[0] * self.gravity[0], -self.masses[1] * self.gravity[1]])
    }
    fn constraint(&self, j: usize, q: &DVector<f64>) -> f64 {
        q[j]
    }
    fn constraint_gradient(&self, j: usize, _q: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(2);
        g[j] = 1.0;
        g
    }
    fn restitution(&self, j: usize, _q: &DVector<f64>, _v: &DVector<f64>) -> f64 {
        self.restitution[j]
    }
    fn decoupling(&self) -> Option<Decoupling> {
        Some(Decoupling { body: vec![], limbs: vec![vec![0], vec![1]] })
    }
    fn mass_partials(&self, _q: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(2, 2); 2])
    }
    fn constraint_curvature(&self, _j: usize, _q: &DVector<f64>, _v: &DVector<f64>) -> Option<f64> {
        Some(0.0)
    }
}

/// A vertical body `z` carrying `n` toe masses `y_j` on spring-dampers, each
/// toe with its own floor `a_j(q) = y_j`. Coordinates: `q = (z, y_1, …, y_n)`.
///
/// The body only feels the sum of the limb forces, so the model satisfies
/// every decoupling clause for any `n`. Used for simultaneous-impact sets
/// larger than two.
#[derive(Debug, Clone, PartialEq)]
pub struct SpringLimbs {
    pub limbs: usize,
    pub body_mass: f64,
    pub toe_mass: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub rest_length: f64,
    pub gravity: f64,
    pub restitution: f64,
}

impl SpringLimbs {
    pub fn new(limbs: usize) -> Self {
        SpringLimbs {
            limbs,
            body_mass: 1.0,
            toe_mass: 0.1,
            stiffness: 20.0,
            damping: 0.5,
            rest_length: 0.5,
            gravity: 1.0,
            restitution: 0.0,
        }
    }

    /// Body at rest at height `z`, every toe hanging at spring rest length.
    pub fn hanging(&self, z: f64) -> State {
        let mut q = vec![z - self.rest_length; self.limbs + 1];
        q[0] = z;
        State::from_slices(0.0, &q, &vec![0.0; self.limbs + 1], ContactMode::EMPTY)
    }
}

impl ModelSpec for SpringLimbs {
    fn dof(&self) -> usize {
        self.limbs + 1
    }
    fn constraint_count(&self) -> usize {
        self.limbs
    }
    fn mass(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        let mut diag = DVector::from_element(self.limbs + 1, self.toe_mass);
        diag[0] = self.body_mass;
        DMatrix::from_diagonal(&diag)
    }
    fn effort(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut f = DVector::zeros(self.limbs + 1);
        f[0] = -self.body_mass * self.gravity;
        for j in 1..=self.limbs {
            let stretch = q[j] - (q[0] - self.rest_length);
            let rate = v[j] - v[0];
            let tension = self.stiffness * stretch + self.damping * rate;
            f[j] = -tension - self.toe_mass * self.gravity;
            f[0] += tension;
        }
        f
    }
    fn constraint(&self, j: usize, q: &DVector<f64>) -> f64 {
        q[j + 1]
    }
    fn constraint_gradient(&self, j: usize, _q: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.limbs + 1);
        g[j + 1] = 1.0;
        g
    }
    fn restitution(&self, _j: usize, _q: &DVector<f64>, _v: &DVector<f64>) -> f64 {
        self.restitution
    }
    fn decoupling(&self) -> Option<Decoupling> {
        Some(Decoupling { body: vec![0], limbs: (1..=self.limbs).map(|j| vec![j]).collect() })
    }
    fn mass_partials(&self, _q: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(self.limbs + 1, self.limbs + 1); self.limbs + 1])
    }
    fn constraint_curvature(&self, _j: usize, _q: &DVector<f64>, _v: &DVector<f64>) -> Option<f64> {
        Some(0.0)
    }
}

const LEG_SIGN: [f64; 2] = [1.0, -1.0];

/// Planar trotting body `(x, z, θ)` with two toe masses hung from the hips
/// by spring-dampers. Coordinates:
/// `q = (x, z, θ, y_front, y_rear)`, constraints `a_j = y_j` (toe height).
///
/// Inertia is block diagonal, each toe feels only its own spring, and the
/// body force is a sum of per-leg terms, so the limbs are decoupled through
/// the body. The hips sit `l_front` ahead of and `l_rear` behind the centre
/// of mass. Defaults: `m = 1`, `I = 0.1`, `l_front = 0.6`, `l_rear = 0.4`,
/// `m_toe = 0.1`, `k = 20`, `b = 0.5`, leg rest length `0.5`, `g = 1`,
/// plastic toes.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTrot {
    pub body_mass: f64,
    pub pitch_inertia: f64,
    /// Distance of the front and rear hip from the centre of mass.
    pub hip_offsets: [f64; 2],
    pub toe_mass: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub rest_length: f64,
    pub gravity: f64,
    pub restitution: f64,
    /// Hip height the pitch family starts from.
    pub initial_height: f64,
}

impl Default for SoftTrot {
    fn default() -> Self {
        SoftTrot {
            body_mass: 1.0,
            pitch_inertia: 0.1,
            hip_offsets: [0.6, 0.4],
            toe_mass: 0.1,
            stiffness: 20.0,
            damping: 0.5,
            rest_length: 0.5,
            gravity: 1.0,
            restitution: 0.0,
            initial_height: 1.0,
        }
    }
}

impl SoftTrot {
    /// Spring rest height of toe `j` and its rate.
    fn toe_target(&self, j: usize, q: &DVector<f64>, v: &DVector<f64>) -> (f64, f64) {
        let s = LEG_SIGN[j] * self.hip_offsets[j];
        let (sin, cos) = q[2].sin_cos();
        (q[1] + s * sin - self.rest_length, v[1] + s * cos * v[2])
    }

    /// Body at rest at `initial_height` pitched by `theta`, toes hanging at
    /// spring rest length.
    pub fn pitched(&self, theta: f64) -> State {
        let mut q = DVector::from_vec(vec![0.0, self.initial_height, theta, 0.0, 0.0]);
        let v = DVector::zeros(5);
        for j in 0..2 {
            q[3 + j] = self.toe_target(j, &q, &v).0;
        }
        State::new(0.0, q, v, ContactMode::EMPTY)
    }
}

impl ModelSpec for SoftTrot {
    fn dof(&self) -> usize {
        5
    }
    fn constraint_count(&self) -> usize {
        2
    }
    fn mass(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![
            self.body_mass,
            self.body_mass,
            self.pitch_inertia,
            self.toe_mass,
            self.toe_mass,
        ]))
    }
    fn effort(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut f = DVector::zeros(5);
        f[1] = -self.body_mass * self.gravity;
        let cos = q[2].cos();
        for j in 0..2 {
            let (target, rate) = self.toe_target(j, q, v);
            let tension = self.stiffness * (q[3 + j] - target) + self.damping * (v[3 + j] - rate);
            f[3 + j] = -tension - self.toe_mass * self.gravity;
            f[1] += tension;
            f[2] += tension * LEG_SIGN[j] * self.hip_offsets[j] * cos;
        }
        f
    }
    fn constraint(&self, j: usize, q: &DVector<f64>) -> f64 {
        q[3 + j]
    }
    fn constraint_gradient(&self, j: usize, _q: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(5);
        g[3 + j] = 1.0;
        g
    }
    fn restitution(&self, _j: usize, _q: &DVector<f64>, _v: &DVector<f64>) -> f64 {
        self.restitution
    }
    fn decoupling(&self) -> Option<Decoupling> {
        Some(Decoupling { body: vec![0, 1, 2], limbs: vec![vec![3], vec![4]] })
    }
    fn mass_partials(&self, _q: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(5, 5); 5])
    }
    fn constraint_curvature(&self, _j: usize, _q: &DVector<f64>, _v: &DVector<f64>) -> Option<f64> {
        Some(0.0)
    }
}

/// Planar rigid body with two rigid legs, in hip-height coordinates
/// `q = (x, h_front, h_rear)`. The hips sit at `±l` along the body, the
/// centre of mass a distance `c` below their midpoint, and the legs hang a
/// fixed length `L` below the hips: `a_j = h_j - L`.
///
/// Pitch is `θ = asin((h_front - h_rear) / 2l)`. Because the centre of mass
/// sits off the hip line, the inertia couples `x` with both hip heights, so
/// the declared body/leg partition fails block-diagonality. Defaults:
/// `m = 1`, `I = 0.05`, `l = 0.5`, `c = 0.2`, `L = 0.5`, `g = 1`, `e = 0.5`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTrot {
    pub body_mass: f64,
    pub pitch_inertia: f64,
    pub half_length: f64,
    pub com_offset: f64,
    pub leg_length: f64,
    pub gravity: f64,
    pub restitution: f64,
    pub initial_height: f64,
}

impl Default for RigidTrot {
    fn default() -> Self {
        RigidTrot {
            body_mass: 1.0,
            pitch_inertia: 0.05,
            half_length: 0.5,
            com_offset: 0.2,
            leg_length: 0.5,
            gravity: 1.0,
            restitution: 0.5,
            initial_height: 0.8,
        }
    }
}

impl RigidTrot {
    /// Rows: `∂x_c/∂q`, `∂z_c/∂q`, `∂θ/∂q`.
    fn kinematic_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let l2 = 2.0 * self.half_length;
        let s = (q[1] - q[2]) / l2;
        let cos = (1.0 - s * s).sqrt();
        let c = self.com_offset;
        let tilt = c * s / (l2 * cos);
        DMatrix::from_row_slice(
            3,
            3,
            &[1.0, c / l2, -c / l2, 0.0, 0.5 + tilt, 0.5 - tilt, 0.0, 1.0 / (l2 * cos), -1.0 / (l2 * cos)],
        )
    }

    pub fn pitch(&self, q: &DVector<f64>) -> f64 {
        ((q[1] - q[2]) / (2.0 * self.half_length)).asin()
    }

    pub fn pitch_rate(&self, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (self.kinematic_jacobian(q).row(2) * v)[0]
    }

    /// Body at rest with hip midpoint at `initial_height`, pitched by `theta`.
    pub fn pitched(&self, theta: f64) -> State {
        let dz = self.half_length * theta.sin();
        State::from_slices(
            0.0,
            &[0.0, self.initial_height + dz, self.initial_height - dz],
            &[0.0, 0.0, 0.0],
            ContactMode::EMPTY,
        )
    }
}

impl ModelSpec for RigidTrot {
    fn dof(&self) -> usize {
        3
    }
    fn constraint_count(&self) -> usize {
        2
    }
    fn mass(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let jac = self.kinematic_jacobian(q);
        let inertia =
            DMatrix::from_diagonal(&DVector::from_vec(vec![self.body_mass, self.body_mass, self.pitch_inertia]));
        jac.transpose() * inertia * jac
    }
    fn effort(&self, q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        let jac = self.kinematic_jacobian(q);
        jac.row(1).transpose() * (-self.body_mass * self.gravity)
    }
    fn constraint(&self, j: usize, q: &DVector<f64>) -> f64 {
        q[1 + j] - self.leg_length
    }
    fn constraint_gradient(&self, j: usize, _q: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(3);
        g[1 + j] = 1.0;
        g
    }
    fn restitution(&self, _j: usize, _q: &DVector<f64>, _v: &DVector<f64>) -> f64 {
        self.restitution
    }
    fn decoupling(&self) -> Option<Decoupling> {
        Some(Decoupling { body: vec![0], limbs: vec![vec![1], vec![2]] })
    }
    fn constraint_curvature(&self, _j: usize, _q: &DVector<f64>, _v: &DVector<f64>) -> Option<f64> {
        Some(0.0)
    }
}

/// One-parameter family of initial conditions a zoo entry can be swept over.
#[derive(Clone)]
pub struct Family {
    pub name: &'static str,
    build: Arc<dyn Fn(f64) -> State + Send + Sync>,
}

impl Family {
    fn new(name: &'static str, build: impl Fn(f64) -> State + Send + Sync + 'static) -> Self {
        Family { name, build: Arc::new(build) }
    }

    pub fn at(&self, value: f64) -> State {
        (self.build)(value)
    }
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Family").field("name", &self.name).finish()
    }
}

/// A named reference model with canonical initial states.
#[derive(Clone)]
pub struct ZooEntry {
    pub name: &'static str,
    pub model: Arc<dyn ModelSpec>,
    /// Named canonical initial states; the first is the default.
    pub initial: Vec<(&'static str, State)>,
    pub family: Family,
    /// Whether the model is expected to satisfy limb decoupling.
    pub decoupled: bool,
    pub notes: &'static str,
}

impl fmt::Debug for ZooEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ZooEntry")
            .field("name", &self.name)
            .field("initial", &self.initial)
            .field("family", &self.family)
            .finish()
    }
}

pub const ZOO_NAMES: [&str; 5] = ["bouncing-ball", "ceiling-mass", "decoupled-pair", "soft-trot", "rigid-trot"];

/// The five reference entries with default parameters.
pub fn zoo() -> Vec<ZooEntry> {
    ZOO_NAMES.iter().map(|name| entry(name, &BTreeMap::new()).expect("default zoo parameters are valid")).collect()
}

/// Parameter overrides accepted by `entry`, per model.
pub fn parameter_names(name: &str) -> Option<&'static [&'static str]> {
    Some(match name {
        "bouncing-ball" => &["mass", "gravity", "restitution"],
        "ceiling-mass" => &["mass", "gravity", "ceiling", "restitution"],
        "decoupled-pair" => {
            &["mass_1", "mass_2", "gravity", "restitution", "restitution_1", "restitution_2", "coupling"]
        }
        "soft-trot" => &[
            "body_mass",
            "pitch_inertia",
            "front_offset",
            "rear_offset",
            "toe_mass",
            "stiffness",
            "damping",
            "rest_length",
            "gravity",
            "restitution",
            "initial_height",
        ],
        "rigid-trot" => &[
            "body_mass",
            "pitch_inertia",
            "half_length",
            "com_offset",
            "leg_length",
            "gravity",
            "restitution",
            "initial_height",
        ],
        _ => return None,
    })
}

/// Build a zoo entry by name, applying parameter overrides.
pub fn entry(name: &str, params: &BTreeMap<String, f64>) -> Result<ZooEntry> {
    let allowed = parameter_names(name).ok_or_else(|| Error::InvalidConfig(format!("unknown model `{name}`")))?;
    if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::InvalidConfig(format!("model `{name}` has no parameter `{bad}`")));
    }
    let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);

    let entry = match name {
        "bouncing-ball" => {
            let d = BouncingBall::default();
            let ball = BouncingBall {
                mass: get("mass", d.mass),
                gravity: get("gravity", d.gravity),
                restitution: get("restitution", d.restitution),
            };
            ZooEntry {
                name: "bouncing-ball",
                model: Arc::new(ball),
                initial: vec![
                    ("drop", State::from_slices(0.0, &[1.0], &[0.0], ContactMode::EMPTY)),
                    ("rest", State::from_slices(0.0, &[0.0], &[0.0], ContactMode::single(0))),
                ],
                family: Family::new("height", |h| State::from_slices(0.0, &[h], &[0.0], ContactMode::EMPTY)),
                decoupled: true,
                notes: "Dropped from rest at height h with g = 1 the ball lands at t = sqrt(2h) with speed sqrt(2h).",
            }
        }
        "ceiling-mass" => {
            let d = CeilingMass::default();
            let mass = CeilingMass {
                mass: get("mass", d.mass),
                gravity: get("gravity", d.gravity),
                ceiling: get("ceiling", d.ceiling),
                restitution: get("restitution", d.restitution),
            };
            let (g, top) = (mass.gravity, mass.ceiling);
            ZooEntry {
                name: "ceiling-mass",
                model: Arc::new(mass),
                initial: vec![
                    ("graze", State::from_slices(0.0, &[top - 0.5 / g], &[1.0], ContactMode::EMPTY)),
                    ("below", State::from_slices(0.0, &[top - 1.0 / g], &[1.0], ContactMode::EMPTY)),
                ],
                // Launch speed 1 from below; `value` is the unconstrained apex
                // minus the ceiling (positive means the ceiling is hit).
                family: Family::new("apex", move |delta| {
                    State::from_slices(0.0, &[top + delta - 0.5 / g], &[1.0], ContactMode::EMPTY)
                }),
                decoupled: true,
                notes: "Launched at speed v0 from q0 the unconstrained apex is q0 + v0^2/2g; an apex exactly at the ceiling grazes.",
            }
        }
        "decoupled-pair" => {
            let d = DecoupledPair::default();
            let common = get("restitution", d.restitution[0]);
            let pair = DecoupledPair {
                masses: [get("mass_1", d.masses[0]), get("mass_2", d.masses[1])],
                gravity: [get("gravity", d.gravity[0]), get("gravity", d.gravity[1])],
                restitution: [get("restitution_1", common), get("restitution_2", common)],
                coupling: get("coupling", d.coupling),
            };
            ZooEntry {
                name: "decoupled-pair",
                model: Arc::new(pair),
                initial: vec![
                    ("staggered", State::from_slices(0.0, &[1.0, 1.2], &[0.0, 0.0], ContactMode::EMPTY)),
                    ("level", State::from_slices(0.0, &[1.0, 1.0], &[0.0, 0.0], ContactMode::EMPTY)),
                ],
                family: Family::new("offset", |dh| {
                    State::from_slices(0.0, &[1.0, 1.0 + dh], &[0.0, 0.0], ContactMode::EMPTY)
                }),
                decoupled: true,
                notes: "Equal heights give one simultaneous activation of both constraints; unequal heights activate the lower mass first.",
            }
        }
        "soft-trot" => {
            let d = SoftTrot::default();
            let trot = SoftTrot {
                body_mass: get("body_mass", d.body_mass),
                pitch_inertia: get("pitch_inertia", d.pitch_inertia),
                hip_offsets: [get("front_offset", d.hip_offsets[0]), get("rear_offset", d.hip_offsets[1])],
                toe_mass: get("toe_mass", d.toe_mass),
                stiffness: get("stiffness", d.stiffness),
                damping: get("damping", d.damping),
                rest_length: get("rest_length", d.rest_length),
                gravity: get("gravity", d.gravity),
                restitution: get("restitution", d.restitution),
                initial_height: get("initial_height", d.initial_height),
            };
            let family_model = trot.clone();
            ZooEntry {
                name: "soft-trot",
                initial: vec![("level", trot.pitched(0.0)), ("pitched", trot.pitched(0.05))],
                model: Arc::new(trot),
                family: Family::new("pitch", move |theta| family_model.pitched(theta)),
                decoupled: true,
                notes: "Level drops touch both toes down together; any pitch orders the touchdowns, yet outcomes stay smooth in the pitch.",
            }
        }
        "rigid-trot" => {
            let d = RigidTrot::default();
            let trot = RigidTrot {
                body_mass: get("body_mass", d.body_mass),
                pitch_inertia: get("pitch_inertia", d.pitch_inertia),
                half_length: get("half_length", d.half_length),
                com_offset: get("com_offset", d.com_offset),
                leg_length: get("leg_length", d.leg_length),
                gravity: get("gravity", d.gravity),
                restitution: get("restitution", d.restitution),
                initial_height: get("initial_height", d.initial_height),
            };
            let family_model = trot.clone();
            ZooEntry {
                name: "rigid-trot",
                initial: vec![("level", trot.pitched(0.0)), ("pitched", trot.pitched(0.05))],
                model: Arc::new(trot),
                family: Family::new("pitch", move |theta| family_model.pitched(theta)),
                decoupled: false,
                notes: "A level landing has zero post-impact pitch rate; any pitch gives a pitch rate bounded away from zero and a different forward velocity.",
            }
        }
        _ => unreachable!("checked by parameter_names"),
    };
    Ok(entry)
}

impl ZooEntry {
    pub fn initial_state(&self, name: &str) -> Option<&State> {
        self.initial.iter().find(|(n, _)| *n == name).map(|(_, s)| s)
    }

    pub fn default_initial(&self) -> &State {
        &self.initial[0].1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zoo_has_five_named_entries() {
        let names: Vec<_> = zoo().iter().map(|e| e.name).collect();
        assert_eq!(names, ZOO_NAMES);
    }

    #[test]
    fn unknown_names_and_parameters_are_rejected() {
        assert!(entry("pogo-stick", &BTreeMap::new()).is_err());
        let mut params = BTreeMap::new();
        params.insert("stiffness".to_string(), 3.0);
        assert!(entry("bouncing-ball", &params).is_err());
        assert!(entry("soft-trot", &params).is_ok());
    }

    #[test]
    fn rigid_trot_mass_couples_forward_motion() {
        let trot = RigidTrot::default();
        let q = trot.pitched(0.0).q;
        let m = trot.mass(&q);
        assert!(m[(0, 1)].abs() > 0.1);
        assert!((&m - m.transpose()).amax() < 1e-15);
        assert!(trot.pitch(&trot.pitched(0.03).q) - 0.03 < 1e-14);
    }

    #[test]
    fn soft_trot_pitch_family_hangs_toes_at_rest() {
        let trot = SoftTrot::default();
        let s = trot.pitched(0.1);
        let f = trot.effort(&s.q, &s.v);
        assert!((f[3] + trot.toe_mass * trot.gravity).abs() < 1e-14);
        assert!((f[1] + trot.body_mass * trot.gravity).abs() < 1e-14);
    }
}
