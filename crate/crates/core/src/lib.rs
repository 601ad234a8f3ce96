//! Event-driven simulation of mechanical systems with unilateral contact
//! constraints, and first-order sensitivities of their trajectories through
//! contact events via saltation matrices.
//!
//! A model implements [`ModelSpec`]. [`simulate`] produces a hybrid
//! [`Trajectory`] together with its [`Word`], the sequence of contact modes
//! visited. [`trajectory_derivative`] chains per-mode flow Jacobians with a
//! saltation matrix at each event.

pub mod dynamics;
pub mod error;
pub mod hybrid;
pub mod integrator;
pub mod model;
pub mod numdiff;
pub mod parallel;
pub mod sensitivity;
pub mod sweep;
pub mod validate;
pub mod zoo;

pub use dynamics::{contact_force, mode_dynamics, reset_velocity, select_mode, vector_field, ModeDynamics};
pub use error::{Error, Result};
pub use hybrid::{
    classify_event, flow_mode, refine_event_time, simulate, simulate_sampled, Admissibility, Event, EventKind,
    Trajectory, Trigger, Word,
};
pub use model::{ContactMode, Decoupling, ModelSpec, SolverConfig, State};
pub use parallel::Execution;
pub use sensitivity::{
    activation_time_gradient, deactivation_saltation, finite_difference_derivative, mode_jacobian, reset_jacobian,
    saltation_event, trajectory_derivative, trajectory_derivative_from, word_independence_check, Comparison,
    SaltationMatrix, SensitivityResult,
};
pub use sweep::{sweep, SweepResult, SweepSpec, SweepTarget};
pub use validate::{validate_entry, validate_model, ValidationReport};
pub use zoo::{entry, zoo, ZooEntry};
