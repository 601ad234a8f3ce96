use thiserror::Error;

/// Failures raised while evaluating models, integrating flows, or assembling
/// sensitivities.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mass matrix is not symmetric positive-definite at the evaluated configuration")]
    DegenerateMass,

    #[error("constraint {} violated beyond tolerance: a = {value:e}", .constraint + 1)]
    Infeasible { constraint: usize, value: f64 },

    #[error("active constraint set is rank deficient (Delassus condition number {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("active constraint {} drifted to {value:e} at t = {t}", .constraint + 1)]
    DriftExceeded { constraint: usize, value: f64, t: f64 },

    #[error("integrator step underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("event time refinement did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error(
        "GrazingDetected: constraint {} reached at t = {t} with normal velocity {normal_velocity:e}", .constraint + 1
    )]
    GrazingDetected { t: f64, constraint: usize, normal_velocity: f64 },

    #[error("ZenoGuard: more than {max_events} events before t = {t}")]
    ZenoGuard { max_events: usize, t: f64 },

    #[error("saltation denominator Dh.F = {value:e} for constraint {} is below the grazing tolerance", .constraint + 1)]
    GrazingDenominator { constraint: usize, value: f64 },

    #[error("product-form and closed-form saltation matrices differ by {difference:e} for a model declared decoupled")]
    DecouplingViolated { difference: f64 },

    #[error("horizon {horizon} coincides with an event at t = {event_time}; the flow is not differentiable there")]
    TerminalAtEvent { horizon: f64, event_time: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

impl Error {
    /// Errors that mean the trajectory itself is inadmissible, as opposed to a
    /// bad model or configuration.
    pub fn is_admissibility(&self) -> bool {
        matches!(
            self,
            Error::GrazingDetected { .. }
                | Error::ZenoGuard { .. }
                | Error::GrazingDenominator { .. }
                | Error::TerminalAtEvent { .. }
                | Error::Infeasible { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
