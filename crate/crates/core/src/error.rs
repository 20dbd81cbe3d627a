use thiserror::Error;

/// Failures raised by the cavity models, optimizers and simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CavityError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("geometry does not support a stable mode: {0}")]
    UnstableGeometry(String),

    #[error("mirror diameter {diameter} exceeds twice the radius of curvature {radius}")]
    InvalidCap { radius: f64, diameter: f64 },

    #[error("total round-trip loss is zero; decay rate and finesse are degenerate")]
    DegenerateCavity,

    #[error("intrinsic loss is zero; cooperativity is unbounded")]
    LosslessCavity,

    #[error("attempt period is zero")]
    ZeroAttemptPeriod,

    #[error("no cavity length satisfies the clipping threshold")]
    NoFeasibleLength,

    #[error("no feasible design found after {starts} starts")]
    NoFeasibleDesign { starts: usize },

    #[error("integrator step size underflow at t = {time}")]
    StepSizeUnderflow { time: f64 },

    #[error("quadrature did not converge (last change {change:e})")]
    QuadratureNotConverged { change: f64 },

    #[error("unknown quantity `{0}`")]
    UnknownQuantity(String),
}

impl CavityError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        CavityError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for signals that a requested design or geometry is physically infeasible
    /// (as opposed to malformed input or numerical breakdown).
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            CavityError::UnstableGeometry(_)
                | CavityError::InvalidCap { .. }
                | CavityError::NoFeasibleLength
                | CavityError::NoFeasibleDesign { .. }
                | CavityError::DegenerateCavity
                | CavityError::LosslessCavity
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            CavityError::StepSizeUnderflow { .. } | CavityError::QuadratureNotConverged { .. }
        )
    }
}

pub type Result<T, E = CavityError> = std::result::Result<T, E>;
