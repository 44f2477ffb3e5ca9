use alloc::string::String;
use core::fmt;

use crate::numeric::SolveReport;

/// Errors raised by the solver stack.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Zero (or numerically negligible) pivot during factorization.
    SingularMatrix { column: usize },
    /// Newton update norm blew past the divergence guard.
    DivergenceDetected { update_norm: f64 },
    /// Newton iterations exhausted. `time` is set when raised by a transient step.
    NoConvergence { report: SolveReport, time: Option<f64> },
    NonPositiveConductance { value: f64 },
    MissingBranch { element: String },
    InvalidInductance { reason: &'static str },
    /// PQ/PV model evaluated at |V|² at or below the collapse threshold.
    VoltageCollapse { element: String, magnitude_sq: f64 },
    InvalidParams { reason: String },
    DimensionMismatch { expected: usize, found: usize },
    /// Unknown layout is not a bijection between unknowns and owners.
    UnownedUnknown { index: usize },
    UnreferencedNode { node: String },
    /// Element only has a phasor-domain model (PQ load, PV generator).
    SteadyStateOnly { element: String },
    /// Steady-state solve landed on generating (negative torque) operation.
    NegativeTorque { element: String, torque: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::SingularMatrix { column } => {
                write!(f, "singular matrix: no usable pivot in column {column}")
            }
            Error::DivergenceDetected { update_norm } => {
                write!(f, "newton iteration diverged (update norm {update_norm:e})")
            }
            Error::NoConvergence { report, time } => {
                write!(
                    f,
                    "no convergence after {} iterations (update {:e}, residual {:e})",
                    report.iterations_used, report.final_update_norm, report.final_residual_norm
                )?;
                if let Some(t) = time {
                    write!(f, " at t = {t} s")?;
                }
                Ok(())
            }
            Error::NonPositiveConductance { value } => {
                write!(f, "conductance must be positive, got {value}")
            }
            Error::MissingBranch { element } => {
                write!(f, "element `{element}` has no branch-current unknown")
            }
            Error::InvalidInductance { reason } => write!(f, "invalid inductance matrix: {reason}"),
            Error::VoltageCollapse { element, magnitude_sq } => write!(
                f,
                "voltage collapse at `{element}` (|V|^2 = {magnitude_sq:e})"
            ),
            Error::InvalidParams { reason } => write!(f, "invalid parameters: {reason}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::UnownedUnknown { index } => {
                write!(f, "unknown {index} has no unique owner in the layout")
            }
            Error::UnreferencedNode { node } => {
                write!(f, "node `{node}` is not connected to any element")
            }
            Error::SteadyStateOnly { element } => write!(
                f,
                "element `{element}` is a power-flow model with no time-domain form"
            ),
            Error::NegativeTorque { element, torque } => write!(
                f,
                "motor `{element}` settled at negative torque {torque} N*m; generating operation is not modeled"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
