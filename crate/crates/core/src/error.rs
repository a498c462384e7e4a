use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Axial coordinate outside the layer stack.
    OutOfDomain { x: f64, total: f64 },
    /// Compression must be non-negative.
    NegativeCompression(f64),
    /// Stretch at or below zero makes the tangent modulus singular.
    SingularStretch(f64),
    /// A parameter or configuration value violates its invariant.
    InvalidParameter(String),
    /// A contact point does not lie on the beam.
    ContactOutsideBeam { station: f64, start: f64, end: f64 },
    /// A boundary condition references a node that does not exist.
    InvalidBoundary(String),
    /// Newton-Raphson did not reach the residual tolerance.
    SolverDiverged {
        iterations: usize,
        residuals: Vec<f64>,
    },
    /// The requested input increment would pull the needle back.
    Retraction(f64),
    /// Static solve failed even after bisecting the input step.
    PlantFault(String),
    /// A probe solve failed while building a Jacobian.
    JacobianFailure(String),
    /// The open-loop replay missed the target it was generated for.
    PathGeneration(String),
    /// Metrics were requested for a run without any logged steps.
    EmptyRecord,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::OutOfDomain { x, total } => {
                write!(f, "axial position {x} mm outside tissue [0, {total}] mm")
            }
            Error::NegativeCompression(c) => write!(f, "negative compression {c} mm"),
            Error::SingularStretch(l) => write!(f, "stretch {l} is not positive"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::ContactOutsideBeam {
                station,
                start,
                end,
            } => write!(
                f,
                "contact at {station} mm lies outside the beam [{start}, {end}] mm"
            ),
            Error::InvalidBoundary(msg) => write!(f, "invalid boundary condition: {msg}"),
            Error::SolverDiverged {
                iterations,
                residuals,
            } => write!(
                f,
                "newton solver did not converge after {iterations} iterations (last residual {:e})",
                residuals.last().copied().unwrap_or(f64::NAN)
            ),
            Error::Retraction(dx) => write!(f, "needle retraction of {dx} mm is not supported"),
            Error::PlantFault(msg) => write!(f, "plant fault: {msg}"),
            Error::JacobianFailure(msg) => write!(f, "jacobian probe failed: {msg}"),
            Error::PathGeneration(msg) => write!(f, "path generation failed: {msg}"),
            Error::EmptyRecord => write!(f, "run record has no steps"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
