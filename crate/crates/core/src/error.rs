use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {context} at component {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("delay {index} evaluated to {value}, delays must be nonnegative")]
    NegativeDelay { index: usize, value: f64 },

    #[error("singular Jacobian (condition estimate {condition:.3e})")]
    SingularJacobian { condition: f64 },

    #[error(
        "{solver} did not converge after {iterations} iterations (last residual {residual:.3e})"
    )]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("spectrum not converged at the order cap (last leading values {previous} and {last})")]
    SpectrumNotConverged {
        previous: Complex64,
        last: Complex64,
    },

    #[error("refusing to certify stability from an unconverged spectrum")]
    UnconvergedSpectrum,

    #[error("no eigenvalue of the requested type found: {0}")]
    NoEigenvalue(String),

    #[error("normal vector is degenerate: {0}")]
    Degenerate(String),

    #[error(
        "normal vector has zero parameter projection (manifold tangent to the parameter space)"
    )]
    Tangency,

    #[error("distance must be positive, got {0}")]
    SignConvention(f64),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("critical point search failed: {0}")]
    Seeding(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_finite(v: &[f64], context: &'static str) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { context, index }),
        None => Ok(()),
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
