use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("potential violates its decay envelope at n = {n}: {value:e} > {bound:e}")]
    DecayViolation { n: usize, value: f64, bound: f64 },

    #[error("E = {0} lies within the essential-spectrum band around [-1, 1]")]
    EssentialSpectrumAdjacent(Complex64),

    #[error("determinant recursion did not stabilise (gap {gap:e})")]
    NonConvergence { gap: f64 },

    #[error("vanishing sub-diagonal entry a_{0}")]
    VanishingSubdiagonal(usize),

    #[error("zero near contour: |f| = {modulus:e} below floor {floor:e} at {at}")]
    ZeroNearContour { at: Complex64, modulus: f64, floor: f64 },

    #[error("non-integer winding number (residue {residue:.3e})")]
    NonIntegerWinding { residue: f64 },

    #[error("QR iteration failed to converge for order {0}")]
    QrNonConvergence(usize),

    #[error("interpolation nodes coincide: {0} and {1}")]
    NodeCoincidence(usize, usize),

    #[error("interpolant too large: sup|L| = {sup:e} >= {limit:e}")]
    InterpolantTooLarge { sup: f64, limit: f64 },

    #[error("coefficient tail is not certified beyond block {0}")]
    UncertifiedTail(usize),

    #[error("quadrature refinement did not converge (last change {0:e})")]
    QuadratureNotConverged(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
