use alloc::string::String;

/// Errors raised by the model, the solver and the recovery pipelines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid probe: {0}")]
    InvalidProbe(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The initial pulse band intersects the support of the nonlinearity, so
    /// the free traveling wave is not valid Cauchy data.
    #[error("pulse band at t0 = {t0} overlaps the support of the nonlinearity")]
    PulseOverlapsSupport { t0: f64 },

    #[error("numerical blow-up at t = {t}: max|u| = {max_abs}")]
    NumericalBlowup { t: f64, max_abs: f64 },

    #[error("nonlinearity variant not supported by {0}")]
    WrongVariant(&'static str),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("grids do not match")]
    GridMismatch,

    #[error("field kinds do not match")]
    KindMismatch,

    #[error("normalization below threshold on the evaluation band")]
    DivisionBand,

    #[error("envelope below {threshold} of its maximum")]
    EnvelopeUnderflow { threshold: f64 },

    #[error("q = {q} exceeds the sampled amplitude range [0, {max}]")]
    DomainTooSmall { q: f64, max: f64 },

    #[error("field is nonzero within two cells of the grid boundary")]
    SupportLeak,
}
