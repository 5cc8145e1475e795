use thiserror::Error;

/// Failures of the wave-side computations.
#[derive(Debug, Error)]
pub enum WaveError {
    /// The grid cannot represent the state, or too much spectral mass sits
    /// near the Nyquist band.
    #[error("under-resolved: {0}")]
    UnderResolved(String),
    #[error("symbol support clipped: a fraction {fraction:e} of its mass lies outside the phase-space window")]
    SupportClipped { fraction: f64 },
    #[error("zoom window |x'| <= {needed} exceeds the grid (available {available})")]
    ZoomWindowExceedsGrid { needed: f64, available: f64 },
    #[error("scale ordering violated: R*eps = {r_eps} must stay below delta/2 = {half_delta}")]
    ScaleOrderingViolated { r_eps: f64, half_delta: f64 },
    #[error("dense phase-space array of {0} elements exceeds the cap; use the streaming pairing")]
    TooLarge(usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] conical_core::Error),
}

pub type Result<T> = std::result::Result<T, WaveError>;
