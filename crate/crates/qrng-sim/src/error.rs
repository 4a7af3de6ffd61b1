use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failures surfaced by configuration validation and the analysis ops.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("detection efficiency must lie in [0, 1], got {0}")]
    EfficiencyOutOfRange(f64),
    #[error("mean photon number must be finite and non-negative, got {0}")]
    MeanPhotonsOutOfRange(f64),
    #[error("transmittance must lie in (0, 1], got {0}")]
    TransmittanceOutOfRange(f64),
    #[error("dark count probability must lie in [0, 1), got {0}")]
    DarkProbabilityOutOfRange(f64),
    #[error("source defines no average power; this quantity needs the power path")]
    NoPowerPath,
    #[error("required transmittance {required:.6e} falls outside (0, 1]")]
    InfeasibleTransmittance { required: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("bit stream is empty")]
    EmptyStream,
    #[error("bit stream is constant; serial correlation is undefined")]
    DegenerateStream,
    #[error("lag {k} is out of range for a stream of {n} bits")]
    LagOutOfRange { k: usize, n: usize },
    #[error("need at least 48 bits for a Monte Carlo sample, got {0}")]
    InsufficientBits(usize),
    #[error("padding bits in the final byte must be zero")]
    NonZeroPadding,
    #[error("byte buffer of {bytes} bytes cannot back a stream of {bits} bits")]
    LengthMismatch { bytes: usize, bits: usize },
}
