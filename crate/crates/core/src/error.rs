//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid beamsplitter: R={r}, T={t} (need 0 <= R,T <= 1 and R + T = 1)")]
    InvalidBeamsplitter { r: f64, t: f64 },

    #[error("efficiency {name}={value} outside [0, 1]")]
    InvalidEfficiency { name: &'static str, value: f64 },

    #[error("mode overlap {0} outside [0, 1]")]
    InvalidOverlap(f64),

    #[error("photon number {requested} exceeds supported maximum {max}")]
    PhotonNumberOverflow { requested: usize, max: usize },

    #[error("invalid spectral profile: {0}")]
    InvalidProfile(String),

    #[error("delay scan must be non-empty and strictly increasing")]
    InvalidScan,

    #[error("invalid source configuration: {0}")]
    InvalidConfig(String),

    #[error("negative distance {0} (µm)")]
    NegativeDistance(f64),

    #[error("lookup table must have strictly increasing wavelengths and values in [0, 1]")]
    InvalidTable,

    #[error("wavelength {wavelength} nm outside table range [{min}, {max}] nm")]
    WavelengthOutOfRange { wavelength: f64, min: f64, max: f64 },

    #[error("intensities must be non-negative and not both zero")]
    InvalidIntensityPair,

    #[error("fit needs at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("degenerate fit input: {0}")]
    DegenerateFit(String),

    #[error("fit did not converge after {iterations} iterations (residual norm {residual_norm:.6e})")]
    NonConvergence { iterations: usize, residual_norm: f64 },

    #[error("stream is not sorted: timestamp {timestamp} ps follows {previous} ps")]
    UnsortedStream { previous: u64, timestamp: u64 },

    #[error("coincidence window must be positive, got {0} s")]
    InvalidWindow(f64),

    #[error("visibility baseline rate must be positive, got {0}")]
    NonPositiveBaseline(f64),

    #[error("bad magic bytes: expected \"HTAG\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported time-tag format version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated time-tag file: header promises {expected} records, found {found}")]
    TruncatedFile { expected: u64, found: u64 },

    #[error("corrupt record {index}: {reason}")]
    CorruptRecord { index: u64, reason: String },

    #[error("malformed CSV at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },

    #[error("malformed sidecar: {0}")]
    MalformedSidecar(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
