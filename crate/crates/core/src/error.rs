use thiserror::Error;

/// Errors raised by the analysis kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("unphysical symplectic eigenvalue {eigenvalue} (must be >= 1 in shot-noise units)")]
    UnphysicalEigenvalue { eigenvalue: f64 },

    #[error("symplectic spectrum could not be paired ({detail}); condition number {condition:.3e}")]
    SingularPairing { detail: String, condition: f64 },

    #[error("degenerate homodyne measurement: measured variance {variance} is not positive")]
    DegenerateMeasurement { variance: f64 },

    #[error(
        "closed-form Eve covariance requires a purely lossy channel (epsilon = {epsilon}); use the joint-state route"
    )]
    NoisyChannelUnsupported { epsilon: f64 },

    #[error("entangling cloner undefined for a lossless channel with excess noise")]
    DegenerateCloner,

    #[error("no non-negative decoupling modulation for v_r = {v_r} (> 1)")]
    NoDecouplingSolution { v_r: f64 },

    #[error("negative Holevo information {value} beyond rounding tolerance")]
    NegativeHolevo { value: f64 },

    #[error("insufficient data: {n} samples, need at least 2")]
    InsufficientData { n: usize },

    #[error("threshold undefined: mutual information I_AB is zero")]
    UndefinedThreshold,

    #[error("non-finite key rate at v_a = {v_a}")]
    NonFiniteRate { v_a: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
