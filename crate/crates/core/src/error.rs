use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bias voltage {voltage} V outside admissible range [{min}, {max}] V")]
    VoltageOutOfRange { voltage: f64, min: f64, max: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("phase is not one-to-one in bias voltage at {frequency_hz} Hz")]
    UnsupportedFrequency { frequency_hz: f64 },

    #[error("sample time makes the time factor of mode {mode} vanish")]
    VanishingTimeFactor { mode: u32 },

    #[error("{modes} modes exceed the rank limit of {limit} for this geometry")]
    RankCondition { modes: usize, limit: usize },

    #[error("normal-equation matrix is not positive definite")]
    SingularGram,

    #[error("boundary repair did not converge after {iterations} passes")]
    RepairFailed {
        iterations: usize,
        best: Box<crate::optimize::WlsSolution>,
    },

    #[error("invalid varactor table: {0}")]
    Table(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}
