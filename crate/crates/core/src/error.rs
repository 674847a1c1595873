use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {index} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { index: usize, n_qubits: usize },

    #[error("cnot control and target are both qubit {0}")]
    CnotSameQubit(usize),

    #[error("invalid circuit configuration: {0}")]
    InvalidCircuit(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("gradient tape does not match the network it is replayed against")]
    StaleTape,

    #[error("timestep {t} outside schedule range 0..={t_max}")]
    TimestepOutOfRange { t: usize, t_max: usize },

    #[error("schedule indices out of order: t_prev={t_prev} is not below t={t}")]
    ScheduleOrder { t: usize, t_prev: usize },

    #[error("image of {width}x{height} is smaller than the {window}x{window} window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("rollout failed in env {env} at step {step}: {reason}")]
    Rollout {
        env: usize,
        step: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn ensure_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            context,
            expected,
            actual,
        })
    }
}
