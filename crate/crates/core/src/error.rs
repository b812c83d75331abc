use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("kernel {kernel} does not fit padded input of size {padded}")]
    KernelTooLarge { kernel: usize, padded: usize },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("backward called before a forward pass was recorded")]
    NoForward,
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("batchnorm channel has no elements")]
    EmptyChannel,
    #[error("malformed parameter payload: {0}")]
    Codec(String),
    #[error("cannot step a terminal state")]
    TerminalState,
    #[error("cannot sample from an empty replay buffer")]
    EmptyBuffer,
    #[error("invalid configuration: {0}")]
    Config(String),
}
