use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("input too short: {len} samples, need at least {min}")]
    InputTooShort { len: usize, min: usize },
    #[error("sample rate {0} Hz is not supported, expected 16000 Hz")]
    SampleRate(u32),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("spectrogram is compressed, decompress first")]
    DecompressFirst,
    #[error("spectrogram is already compressed")]
    AlreadyCompressed,
    #[error("spectrogram is not compressed")]
    NotCompressed,
    #[error("compression exponent {0} is outside (0, 1]")]
    InvalidExponent(f32),
    #[error("compression mismatch: {0} vs {1}")]
    CompressionMismatch(f32, f32),
    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("mask value {value} at index {index} is outside [0, 1]")]
    MaskRange { index: usize, value: f32 },
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("shape mismatch in tensor {name}: expected {expected:?}, got {actual:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    EmbeddingDim { expected: usize, actual: usize },
    #[error("embedding stream too short: need {required} frames, got {available}")]
    EmbeddingStreamTooShort { required: usize, available: usize },
    #[error("embedding frames out of order at position {position}: index {index}")]
    EmbeddingOrder { position: usize, index: u64 },
    #[error("audio block of {len} samples exceeds 640 or is short without end-of-stream")]
    BlockSize { len: usize },
    #[error("stream already ended")]
    StreamEnded,
    #[error("zero-power target")]
    ZeroPowerTarget,
    #[error("scenario must contain at least one interferer")]
    NoInterference,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty catalog partition {split}/{kind}")]
    EmptyPartition { split: String, kind: &'static str },
    #[error("augmentation window {start}..{end} is outside a stream of {frames} frames")]
    WindowOutOfBounds {
        start: usize,
        end: usize,
        frames: usize,
    },
    #[error("augmentation length {0} is outside 1..=10")]
    AugmentationLength(usize),
    #[error("zero reference")]
    ZeroReference,
    #[error("{frames} analysis frames, need at least {required} for one segment")]
    TooFewFrames { frames: usize, required: usize },
}
