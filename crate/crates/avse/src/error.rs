use std::io;

/// Errors from reading or writing the on-disk formats.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("unexpected end of file in {0}")]
    UnexpectedEof(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: &'static str, found: [u8; 4] },
    #[error("unsupported {format} version {version}")]
    Version { format: &'static str, version: u32 },
    #[error("{0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Core(#[from] avse_core::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

impl FormatError {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Self::Invalid(message.into())
    }

    pub(crate) fn line(line: usize, message: impl Into<String>) -> Self {
        Self::Line { line, message: message.into() }
    }

    /// True when the error is a genuine I/O failure rather than bad content.
    pub fn is_io(&self) -> bool {
        match self {
            FormatError::Io(_) => true,
            FormatError::Wav(hound::Error::IoError(e)) => e.kind() != io::ErrorKind::UnexpectedEof,
            _ => false,
        }
    }
}
