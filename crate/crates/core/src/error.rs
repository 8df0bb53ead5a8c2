use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is singular or too ill-conditioned to decompose")]
    SingularMatrix,
    #[error("field has (near) zero power; Stokes vector undefined")]
    ZeroPower,
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("phase block is isotropic; no principal axis")]
    DegenerateBlock,
    #[error("bridge overflow: {dropped} decimated records dropped so far")]
    Overflow { dropped: u64 },
    #[error("bad record magic at byte offset {offset}")]
    BadMagic { offset: u64 },
    #[error("record CRC mismatch at byte offset {offset}")]
    BadCrc { offset: u64 },
    #[error("unsupported record version {version} at byte offset {offset}")]
    UnsupportedVersion { version: u16, offset: u64 },
    #[error("truncated record at byte offset {offset}: need {needed} bytes, have {available}")]
    Truncated {
        offset: u64,
        needed: usize,
        available: usize,
    },
    #[error("series are not aligned: {0}")]
    Alignment(String),
    #[error("series too short: {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("no ridge found in band")]
    NoRidge,
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
