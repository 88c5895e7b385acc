use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty signal")]
    EmptySignal,
    #[error("silent source (index {0})")]
    SilentSource(usize),
    #[error("silent reference")]
    SilentReference,
    #[error("invalid STFT configuration: {0}")]
    InvalidStft(String),
    #[error("STFT configuration mismatch: {0}")]
    StftMismatch(String),
    #[error("sample rate mismatch: expected {expected} Hz, found {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("degenerate geometry: source {source_id} coincides with array {array} mic {mic}")]
    DegenerateGeometry { source_id: usize, array: usize, mic: usize },
    #[error("missing RIR for (source {source_id}, array {array}, mic {mic})")]
    MissingRir { source_id: usize, array: usize, mic: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("ill-conditioned covariance at array {array}, bin {bin}")]
    IllConditioned { array: usize, bin: usize },
    #[error("numerical divergence at iteration {0}")]
    NumericalDivergence(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported WAV format in {path}: {reason}")]
    UnsupportedWav { path: PathBuf, reason: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("run stopped: {0}")]
    Stopped(String),
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
}
