use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signal too short: {len} samples, need at least {required}")]
    SignalTooShort { len: usize, required: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A bin that must be real (DC or Nyquist) carries an imaginary part.
    #[error("realness constraint violated at bin {bin}: |imag| = {imag:e}")]
    Realness { bin: usize, imag: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("acoustic model error: {0}")]
    Model(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("undefined metric: {0}")]
    Undefined(String),

    #[error("utterance {id}: {source}")]
    Utterance {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

impl Error {
    pub fn for_utterance(self, id: impl Into<String>) -> Self {
        Error::Utterance {
            id: id.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by the user's configuration rather than the data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
