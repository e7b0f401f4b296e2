use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("time {time} outside [0, {horizon}]")]
    TimeOutOfRange { time: f64, horizon: f64 },

    #[error("item {item}: {purchases} purchases exceed initial stock {stock}")]
    OverSold { item: usize, purchases: usize, stock: u32 },

    #[error("item {item}: purchase times not strictly increasing at index {index}")]
    UnsortedTimes { item: usize, index: usize },

    #[error("undefined choice probability: {0}")]
    DegenerateChoice(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite posterior: {0}")]
    NonFinite(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable category, used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidData(_)
            | Error::TimeOutOfRange { .. }
            | Error::OverSold { .. }
            | Error::UnsortedTimes { .. } => "data",
            Error::InvalidParams(_) | Error::DegenerateChoice(_) | Error::Dimension(_) => "params",
            Error::DegenerateVariance(_) | Error::NonFinite(_) => "numeric",
            Error::Parse { .. } | Error::Csv(_) => "parse",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}
