use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("enumeration refused: joint space has {size} states, cap is {cap}")]
    CapExceeded { size: u128, cap: u128 },

    #[error("model is unnormalizable (partition function is zero)")]
    Unnormalizable,

    #[error("factor {0} has an all-zero table")]
    ZeroFactor(usize),

    #[error("pseudo-marginals violate the local polytope by {0:e}")]
    NotInPolytope(f64),

    #[error("optimizer budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("switching requires {0}")]
    NotSwitchable(String),

    #[error("malformed cover: {0}")]
    MalformedCover(String),

    #[error("edge {edge} has negative weight p = {p}")]
    NegativeWeight { edge: usize, p: f64 },

    #[error("unknown vertex {0}")]
    UnknownVertex(usize),

    #[error("expected {expected} layers, got {got}")]
    LayerMismatch { expected: usize, got: usize },

    #[error("unsupported field order {0}")]
    UnsupportedField(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation requires a rank-2 interaction matrix")]
    NotRank2,

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors caused by bad input rather than a numerical refusal.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::CapExceeded { .. }
                | Error::Unnormalizable
                | Error::BudgetExceeded(_)
                | Error::NotInPolytope(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
