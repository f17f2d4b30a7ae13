use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EqdError {
    #[error("invalid point: all homogeneous coordinates vanish")]
    InvalidPoint,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("point lies within tolerance of the indeterminacy set (step {step})")]
    IndeterminacyPoint { step: usize },

    #[error("polynomial of degree 0 has no roots")]
    NoRoots,

    #[error("degenerate fiber: multiplicities sum to {got}, expected {expected}")]
    DegenerateFiber { expected: usize, got: usize },

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("pullback tree of {leaves} leaves exceeds the limit {limit}")]
    TreeTooLarge { leaves: f64, limit: f64 },

    #[error("fiber failure along branch {path:?}: {source}")]
    Branch {
        path: Vec<usize>,
        #[source]
        source: Box<EqdError>,
    },

    #[error("exceptional start: {collapsed} of {walks} backward walks collapsed")]
    ExceptionalStart { collapsed: usize, walks: usize },

    #[error("{dropped} of {total} points have value -inf (more than 1%)")]
    PolarMass { dropped: usize, total: usize },

    #[error("observable takes value -inf at a fiber point")]
    PolarValue,

    #[error("evaluation budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("insufficient signal: {usable} usable entries, need at least 3")]
    InsufficientSignal { usable: usize },

    #[error("norm metadata unavailable: {0}")]
    NormUnavailable(String),

    #[error("hypothesis d_t > d_(k-1) violated (margin {margin})")]
    HypothesisViolated { margin: f64 },

    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Invalid(String),

    #[error("io: {0}")]
    Io(String),
}

impl EqdError {
    pub(crate) fn parse_at(input: &str, pos: usize, message: impl Into<String>) -> Self {
        let pos = pos.min(input.len());
        let before = &input[..pos];
        let line = before.matches('\n').count() + 1;
        let column = before.rfind('\n').map_or(pos, |i| pos - i - 1) + 1;
        EqdError::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    /// Whether the error comes from floating-point or fiber trouble rather
    /// than bad input.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            EqdError::Parse { .. }
                | EqdError::InvalidMap(_)
                | EqdError::Invalid(_)
                | EqdError::DimMismatch { .. }
                | EqdError::HypothesisViolated { .. }
        )
    }
}

impl From<std::io::Error> for EqdError {
    fn from(e: std::io::Error) -> Self {
        EqdError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, EqdError>;
