use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("price series is empty")]
    EmptySeries,
    #[error("cutoff {cutoff} lies outside the series range {first}..={last}")]
    CutoffOutOfRange {
        cutoff: chrono::NaiveDate,
        first: chrono::NaiveDate,
        last: chrono::NaiveDate,
    },
    #[error("series too short: need {needed} values, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("zero variance")]
    ZeroVariance,
    #[error("singular design matrix")]
    Singular,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("class {0} absent from the labeled corpus")]
    MissingClass(i8),
    #[error("keyword not found")]
    KeywordNotFound,
    #[error("no scorable context")]
    NoScorableContext,
    #[error("degenerate latent")]
    DegenerateLatent,
    #[error("{op}: shape mismatch, expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("ground-truth mean is zero")]
    ZeroMeanTruth,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: &[usize], got: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            expected: expected.to_vec(),
            got: got.to_vec(),
        }
    }

    /// True for failures caused by floating-point blow-ups rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Diverged { .. })
    }
}
