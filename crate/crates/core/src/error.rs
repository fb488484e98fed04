use alloc::string::String;

/// Errors produced anywhere in the falsification pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("time {t} outside [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },
    #[error("invalid time grid: {0}")]
    Grid(String),
    #[error("invalid box: {0}")]
    Box(String),
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown state coordinate `{0}`")]
    UnknownCoordinate(String),
    #[error("formula horizon {formula} exceeds trajectory horizon {trajectory}")]
    Horizon { formula: f64, trajectory: f64 },
    #[error("invalid network: {0}")]
    Network(String),
    #[error("network file line {line}: {message}")]
    NetworkFormat { line: usize, message: String },
    #[error("simulation diverged at t = {t}: non-finite state component {index}")]
    Diverged { t: f64, index: usize },
    #[error("non-finite closed-loop derivative at component {index}")]
    NonFiniteDerivative { index: usize },
    #[error("initial state outside X0 at component {0}")]
    OutsideInitBox(usize),
    #[error("non-finite difference quotient for {wrt} coordinate {index}")]
    Linearization { wrt: &'static str, index: usize },
    #[error("linearization sample {sample}: {source}")]
    Schedule {
        sample: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("co-state diverged at t = {0}")]
    CostateDiverged(f64),
    #[error("discrete-time recurrent networks are not supported by the adjoint local search")]
    DiscreteRnn,
    #[error("unknown model `{name}`; available: {available}")]
    UnknownModel { name: String, available: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("every candidate evaluation failed; last error: {0}")]
    AllCandidatesFailed(alloc::boxed::Box<Error>),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}
