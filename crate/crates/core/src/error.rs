use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("expression is not a rational function: {0}")]
    NotRational(String),

    #[error("undeclared symbol `{0}`")]
    UndeclaredSymbol(String),
    #[error("symbol `{0}` declared more than once")]
    DuplicateSymbol(String),
    #[error("{dynamics} dynamics equations for {states} states")]
    ArityMismatch { dynamics: usize, states: usize },
    #[error("known parameter `{0}` has no constant value")]
    MissingConstant(String),
    #[error("`{0}` is not a parameter of the model")]
    UnknownParameter(String),
    #[error("model declares no unmeasured inputs")]
    NoUnmeasuredInputs,
    #[error("expression is not affine in the inputs: {0}")]
    NotAffineInInputs(String),

    #[error("definition not applicable: {0}")]
    DefinitionNotApplicable(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("degenerate evaluation after {0} resamples")]
    DegenerateEvaluation(usize),
    #[error("model is unobservable for this sensor layout (deficiency {0})")]
    ObservabilityRefused(usize),

    #[error("floor {0} does not exist in this benchmark")]
    UnknownFloor(usize),
    #[error("sensor layout is empty")]
    EmptySensorSet,
    #[error("invalid benchmark configuration: {0}")]
    Benchmark(String),

    #[error("non-finite state at t = {0} s")]
    NonFiniteState(f64),
    #[error("time series is not uniformly sampled (row {0})")]
    NonUniformSampling(usize),
    #[error("parse error: {0}")]
    Parse(String),

    #[error("Cholesky factorization failed even with diagonal jitter")]
    CholeskyFailure,
    #[error("innovation covariance is singular (condition number {0:.3e})")]
    InnovationCovarianceSingular(f64),

    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
