use thiserror::Error;

/// Errors produced by the dyadic-core library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("tree with branching {branching} and depth {depth} needs {requested} nodes, budget is {budget}")]
    CapacityExceeded {
        branching: usize,
        depth: usize,
        requested: u128,
        budget: usize,
    },

    #[error("the root has no parent node")]
    RootHasNoParent,

    #[error("node index {index} out of range for {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value at index {index}")]
    NonFiniteState { index: usize },

    #[error("negative value {value} at index {index} in a positive-solution state")]
    NegativeState { index: usize, value: f64 },

    #[error("state has {actual} values, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("{count} consecutive step rejections at t = {t}")]
    MaxRejections { t: f64, count: usize },

    #[error("step limit of {limit} reached at t = {t}")]
    MaxSteps { t: f64, limit: usize },

    #[error("time range [{s}, {t}] is not inside the trajectory range [{start}, {end}]")]
    RangeError { s: f64, t: f64, start: f64, end: f64 },

    #[error("flux budget is only defined for unforced runs (f = {f})")]
    ForcedRun { f: f64 },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("need {required} shells, have {available}")]
    DepthMismatch { required: usize, available: usize },

    #[error("state is not constant within generation {generation}")]
    SymmetryError { generation: usize },

    #[error("parameter mismatch: {0}")]
    ParameterMismatch(String),

    #[error("could not bracket the shooting root: {0}")]
    BracketFailure(String),

    #[error("bisection did not converge after {iterations} iterations (relative width {width:e})")]
    NoConvergence { iterations: usize, width: f64 },

    #[error("graft at node {root} overlaps an existing graft")]
    OverlapError { root: usize },

    #[error("profile starts at generation {profile}, subtree root is at generation {node}")]
    GenerationMismatch { profile: usize, node: usize },

    #[error("pole time {found} differs from existing grafts at {expected}")]
    PoleMismatch { expected: f64, found: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
