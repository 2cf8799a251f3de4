use thiserror::Error;

/// Errors produced by the solvers and optimizers in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("vertex `{0}` declared twice")]
    DuplicateVertex(String),

    #[error("unknown vertex `{0}`")]
    UnknownVertexReference(String),

    #[error("edge {edge} has non-positive or non-finite length {length}")]
    NonpositiveLength { edge: usize, length: f64 },

    #[error("edge at vertex `{0}` is a self-loop")]
    SelfLoop(String),

    #[error("graph is not connected")]
    DisconnectedGraph,

    #[error("vertex `{0}` is pinned but not marked dirichlet")]
    PinOnNonDirichletVertex(String),

    #[error("pin dimension mismatch: expected {expected}, found {found}")]
    PinDimensionMismatch { expected: usize, found: usize },

    #[error("graph has no dirichlet vertex; the torsion functional is unbounded below")]
    NoDirichletVertex,

    #[error("linear system is singular (pivot {pivot:e})")]
    SingularSystem { pivot: f64 },

    #[error("function is discontinuous at vertex `{vertex}` (jump {jump:e})")]
    DiscontinuousAtVertex { vertex: String, jump: f64 },

    #[error("function has {found} edge pieces but the graph has {expected} edges")]
    FunctionShapeMismatch { expected: usize, found: usize },

    #[error("mesh width {h} leaves fewer than 2 interior nodes on edge {edge} (length {length})")]
    MeshTooCoarse { edge: usize, length: f64, h: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("function takes negative values (min {min:e})")]
    NegativeValues { min: f64 },

    #[error("function does not vanish at dirichlet vertex `{vertex}` (value {value:e})")]
    NotZeroOnDirichlet { vertex: String, value: f64 },

    #[error("budget {budget} is below the minimal immersible length {minimal}")]
    InfeasibleBudget { budget: f64, minimal: f64 },

    #[error("topology enumeration supports 1..={max} pins, got {found}")]
    UnsupportedPinCount { found: usize, max: usize },

    #[error("grid mismatch: expected {expected} nodes, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("{what} did not converge (residual {residual:e})")]
    NonConvergence { what: String, residual: f64 },

    #[error("source term vanishes identically; the sup-norm of the state is zero")]
    DegenerateMax,

    #[error("spike width {width:e} needs {required} cells, above the cap of {max}")]
    GridTooCoarse { width: f64, required: usize, max: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
