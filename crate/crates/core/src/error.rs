use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("node {node} out of range for a graph of {node_count} nodes")]
    NodeOutOfRange { node: usize, node_count: usize },

    #[error("node {0} is isolated; its influence weight is undefined")]
    IsolatedNode(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{count} knapsack candidates exceed the enumeration cap of {cap}")]
    TooManyCandidates { count: usize, cap: usize },

    #[error("seed budget of {requested} exceeds population of {available}")]
    BudgetExceedsPopulation { requested: usize, available: usize },

    #[error("node {0} is seeded for more than one behavior")]
    OverlappingSeeds(usize),

    #[error("node {node}: pinned cost {pinned_cost} exceeds resource {resource}")]
    PinnedOverBudget {
        node: usize,
        pinned_cost: f64,
        resource: f64,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
