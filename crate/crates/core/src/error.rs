use thiserror::Error;

/// Errors produced by the clustering, significance, layout and statistics
/// routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate row for node `{0}` in attribute table")]
    DuplicateAttributeRow(String),

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph has no edges; modularity is undefined")]
    EdgelessGraph,

    #[error("partition does not cover the graph: {0}")]
    PartitionMismatch(String),

    #[error("invalid cluster id {0}")]
    InvalidCluster(usize),

    #[error("exhaustive search refused for {0} nodes (limit is {limit})", limit = crate::modularity::BRUTE_FORCE_LIMIT)]
    TooLargeForBruteForce(usize),

    #[error("degree sequence does not match the template graph")]
    DegreeMismatch,

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("category `{category}` has zero expected count in cluster {cluster}")]
    ZeroExpected { cluster: usize, category: String },

    #[error("no significant substructure")]
    TerminalNode(usize),

    #[error("at significance boundary")]
    SignificanceBoundary,

    #[error("invalid view move: {0}")]
    InvalidMove(String),

    #[error("nothing to undo")]
    NothingToUndo,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
