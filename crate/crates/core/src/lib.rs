//! Hierarchical maximal-modularity clustering with Monte Carlo significance
//! gating, and incremental force-directed layout of the resulting
//! clustered graphs.

pub mod error;
pub mod explorer;
pub mod export;
pub mod fixtures;
pub mod graph;
pub mod hierarchy;
pub mod layout;
pub mod modularity;
pub mod pipeline;
pub mod significance;
pub mod stats;

pub use error::{Error, Result};
pub use explorer::Explorer;
pub use graph::{Graph, QuotientGraph};
pub use modularity::{MaximizerConfig, Partition};
pub use significance::NullDistribution;
