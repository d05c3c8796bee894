//! End-to-end run from text documents to an explorer, with every stage
//! seeded from one master seed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explorer::Explorer;
use crate::graph::{largest_component, load_attributes, load_edge_list, Graph};
use crate::hierarchy::{build_hierarchy, HierarchyConfig};
use crate::layout::LayoutConfig;
use crate::modularity::MaximizerConfig;
use crate::significance::{derive_seed, DEFAULT_ALPHA, DEFAULT_TRIALS};

/// Stream index of the layout seed under the master seed. Streams 0 and 1
/// belong to the global and local null models.
pub const LAYOUT_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    pub seed: u64,
    pub trials: usize,
    pub alpha: f64,
    pub largest_component: bool,
    pub strict_bottom: bool,
    pub local_move_passes: usize,
    pub layout_iterations: usize,
    pub weighted_attraction: bool,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            seed: 0,
            trials: DEFAULT_TRIALS,
            alpha: DEFAULT_ALPHA,
            largest_component: false,
            strict_bottom: false,
            local_move_passes: MaximizerConfig::default().local_move_passes,
            layout_iterations: LayoutConfig::default().iterations,
            weighted_attraction: false,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn hierarchy_config(&self) -> HierarchyConfig {
        HierarchyConfig {
            trials: self.trials,
            alpha: self.alpha,
            seed: self.seed,
            maximizer: MaximizerConfig {
                seed: self.seed,
                local_move_passes: self.local_move_passes,
                ..MaximizerConfig::default()
            },
            strict_bottom: self.strict_bottom,
            ..HierarchyConfig::default()
        }
    }

    pub fn layout_config(&self) -> LayoutConfig {
        LayoutConfig {
            iterations: self.layout_iterations,
            weighted_attraction: self.weighted_attraction,
            seed: derive_seed(self.seed, LAYOUT_STREAM),
            ..LayoutConfig::default()
        }
    }

    /// One line echoing every parameter that affects the output.
    pub fn effective_config_line(&self) -> String {
        format!(
            "seed={} trials={} alpha={} largest_component={} strict_bottom={} local_move_passes={} layout_iterations={} weighted_attraction={} layout_seed={}",
            self.seed,
            self.trials,
            self.alpha,
            self.largest_component,
            self.strict_bottom,
            self.local_move_passes,
            self.layout_iterations,
            self.weighted_attraction,
            derive_seed(self.seed, LAYOUT_STREAM),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub nodes: usize,
    pub edges: usize,
    pub clusters: usize,
    pub q: f64,
    pub threshold: f64,
    pub p_value: f64,
    pub no_structure: bool,
    pub duplicates_dropped: usize,
    pub self_loops_dropped: usize,
    pub nodes_outside_component: usize,
    pub warnings: Vec<String>,
}

/// Parsed inputs, ready for the expensive stages.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub graph: Graph,
    pub duplicates_dropped: usize,
    pub self_loops_dropped: usize,
    pub nodes_outside_component: usize,
    pub warnings: Vec<String>,
}

/// Parses the edge list and optional attribute table and restricts to the
/// giant component when asked. Cheap; fails fast on bad input.
pub fn prepare(edges: &str, attributes: Option<&str>, params: &PipelineParams) -> Result<Prepared> {
    params.validate()?;
    let loaded = load_edge_list(edges)?;
    let mut graph = loaded.graph;
    let mut warnings = Vec::new();
    if let Some(text) = attributes {
        let a = load_attributes(text, &graph)?;
        graph = a.graph;
        warnings = a.warnings;
    }
    let mut outside = 0;
    if params.largest_component {
        let sub = largest_component(&graph);
        outside = graph.node_count() - sub.graph.node_count();
        graph = sub.graph;
    }
    if graph.edge_count() == 0 {
        return Err(Error::EdgelessGraph);
    }
    Ok(Prepared {
        graph,
        duplicates_dropped: loaded.duplicates_dropped,
        self_loops_dropped: loaded.self_loops_dropped,
        nodes_outside_component: outside,
        warnings,
    })
}

/// Builds the hierarchy and the initial layout.
pub fn run(prepared: Prepared, params: &PipelineParams) -> Result<(Explorer, Summary)> {
    let tree = build_hierarchy(&prepared.graph, &params.hierarchy_config())?;
    let summary = Summary {
        nodes: prepared.graph.node_count(),
        edges: prepared.graph.edge_count(),
        clusters: tree.best_level.len(),
        q: tree.best_modularity,
        threshold: tree.global_threshold,
        p_value: tree.best_p_value,
        no_structure: tree.no_structure,
        duplicates_dropped: prepared.duplicates_dropped,
        self_loops_dropped: prepared.self_loops_dropped,
        nodes_outside_component: prepared.nodes_outside_component,
        warnings: prepared.warnings,
    };
    let explorer = Explorer::new(prepared.graph, tree, params.layout_config())?;
    Ok((explorer, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::write_edge_list;
    use crate::modularity::greedy_maximize;

    #[test]
    fn planted_summary_matches_library() {
        let g = fixtures::ring_of_cliques(4, 5);
        let params = PipelineParams {
            seed: 1,
            trials: 30,
            ..PipelineParams::default()
        };
        let prepared = prepare(&write_edge_list(&g), None, &params).unwrap();
        let (_, summary) = run(prepared, &params).unwrap();
        let best = greedy_maximize(&g, &params.hierarchy_config().maximizer).unwrap();
        assert_eq!(summary.clusters, 4);
        assert_eq!(summary.q, best.modularity());
        assert!(!summary.no_structure);
    }

    #[test]
    fn rejects_bad_params() {
        let params = PipelineParams {
            alpha: 0.0,
            ..PipelineParams::default()
        };
        assert!(prepare("a b\n", None, &params).is_err());
    }
}
