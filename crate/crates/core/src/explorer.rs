//! Interactive exploration state: a cluster tree, the displayed frontier,
//! its layout, and an undo stack. Every move keeps the frontier and the
//! layout node set identical.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::{svg, view_json, ExportFormat, HierarchyDocument};
use crate::graph::{ClusterNode, Graph, QuotientGraph};
use crate::hierarchy::{ClusterTree, NodeId, ViewState};
use crate::layout::{coarsen_layout, fr_layout, refine_layout, Layout, LayoutConfig, LayoutNode};
use crate::modularity::{write_partition_tsv, Partition};
use crate::stats::{cluster_chi2_labeled, AttributeStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Snapshot {
    view: ViewState,
    layout: Layout,
}

/// Which statistic colors the nodes of a view document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Remembered {
    at: (f64, f64),
    /// `(id, x, y)` in child order.
    children: Vec<(NodeId, f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatMode {
    /// Chi-squared p-value of the cluster; sequential scale.
    P,
    /// Pearson residual of one category; diverging scale.
    Residual,
}

impl std::str::FromStr for StatMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p" => Ok(StatMode::P),
            "residual" => Ok(StatMode::Residual),
            other => Err(Error::InvalidParameter(format!("unknown stat mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatRequest {
    pub attribute: String,
    pub mode: StatMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewNode {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub size: usize,
    pub color: Option<f64>,
    pub refinable: bool,
    pub coarsenable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEdge {
    pub source: NodeId,
    pub target: NodeId,
    pub weight: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatInfo {
    pub attribute: String,
    pub mode: StatMode,
    pub category: Option<String>,
    /// Suggested color ramp: `sequential-gray` or `diverging-blue-red`.
    pub scale: String,
    pub test: String,
}

/// Everything a client needs to draw the current view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewDocument {
    pub version: u32,
    pub q: f64,
    pub threshold: f64,
    pub no_structure: bool,
    pub width: f64,
    pub height: f64,
    pub weighted_attraction: bool,
    pub can_coarsen_step: bool,
    pub stat: Option<StatInfo>,
    pub nodes: Vec<ViewNode>,
    pub edges: Vec<ViewEdge>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Explorer {
    pub graph: Graph,
    pub tree: ClusterTree,
    view: ViewState,
    layout: Layout,
    layout_config: LayoutConfig,
    history: Vec<Snapshot>,
    /// Children positions captured when a parent was coarsened, with the
    /// position the parent received. A later refine restores them if the
    /// parent has not moved since.
    remembered: BTreeMap<NodeId, Remembered>,
    #[serde(skip)]
    stats_cache: HashMap<(String, Vec<NodeId>), AttributeStats>,
}

impl Explorer {
    /// Starts at the best level, laid out from scratch.
    pub fn new(graph: Graph, tree: ClusterTree, layout_config: LayoutConfig) -> Result<Self> {
        let view = tree.initial_view(&graph)?;
        let qg = quotient_for(&graph, &view)?;
        let layout = fr_layout(&qg, &layout_config);
        let ex = Explorer {
            graph,
            tree,
            view,
            layout,
            layout_config,
            history: Vec::new(),
            remembered: BTreeMap::new(),
            stats_cache: HashMap::new(),
        };
        ex.check_sync();
        Ok(ex)
    }

    pub fn view(&self) -> &ViewState {
        &self.view
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn layout_config(&self) -> &LayoutConfig {
        &self.layout_config
    }

    pub fn undo_depth(&self) -> usize {
        self.history.len()
    }

    pub fn quotient(&self) -> Result<QuotientGraph> {
        quotient_for(&self.graph, &self.view)
    }

    fn check_sync(&self) {
        assert_eq!(
            self.layout.ids(),
            self.view.ids(),
            "layout and frontier out of sync"
        );
    }

    fn push(&mut self) {
        self.history.push(Snapshot {
            view: self.view.clone(),
            layout: self.layout.clone(),
        });
    }

    /// Replaces `node` by its children.
    pub fn refine(&mut self, node: NodeId) -> Result<()> {
        let next = self.tree.refine_view(&self.graph, &self.view, node)?;
        let children: Vec<ClusterNode> = self.tree.nodes[node]
            .children
            .iter()
            .map(|&c| ClusterNode {
                id: c,
                size: self.tree.nodes[c].size(),
            })
            .collect();

        let slot = self.layout.node(node).map(|n| (n.x, n.y));
        let restored = self
            .remembered
            .get(&node)
            .filter(|r| Some(r.at) == slot && r.children.len() == children.len());
        let layout = if let Some(r) = restored {
            let mut l = self.layout.clone();
            l.nodes.retain(|n| n.id != node);
            for (c, &(_, x, y)) in children.iter().zip(&r.children) {
                l.nodes.push(LayoutNode {
                    id: c.id,
                    x,
                    y,
                    radius: l.radius_for(c.size),
                    size: c.size,
                });
            }
            l.nodes.sort_by_key(|n| n.id);
            l
        } else {
            let qg = quotient_for(&self.graph, &next)?;
            refine_layout(&self.layout, node, &children, &qg, &self.layout_config)?
        };
        self.push();
        self.view = next;
        self.layout = layout;
        self.check_sync();
        Ok(())
    }

    /// Coarsens to the parent of `target` (or to `target` if it is itself
    /// a parent whose children are all displayed).
    pub fn coarsen(&mut self, target: NodeId) -> Result<()> {
        let parent = self.tree.coarsen_target(&self.view, target)?;
        self.coarsen_into(parent)
    }

    /// Applies the next recorded merge.
    pub fn coarsen_step(&mut self) -> Result<()> {
        let step = *self
            .tree
            .next_merge(&self.view)
            .ok_or(Error::SignificanceBoundary)?;
        self.coarsen_into(step.merged)
    }

    fn coarsen_into(&mut self, parent: NodeId) -> Result<()> {
        let next = self.tree.coarsen_view(&self.graph, &self.view, parent)?;
        let children = self.tree.nodes[parent].children.clone();
        let layout = coarsen_layout(&self.layout, &children, parent)?;
        let merged = layout.node(parent).expect("merged node is laid out");
        let kept = children
            .iter()
            .map(|c| {
                let n = self.layout.node(*c).expect("child is displayed");
                (*c, n.x, n.y)
            })
            .collect();
        self.remembered.insert(
            parent,
            Remembered {
                at: (merged.x, merged.y),
                children: kept,
            },
        );
        self.push();
        self.view = next;
        self.layout = layout;
        self.check_sync();
        Ok(())
    }

    pub fn undo(&mut self) -> Result<()> {
        let snap = self.history.pop().ok_or(Error::NothingToUndo)?;
        self.view = snap.view;
        self.layout = snap.layout;
        self.check_sync();
        Ok(())
    }

    /// Chi-squared statistics of `attribute` over the displayed clusters.
    pub fn stats(&mut self, attribute: &str) -> Result<AttributeStats> {
        let key = (attribute.to_owned(), self.view.ids());
        if let Some(s) = self.stats_cache.get(&key) {
            return Ok(s.clone());
        }
        let s = cluster_chi2_labeled(&self.graph, &self.view.assignment, &key.1, attribute)?;
        self.stats_cache.insert(key, s.clone());
        Ok(s)
    }

    pub fn document(&mut self, stat: Option<&StatRequest>) -> Result<ViewDocument> {
        let qg = self.quotient()?;
        let (colors, info) = match stat {
            None => (None, None),
            Some(req) => {
                let s = self.stats(&req.attribute)?;
                let colors: Vec<Option<f64>> = match req.mode {
                    StatMode::P => s.clusters.iter().map(|c| Some(c.p)).collect(),
                    StatMode::Residual => {
                        let cat = req.category.as_deref().ok_or_else(|| {
                            Error::InvalidParameter("residual mode needs a category".into())
                        })?;
                        let idx = s.category_index(cat).ok_or_else(|| {
                            Error::InvalidParameter(format!("unknown category `{cat}`"))
                        })?;
                        s.clusters.iter().map(|c| Some(c.residuals[idx])).collect()
                    }
                };
                let info = StatInfo {
                    attribute: req.attribute.clone(),
                    mode: req.mode,
                    category: req.category.clone(),
                    scale: match req.mode {
                        StatMode::P => "sequential-gray".into(),
                        StatMode::Residual => "diverging-blue-red".into(),
                    },
                    test: "goodness-of-fit".into(),
                };
                (Some(colors), Some(info))
            }
        };

        let nodes = self
            .layout
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| ViewNode {
                id: n.id,
                x: n.x,
                y: n.y,
                radius: n.radius,
                size: n.size,
                color: colors.as_ref().and_then(|c| c[i]),
                refinable: self.tree.is_refinable(n.id),
                coarsenable: self.tree.is_coarsenable(&self.view, n.id),
            })
            .collect();
        let edges = qg
            .edges
            .iter()
            .map(|(&(source, target), &weight)| ViewEdge {
                source,
                target,
                weight,
            })
            .collect();
        Ok(ViewDocument {
            version: 1,
            q: self.view.modularity,
            threshold: self.tree.global_threshold,
            no_structure: self.tree.no_structure,
            width: self.layout.width,
            height: self.layout.height,
            weighted_attraction: self.layout.weighted_attraction,
            can_coarsen_step: self.tree.next_merge(&self.view).is_some(),
            stat: info,
            nodes,
            edges,
        })
    }

    pub fn frontier_set(&self) -> &BTreeSet<NodeId> {
        &self.view.frontier
    }

    /// Displayed frontier as a partition of the graph.
    pub fn frontier_partition(&self) -> Result<Partition> {
        Partition::new(&self.graph, self.view.assignment.clone())
    }

    pub fn export(&mut self, format: ExportFormat, stat: Option<&StatRequest>) -> Result<String> {
        Ok(match format {
            ExportFormat::Svg => svg(&self.document(stat)?),
            ExportFormat::ViewJson => view_json(&self.document(stat)?),
            ExportFormat::HierarchyJson => {
                HierarchyDocument::new(self.graph.clone(), self.tree.clone()).to_json()
            }
            ExportFormat::PartitionTsv => write_partition_tsv(&self.graph, &self.frontier_partition()?),
        })
    }
}

/// Quotient graph of a view, with tree node ids as cluster ids.
pub fn quotient_for(g: &Graph, view: &ViewState) -> Result<QuotientGraph> {
    QuotientGraph::from_assignment(g, &view.assignment, &view.ids())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::hierarchy::{build_hierarchy, HierarchyConfig};

    fn explorer() -> Explorer {
        let g = fixtures::ring_of_cliques(4, 5);
        let cfg = HierarchyConfig {
            trials: 30,
            seed: 1,
            ..HierarchyConfig::default()
        };
        let tree = build_hierarchy(&g, &cfg).unwrap();
        Explorer::new(g, tree, LayoutConfig::default()).unwrap()
    }

    #[test]
    fn coarsen_then_refine_restores_positions() {
        let mut ex = explorer();
        if ex.tree.coarse_chain.is_empty() {
            return;
        }
        let before = ex.layout().clone();
        ex.coarsen_step().unwrap();
        let merged = ex.tree.coarse_chain[0].merged;
        ex.refine(merged).unwrap();
        assert_eq!(ex.layout(), &before);
        assert_eq!(ex.undo_depth(), 2);
    }

    #[test]
    fn undo_restores_document() {
        let mut ex = explorer();
        let doc = serde_json::to_string(&ex.document(None).unwrap()).unwrap();
        if ex.coarsen_step().is_ok() {
            ex.undo().unwrap();
        }
        let again = serde_json::to_string(&ex.document(None).unwrap()).unwrap();
        assert_eq!(doc, again);
        assert_eq!(ex.undo(), Err(Error::NothingToUndo));
    }

    #[test]
    fn terminal_refine_fails_cleanly() {
        let mut ex = explorer();
        let id = *ex.view().frontier.iter().next().unwrap();
        let err = ex.refine(id).unwrap_err();
        assert_eq!(err.to_string(), "no significant substructure");
        assert_eq!(ex.undo_depth(), 0);
    }

    #[test]
    fn document_flags() {
        let mut ex = explorer();
        let doc = ex.document(None).unwrap();
        assert_eq!(doc.nodes.len(), 4);
        assert!(doc.nodes.iter().all(|n| !n.refinable));
        assert_eq!(doc.can_coarsen_step, !ex.tree.coarse_chain.is_empty());
    }
}
