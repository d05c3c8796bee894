//! Significance-gated cluster tree.
//!
//! The best greedy partition of the whole graph forms the middle level.
//! Above it, least-loss merges of connected cluster pairs are recorded as
//! long as modularity stays above the null threshold. Below it, each
//! cluster is re-clustered as an isolated subgraph and its split kept only
//! if it beats that subgraph's own configuration null and (except for the
//! deepest splits, unless `strict_bottom` is set) leaves the full-graph
//! modularity above the global threshold.
//!
//! A view is a frontier of the tree: an antichain whose member sets
//! partition the graph. Refining replaces a node by its children,
//! coarsening replaces a complete set of siblings by their parent.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{induced_subgraph, Graph};
use crate::modularity::{greedy_maximize, modularity, MaximizerConfig, Partition};
use crate::significance::{self, derive_seed, null_distribution, NullDistribution};

pub type NodeId = usize;

/// Smallest subgraph null trial count.
pub const MIN_SUB_TRIALS: usize = 25;
/// Clusters smaller than this are never split.
pub const MIN_REFINE_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchyConfig {
    pub trials: usize,
    pub alpha: f64,
    pub seed: u64,
    pub maximizer: MaximizerConfig,
    /// Apply the full-graph threshold to the deepest splits too.
    pub strict_bottom: bool,
    pub min_refine_size: usize,
    pub min_sub_trials: usize,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            trials: significance::DEFAULT_TRIALS,
            alpha: significance::DEFAULT_ALPHA,
            seed: 0,
            maximizer: MaximizerConfig::default(),
            strict_bottom: false,
            min_refine_size: MIN_REFINE_SIZE,
            min_sub_trials: MIN_SUB_TRIALS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    /// Whole graph, used only when no significant clustering exists.
    Root,
    /// Cluster of the best partition.
    Best,
    /// Created by a coarsening merge.
    Merged,
    /// Sub-cluster from a refinement.
    Refined,
}

/// Why a cluster has no refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalReason {
    TooSmall,
    NoEdges,
    SingleCluster,
    NotSignificant,
    BelowGlobalThreshold,
    NoStructure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "state", content = "reason")]
pub enum RefineState {
    /// Not examined (merge nodes, or nodes built by hand).
    Untested,
    Refined,
    Terminal(TerminalReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Graph node ids, ascending.
    pub members: Vec<usize>,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub refine: RefineState,
    /// Modularity of the best split on the isolated subgraph.
    pub local_q: Option<f64>,
    pub local_p: Option<f64>,
    pub local_threshold: Option<f64>,
    /// Children were accepted without the full-graph check (deepest level).
    pub global_exempt: bool,
}

impl TreeNode {
    fn new(id: NodeId, kind: NodeKind, members: Vec<usize>, parent: Option<NodeId>) -> Self {
        TreeNode {
            id,
            kind,
            members,
            parent,
            children: Vec::new(),
            refine: RefineState::Untested,
            local_q: None,
            local_p: None,
            local_threshold: None,
            global_exempt: false,
        }
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// One recorded coarsening merge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub left: NodeId,
    pub right: NodeId,
    pub merged: NodeId,
    /// Modularity after the merge.
    pub modularity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    pub nodes: Vec<TreeNode>,
    pub best_level: Vec<NodeId>,
    pub coarse_chain: Vec<MergeStep>,
    pub global_threshold: f64,
    pub best_modularity: f64,
    pub best_p_value: f64,
    pub no_structure: bool,
    pub null: NullDistribution,
    pub config: HierarchyConfig,
}

/// A displayed partition: an antichain of tree nodes covering the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewState {
    pub frontier: BTreeSet<NodeId>,
    /// Graph node → position of its cluster in `frontier` order.
    pub assignment: Vec<usize>,
    pub modularity: f64,
}

impl ViewState {
    pub fn ids(&self) -> Vec<NodeId> {
        self.frontier.iter().copied().collect()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.frontier.contains(&id)
    }
}

/// Outcome of testing one cluster for substructure.
#[derive(Debug, Clone, PartialEq)]
pub enum RefineDecision {
    Accepted { children: Vec<NodeId>, exempt: bool },
    Terminal(TerminalReason),
}

impl ClusterTree {
    /// Best level only: one node per cluster of `best`, no chain, no
    /// refinements.
    pub fn from_best(best: &Partition, null: NullDistribution, cfg: HierarchyConfig) -> Self {
        let nodes: Vec<TreeNode> = best
            .clusters()
            .into_iter()
            .enumerate()
            .map(|(id, members)| TreeNode::new(id, NodeKind::Best, members, None))
            .collect();
        ClusterTree {
            best_level: (0..nodes.len()).collect(),
            nodes,
            coarse_chain: Vec::new(),
            global_threshold: null.threshold,
            best_modularity: best.modularity(),
            best_p_value: null.p_value(best.modularity()),
            no_structure: false,
            null,
            config: cfg,
        }
    }

    fn no_structure(g: &Graph, best: &Partition, null: NullDistribution, cfg: HierarchyConfig) -> Self {
        let mut root = TreeNode::new(0, NodeKind::Root, (0..g.node_count()).collect(), None);
        root.refine = RefineState::Terminal(TerminalReason::NoStructure);
        ClusterTree {
            nodes: vec![root],
            best_level: vec![0],
            coarse_chain: Vec::new(),
            global_threshold: null.threshold,
            best_modularity: best.modularity(),
            best_p_value: null.p_value(best.modularity()),
            no_structure: true,
            null,
            config: cfg,
        }
    }

    pub fn node(&self, id: NodeId) -> Result<&TreeNode> {
        self.nodes.get(id).ok_or(Error::InvalidCluster(id))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes without a parent: the coarsest available level.
    pub fn top_level(&self) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.parent.is_none()).map(|n| n.id).collect()
    }

    /// Records a merge of two parentless nodes and returns the new node.
    pub fn push_merge(&mut self, left: NodeId, right: NodeId, q_after: f64) -> Result<NodeId> {
        for id in [left, right] {
            if self.node(id)?.parent.is_some() {
                return Err(Error::InvalidMove(format!("node {id} already has a parent")));
            }
        }
        if left == right {
            return Err(Error::InvalidMove("cannot merge a node with itself".into()));
        }
        let id = self.nodes.len();
        let mut members = self.nodes[left].members.clone();
        members.extend_from_slice(&self.nodes[right].members);
        members.sort_unstable();
        let mut node = TreeNode::new(id, NodeKind::Merged, members, None);
        node.children = vec![left, right];
        self.nodes.push(node);
        self.nodes[left].parent = Some(id);
        self.nodes[right].parent = Some(id);
        self.coarse_chain.push(MergeStep {
            left,
            right,
            merged: id,
            modularity: q_after,
        });
        Ok(id)
    }

    /// Splits a childless node according to `sub_assignment` (one label per
    /// member, in member order). Returns the new child ids.
    pub fn attach_children(&mut self, node: NodeId, sub_assignment: &[usize]) -> Result<Vec<NodeId>> {
        let parent = self.node(node)?;
        if !parent.children.is_empty() {
            return Err(Error::InvalidMove(format!("node {node} already has children")));
        }
        if sub_assignment.len() != parent.members.len() {
            return Err(Error::PartitionMismatch(format!(
                "{} labels for {} members",
                sub_assignment.len(),
                parent.members.len()
            )));
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (&u, &c) in parent.members.iter().zip(sub_assignment) {
            groups.entry(c).or_default().push(u);
        }
        if groups.len() < 2 {
            return Err(Error::InvalidMove("a split needs at least two parts".into()));
        }
        let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
        groups.sort_by_key(|m| m[0]);

        let mut ids = Vec::with_capacity(groups.len());
        for members in groups {
            let id = self.nodes.len();
            self.nodes.push(TreeNode::new(id, NodeKind::Refined, members, Some(node)));
            ids.push(id);
        }
        self.nodes[node].children = ids.clone();
        self.nodes[node].refine = RefineState::Refined;
        Ok(ids)
    }

    /// True when refining `id` is possible.
    pub fn is_refinable(&self, id: NodeId) -> bool {
        self.nodes.get(id).is_some_and(|n| !n.children.is_empty())
    }

    /// Leaves below the best level, skipping splits accepted without the
    /// full-graph check.
    fn checked_leaves(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack: Vec<NodeId> = self.best_level.iter().rev().copied().collect();
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id];
            if n.children.is_empty() || n.global_exempt {
                out.push(id);
            } else {
                stack.extend(n.children.iter().rev());
            }
        }
        out
    }

    /// The finest available frontier (every refinement applied).
    pub fn finest_frontier(&self) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<NodeId> = self.best_level.clone();
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id];
            if n.children.is_empty() {
                out.insert(id);
            } else {
                stack.extend(&n.children);
            }
        }
        out
    }

    // ---- views ------------------------------------------------------------

    pub fn initial_view(&self, g: &Graph) -> Result<ViewState> {
        self.view(g, self.best_level.iter().copied().collect())
    }

    /// Validates `frontier` and computes its partition and modularity.
    pub fn view(&self, g: &Graph, frontier: BTreeSet<NodeId>) -> Result<ViewState> {
        let n = g.node_count();
        let mut assignment = vec![usize::MAX; n];
        for (pos, &id) in frontier.iter().enumerate() {
            for &u in &self.node(id)?.members {
                if u >= n {
                    return Err(Error::UnknownNode(u));
                }
                if assignment[u] != usize::MAX {
                    return Err(Error::InvalidMove(format!(
                        "frontier is not an antichain: node {u} covered twice"
                    )));
                }
                assignment[u] = pos;
            }
        }
        if let Some(u) = assignment.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidMove(format!("frontier does not cover node {u}")));
        }
        let modularity = if g.edge_count() == 0 {
            0.0
        } else {
            modularity(g, &assignment)?
        };
        Ok(ViewState {
            frontier,
            assignment,
            modularity,
        })
    }

    /// Replaces `node` by its children.
    pub fn refine_view(&self, g: &Graph, v: &ViewState, node: NodeId) -> Result<ViewState> {
        let n = self.node(node)?;
        if !v.contains(node) {
            return Err(Error::InvalidMove(format!("cluster {node} is not in the view")));
        }
        if n.children.is_empty() {
            return Err(Error::TerminalNode(node));
        }
        let mut frontier = v.frontier.clone();
        frontier.remove(&node);
        frontier.extend(&n.children);
        self.view(g, frontier)
    }

    /// The parent that coarsening `target` would produce. `target` may be a
    /// frontier node (its parent is used) or the parent itself.
    pub fn coarsen_target(&self, v: &ViewState, target: NodeId) -> Result<NodeId> {
        let t = self.node(target)?;
        let parent = if v.contains(target) {
            t.parent.ok_or(Error::SignificanceBoundary)?
        } else {
            target
        };
        let p = self.node(parent)?;
        if p.children.is_empty() {
            return Err(Error::InvalidMove(format!("cluster {parent} has no children")));
        }
        if let Some(missing) = p.children.iter().find(|c| !v.contains(**c)) {
            return Err(Error::InvalidMove(format!(
                "cluster {missing} must be coarsened before {parent}"
            )));
        }
        Ok(parent)
    }

    /// Replaces a complete set of siblings by their parent.
    pub fn coarsen_view(&self, g: &Graph, v: &ViewState, target: NodeId) -> Result<ViewState> {
        let parent = self.coarsen_target(v, target)?;
        let mut frontier = v.frontier.clone();
        for c in &self.nodes[parent].children {
            frontier.remove(c);
        }
        frontier.insert(parent);
        self.view(g, frontier)
    }

    /// The earliest unapplied merge whose two sides are both displayed.
    pub fn next_merge(&self, v: &ViewState) -> Option<&MergeStep> {
        self.coarse_chain
            .iter()
            .find(|s| v.contains(s.left) && v.contains(s.right))
    }

    /// Applies [`Self::next_merge`]; fails at the end of the chain.
    pub fn coarsen_next(&self, g: &Graph, v: &ViewState) -> Result<ViewState> {
        let step = self.next_merge(v).ok_or(Error::SignificanceBoundary)?;
        self.coarsen_view(g, v, step.merged)
    }

    /// Whether a frontier node can take part in a coarsening move.
    pub fn is_coarsenable(&self, v: &ViewState, id: NodeId) -> bool {
        self.coarsen_target(v, id).is_ok()
    }

    /// Checks parent/child consistency of the whole tree.
    pub fn validate(&self, node_count: usize) -> Result<()> {
        for n in &self.nodes {
            if !n.children.is_empty() {
                let mut union: Vec<usize> = n
                    .children
                    .iter()
                    .flat_map(|&c| self.nodes[c].members.iter().copied())
                    .collect();
                union.sort_unstable();
                if union != n.members {
                    return Err(Error::InvalidGraph(format!(
                        "children of {} do not partition it",
                        n.id
                    )));
                }
                for &c in &n.children {
                    if self.nodes[c].parent != Some(n.id) {
                        return Err(Error::InvalidGraph(format!("bad parent link at {c}")));
                    }
                }
            }
        }
        let mut covered = vec![false; node_count];
        for id in self.top_level() {
            for &u in &self.nodes[id].members {
                if covered[u] {
                    return Err(Error::InvalidGraph(format!("node {u} in two roots")));
                }
                covered[u] = true;
            }
        }
        if covered.iter().any(|c| !c) {
            return Err(Error::InvalidGraph("roots do not cover the graph".into()));
        }
        Ok(())
    }
}

/// Least-loss merges above `best`, restricted to clusters joined by an
/// edge. A merge is recorded only if the resulting modularity stays
/// strictly above `threshold`. Cluster ids are those of `best`; merged
/// clusters are numbered from `best.cluster_count()` upward.
pub fn coarsen_chain(g: &Graph, best: &Partition, threshold: f64) -> Result<Vec<MergeStep>> {
    let m = g.edge_count() as i128;
    if m == 0 {
        return Err(Error::EdgelessGraph);
    }
    let k = best.cluster_count();
    let mut degree: BTreeMap<NodeId, i128> = BTreeMap::new();
    let mut intra: BTreeMap<NodeId, i128> = (0..k).map(|c| (c, 0)).collect();
    let mut between: BTreeMap<NodeId, BTreeMap<NodeId, i128>> =
        (0..k).map(|c| (c, BTreeMap::new())).collect();
    for u in 0..g.node_count() {
        *degree.entry(best.cluster_of(u)).or_insert(0) += g.degree(u) as i128;
    }
    for &(u, v) in g.edges() {
        let (a, b) = (best.cluster_of(u), best.cluster_of(v));
        if a == b {
            *intra.get_mut(&a).unwrap() += 1;
        } else {
            *between.get_mut(&a).unwrap().entry(b).or_insert(0) += 1;
            *between.get_mut(&b).unwrap().entry(a).or_insert(0) += 1;
        }
    }
    // Q = q_num / 4m², merge delta = num / 2m²
    let q_of = |intra: &BTreeMap<NodeId, i128>, degree: &BTreeMap<NodeId, i128>| {
        4 * m * intra.values().sum::<i128>() - degree.values().map(|d| d * d).sum::<i128>()
    };
    let mut q_num = q_of(&intra, &degree);
    let mut steps = Vec::new();
    let mut next_id = k;

    loop {
        // scan in ascending (a, b) order; strict improvement keeps the
        // lexicographically smallest pair among ties
        let mut choice: Option<(i128, NodeId, NodeId)> = None;
        for (&a, nbrs) in &between {
            for (&b, &e_ab) in nbrs.range(a + 1..) {
                let num = 2 * m * e_ab - degree[&a] * degree[&b];
                if choice.is_none_or(|(best_num, _, _)| num > best_num) {
                    choice = Some((num, a, b));
                }
            }
        }
        let Some((num, a, b)) = choice else { break };
        let after = q_num + 2 * num;
        let q_after = after as f64 / (4 * m * m) as f64;
        if q_after <= threshold {
            break;
        }

        let id = next_id;
        next_id += 1;
        let e_ab = between[&a][&b];
        let d = degree.remove(&a).unwrap() + degree.remove(&b).unwrap();
        let e = intra.remove(&a).unwrap() + intra.remove(&b).unwrap() + e_ab;
        let mut merged: BTreeMap<NodeId, i128> = BTreeMap::new();
        for side in [a, b] {
            for (c, w) in between.remove(&side).unwrap() {
                if c == a || c == b {
                    continue;
                }
                *merged.entry(c).or_insert(0) += w;
                let row = between.get_mut(&c).unwrap();
                row.remove(&side);
                *row.entry(id).or_insert(0) += w;
            }
        }
        between.insert(id, merged);
        degree.insert(id, d);
        intra.insert(id, e);
        q_num = after;
        debug_assert_eq!(q_num, q_of(&intra, &degree));
        steps.push(MergeStep {
            left: a,
            right: b,
            merged: id,
            modularity: q_after,
        });
    }
    Ok(steps)
}

/// Local refinement outcome for one cluster, before the global check.
#[derive(Debug, Clone)]
struct LocalOutcome {
    node: NodeId,
    split: Option<Vec<usize>>,
    reason: Option<TerminalReason>,
    q: Option<f64>,
    p: Option<f64>,
    threshold: Option<f64>,
}

fn test_locally(g: &Graph, node: &TreeNode, cfg: &HierarchyConfig) -> Result<LocalOutcome> {
    let mut out = LocalOutcome {
        node: node.id,
        split: None,
        reason: None,
        q: None,
        p: None,
        threshold: None,
    };
    if node.size() < cfg.min_refine_size.max(2) {
        out.reason = Some(TerminalReason::TooSmall);
        return Ok(out);
    }
    let sub = induced_subgraph(g, &node.members)?;
    if sub.graph.edge_count() == 0 {
        out.reason = Some(TerminalReason::NoEdges);
        return Ok(out);
    }
    let split = greedy_maximize(&sub.graph, &cfg.maximizer)?;
    out.q = Some(split.modularity());
    if split.cluster_count() < 2 {
        out.reason = Some(TerminalReason::SingleCluster);
        return Ok(out);
    }
    let trials = cfg.trials.max(cfg.min_sub_trials);
    let seed = derive_seed(derive_seed(cfg.seed, 1), node.id as u64);
    let null = null_distribution(&sub.graph, trials, &cfg.maximizer, seed)?;
    out.p = Some(null.p_value(split.modularity()));
    out.threshold = Some(null.threshold);
    if null.is_significant(split.modularity(), cfg.alpha) {
        out.split = Some(split.assignment().to_vec());
    } else {
        out.reason = Some(TerminalReason::NotSignificant);
    }
    Ok(out)
}

fn record_local(tree: &mut ClusterTree, o: &LocalOutcome) {
    let n = &mut tree.nodes[o.node];
    n.local_q = o.q;
    n.local_p = o.p;
    n.local_threshold = o.threshold;
    if let Some(r) = o.reason {
        n.refine = RefineState::Terminal(r);
    }
}

/// Full-graph modularity of the checked leaves with `node` replaced by
/// the split.
fn global_q_with_split(g: &Graph, tree: &ClusterTree, node: NodeId, split: &[usize]) -> Result<f64> {
    let mut assignment = vec![0usize; g.node_count()];
    let mut next = 0;
    for id in tree.checked_leaves() {
        if id == node {
            continue;
        }
        for &u in &tree.nodes[id].members {
            assignment[u] = next;
        }
        next += 1;
    }
    for (&u, &c) in tree.nodes[node].members.iter().zip(split) {
        assignment[u] = next + c;
    }
    modularity(g, &assignment)
}

/// Tests `node` for significant substructure and attaches the split if it
/// passes both checks. With `allow_exempt`, a split that only fails the
/// full-graph check is attached as a bottom level (its children are
/// terminal and the node is flagged exempt).
pub fn refine_cluster(
    tree: &mut ClusterTree,
    node: NodeId,
    g: &Graph,
    allow_exempt: bool,
) -> Result<RefineDecision> {
    let target = tree.node(node)?.clone();
    if !target.children.is_empty() {
        return Err(Error::InvalidMove(format!("node {node} is already split")));
    }
    let cfg = tree.config;
    let outcome = test_locally(g, &target, &cfg)?;
    apply_outcome(tree, g, &outcome, allow_exempt)
}

fn apply_outcome(
    tree: &mut ClusterTree,
    g: &Graph,
    o: &LocalOutcome,
    allow_exempt: bool,
) -> Result<RefineDecision> {
    record_local(tree, o);
    let Some(split) = &o.split else {
        return Ok(RefineDecision::Terminal(o.reason.expect("terminal outcome has a reason")));
    };
    let q = global_q_with_split(g, tree, o.node, split)?;
    if q >= tree.global_threshold {
        let children = tree.attach_children(o.node, split)?;
        return Ok(RefineDecision::Accepted {
            children,
            exempt: false,
        });
    }
    if allow_exempt {
        let children = tree.attach_children(o.node, split)?;
        tree.nodes[o.node].global_exempt = true;
        for &c in &children {
            tree.nodes[c].refine = RefineState::Terminal(TerminalReason::BelowGlobalThreshold);
        }
        return Ok(RefineDecision::Accepted {
            children,
            exempt: true,
        });
    }
    tree.nodes[o.node].refine = RefineState::Terminal(TerminalReason::BelowGlobalThreshold);
    Ok(RefineDecision::Terminal(TerminalReason::BelowGlobalThreshold))
}

/// Builds the full tree: best partition, significance test, coarse chain,
/// and recursive refinement.
pub fn build_hierarchy(g: &Graph, cfg: &HierarchyConfig) -> Result<ClusterTree> {
    if g.edge_count() == 0 {
        return Err(Error::EdgelessGraph);
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let best = greedy_maximize(g, &cfg.maximizer)?;
    let null = null_distribution(g, cfg.trials, &cfg.maximizer, derive_seed(cfg.seed, 0))?;

    if best.cluster_count() < 2 || !null.is_significant(best.modularity(), cfg.alpha) {
        return Ok(ClusterTree::no_structure(g, &best, null, *cfg));
    }

    let mut tree = ClusterTree::from_best(&best, null, *cfg);
    for step in coarsen_chain(g, &best, tree.global_threshold)? {
        let id = tree.push_merge(step.left, step.right, step.modularity)?;
        debug_assert_eq!(id, step.merged);
    }

    let mut level: Vec<NodeId> = tree.best_level.clone();
    let mut deferred: Vec<LocalOutcome> = Vec::new();
    while !level.is_empty() {
        let outcomes = level
            .par_iter()
            .map(|&id| test_locally(g, &tree.nodes[id], cfg))
            .collect::<Result<Vec<_>>>()?;
        let mut next = Vec::new();
        for o in &outcomes {
            match apply_outcome(&mut tree, g, o, false)? {
                RefineDecision::Accepted { children, .. } => next.extend(children),
                RefineDecision::Terminal(TerminalReason::BelowGlobalThreshold) => {
                    deferred.push(o.clone())
                }
                RefineDecision::Terminal(_) => {}
            }
        }
        level = next;
    }

    if !cfg.strict_bottom {
        for o in &deferred {
            tree.nodes[o.node].refine = RefineState::Untested;
            let decision = apply_outcome(&mut tree, g, o, true)?;
            debug_assert!(matches!(decision, RefineDecision::Accepted { .. }));
        }
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn cfg(trials: usize, seed: u64) -> HierarchyConfig {
        HierarchyConfig {
            trials,
            seed,
            ..HierarchyConfig::default()
        }
    }

    #[test]
    fn barbell_chain_is_empty() {
        let g = fixtures::barbell();
        let best = Partition::new(&g, vec![0, 0, 0, 1, 1, 1]).unwrap();
        assert!(coarsen_chain(&g, &best, 0.1).unwrap().is_empty());
        assert!(coarsen_chain(&g, &best, 0.0).unwrap().is_empty());
        let to_bottom = coarsen_chain(&g, &best, -1.0).unwrap();
        assert_eq!(to_bottom.len(), 1);
        assert!(to_bottom[0].modularity.abs() < 1e-15);
    }

    #[test]
    fn ring_chain_to_single_cluster() {
        let g = fixtures::ring_of_cliques(4, 5);
        let best = greedy_maximize(&g, &MaximizerConfig::default()).unwrap();
        let chain = coarsen_chain(&g, &best, -1.0).unwrap();
        assert_eq!(chain.len(), 3);
        assert!(chain.windows(2).all(|w| w[1].modularity < w[0].modularity));
        assert!(chain[2].modularity.abs() < 1e-12);
        assert_eq!(chain[0].merged, 4);
    }

    #[test]
    fn ring_of_cliques_tree() {
        let g = fixtures::ring_of_cliques(4, 5);
        let tree = build_hierarchy(&g, &cfg(50, 1)).unwrap();
        assert!(!tree.no_structure);
        assert_eq!(tree.best_level.len(), 4);
        for &id in &tree.best_level {
            assert!(tree.nodes[id].children.is_empty());
            assert!(matches!(tree.nodes[id].refine, RefineState::Terminal(_)));
        }
        assert!(tree.coarse_chain.iter().all(|s| s.modularity > tree.global_threshold));
        tree.validate(g.node_count()).unwrap();
    }

    #[test]
    fn clique_cluster_is_terminal() {
        let g = fixtures::complete(8);
        let best = Partition::single_cluster(&g).unwrap();
        let mut tree = ClusterTree::from_best(&best, NullDistribution::external(-1.0), cfg(25, 3));
        let d = refine_cluster(&mut tree, 0, &g, false).unwrap();
        assert!(matches!(d, RefineDecision::Terminal(_)));
    }

    #[test]
    fn barbell_of_cliques_cluster_splits() {
        // a single cluster holding two 5-cliques joined by one edge
        let g = fixtures::clique_barbell(5);
        let best = Partition::single_cluster(&g).unwrap();
        let mut tree = ClusterTree::from_best(&best, NullDistribution::external(-1.0), cfg(50, 3));
        let d = refine_cluster(&mut tree, 0, &g, false).unwrap();
        let RefineDecision::Accepted { children, exempt } = d else {
            panic!("expected a split, got {d:?}");
        };
        assert!(!exempt);
        assert_eq!(tree.nodes[children[0]].members, vec![0, 1, 2, 3, 4]);
        assert_eq!(tree.nodes[children[1]].members, vec![5, 6, 7, 8, 9]);
        assert!(tree.nodes[0].local_q.unwrap() > 0.4);
    }

    #[test]
    fn small_clusters_are_terminal_without_testing() {
        let g = fixtures::barbell();
        let best = Partition::new(&g, vec![0, 0, 0, 1, 1, 1]).unwrap();
        let mut tree = ClusterTree::from_best(&best, NullDistribution::external(0.0), cfg(25, 0));
        let d = refine_cluster(&mut tree, 0, &g, false).unwrap();
        assert_eq!(d, RefineDecision::Terminal(TerminalReason::TooSmall));
        assert_eq!(tree.nodes[0].local_p, None);
    }

    #[test]
    fn views_refine_and_coarsen() {
        let g = fixtures::ring_of_cliques(4, 5);
        let tree = build_hierarchy(&g, &cfg(50, 1)).unwrap();
        let v0 = tree.initial_view(&g).unwrap();
        assert_eq!(v0.frontier.len(), 4);
        assert!((v0.modularity - tree.best_modularity).abs() < 1e-12);

        let err = tree.refine_view(&g, &v0, 0).unwrap_err();
        assert_eq!(err.to_string(), "no significant substructure");

        if let Some(step) = tree.coarse_chain.first() {
            let v1 = tree.coarsen_next(&g, &v0).unwrap();
            assert_eq!(v1.frontier.len(), 3);
            assert!((v1.modularity - step.modularity).abs() < 1e-12);
            let back = tree.refine_view(&g, &v1, step.merged).unwrap();
            assert_eq!(back.frontier, v0.frontier);
        }
        let mut v = v0.clone();
        for _ in 0..tree.coarse_chain.len() {
            v = tree.coarsen_next(&g, &v).unwrap();
        }
        assert_eq!(tree.coarsen_next(&g, &v).unwrap_err(), Error::SignificanceBoundary);
    }

    #[test]
    fn invalid_frontiers_are_rejected() {
        let g = fixtures::ring_of_cliques(4, 5);
        let tree = build_hierarchy(&g, &cfg(50, 1)).unwrap();
        assert!(tree.view(&g, [0, 1, 2].into_iter().collect()).is_err());
        if let Some(step) = tree.coarse_chain.first() {
            let dup: BTreeSet<_> = [0, 1, 2, 3, step.merged].into_iter().collect();
            assert!(tree.view(&g, dup).is_err());
        }
    }

    #[test]
    fn dense_random_graph_has_no_structure() {
        let g = fixtures::erdos_renyi(60, 0.5, 11);
        let tree = build_hierarchy(&g, &cfg(30, 2)).unwrap();
        if tree.no_structure {
            assert_eq!(tree.nodes.len(), 1);
            let v = tree.initial_view(&g).unwrap();
            assert_eq!(v.modularity, 0.0);
            assert!(tree.refine_view(&g, &v, 0).is_err());
        }
    }

    #[test]
    fn edgeless_graph_is_an_error() {
        let g = Graph::from_edges(4, []).unwrap();
        assert_eq!(build_hierarchy(&g, &cfg(5, 0)).unwrap_err(), Error::EdgelessGraph);
    }
}
