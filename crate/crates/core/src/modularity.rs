//! Newman modularity: evaluation, merge deltas, a greedy agglomerative
//! maximizer with local-move refinement, and an exhaustive optimum for
//! small graphs.
//!
//! For a partition with intra-cluster edge counts `e_c` and degree sums
//! `d_c` on a graph with `m` edges,
//!
//! ```text
//! Q = Σ_c [ e_c / m − (d_c / 2m)² ] = (4m·Σ e_c − Σ d_c²) / 4m²
//! ```
//!
//! All counters are integers; the right-hand form lets every comparison
//! between candidate moves be made exactly, and floating point only
//! appears in the final division.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Largest graph [`brute_force_optimal`] will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 12;

/// Assignment of every node to one of `0..k` clusters, with its modularity.
///
/// Cluster ids are canonical: clusters are numbered in order of their
/// smallest member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    assignment: Vec<usize>,
    cluster_count: usize,
    modularity: f64,
}

impl Partition {
    pub fn new(g: &Graph, assignment: Vec<usize>) -> Result<Self> {
        if assignment.len() != g.node_count() {
            return Err(Error::PartitionMismatch(format!(
                "{} assignments for {} nodes",
                assignment.len(),
                g.node_count()
            )));
        }
        let (assignment, cluster_count) = canonicalize(&assignment);
        let modularity = modularity(g, &assignment)?;
        Ok(Partition {
            assignment,
            cluster_count,
            modularity,
        })
    }

    pub fn singletons(g: &Graph) -> Result<Self> {
        Self::new(g, (0..g.node_count()).collect())
    }

    pub fn single_cluster(g: &Graph) -> Result<Self> {
        Self::new(g, vec![0; g.node_count()])
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_count(&self) -> usize {
        self.cluster_count
    }

    pub fn modularity(&self) -> f64 {
        self.modularity
    }

    pub fn cluster_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    /// Members of each cluster, ascending.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count];
        for (u, &c) in self.assignment.iter().enumerate() {
            out[c].push(u);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.cluster_count];
        for &c in &self.assignment {
            out[c] += 1;
        }
        out
    }
}

/// Relabels clusters densely in order of first appearance.
pub fn canonicalize(assignment: &[usize]) -> (Vec<usize>, usize) {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    let out = assignment
        .iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Integer numerator of `Q`: `4m·Σ e_c − Σ d_c²`, over the denominator `4m²`.
fn modularity_numerator(g: &Graph, assignment: &[usize]) -> i128 {
    let k = assignment.iter().copied().max().map_or(0, |c| c + 1);
    let mut intra = vec![0i128; k];
    let mut degree = vec![0i128; k];
    for u in 0..g.node_count() {
        degree[assignment[u]] += g.degree(u) as i128;
    }
    for &(u, v) in g.edges() {
        if assignment[u] == assignment[v] {
            intra[assignment[u]] += 1;
        }
    }
    let m = g.edge_count() as i128;
    4 * m * intra.iter().sum::<i128>() - degree.iter().map(|d| d * d).sum::<i128>()
}

fn ratio(num: i128, den: i128) -> f64 {
    num as f64 / den as f64
}

/// Newman modularity of `assignment` on `g`. Cluster labels need not be
/// dense.
pub fn modularity(g: &Graph, assignment: &[usize]) -> Result<f64> {
    if assignment.len() != g.node_count() {
        return Err(Error::PartitionMismatch(format!(
            "{} assignments for {} nodes",
            assignment.len(),
            g.node_count()
        )));
    }
    let m = g.edge_count() as i128;
    if m == 0 {
        return Err(Error::EdgelessGraph);
    }
    Ok(ratio(modularity_numerator(g, assignment), 4 * m * m))
}

/// Cached per-cluster counters for a fixed partition, answering merge
/// deltas in constant time per lookup.
#[derive(Debug, Clone)]
pub struct ClusterCounts {
    edges: u64,
    intra: Vec<u64>,
    degree: Vec<u64>,
    between: Vec<BTreeMap<usize, u64>>,
}

impl ClusterCounts {
    pub fn new(g: &Graph, p: &Partition) -> Result<Self> {
        if g.edge_count() == 0 {
            return Err(Error::EdgelessGraph);
        }
        Ok(Self::from_assignment(g, p.assignment(), p.cluster_count()))
    }

    fn from_assignment(g: &Graph, assignment: &[usize], k: usize) -> Self {
        let mut intra = vec![0u64; k];
        let mut degree = vec![0u64; k];
        let mut between = vec![BTreeMap::new(); k];
        for u in 0..g.node_count() {
            degree[assignment[u]] += g.degree(u) as u64;
        }
        for &(u, v) in g.edges() {
            let (a, b) = (assignment[u], assignment[v]);
            if a == b {
                intra[a] += 1;
            } else {
                *between[a].entry(b).or_insert(0) += 1;
                *between[b].entry(a).or_insert(0) += 1;
            }
        }
        ClusterCounts {
            edges: g.edge_count() as u64,
            intra,
            degree,
            between,
        }
    }

    pub fn cluster_count(&self) -> usize {
        self.degree.len()
    }

    pub fn edges_between(&self, a: usize, b: usize) -> u64 {
        self.between[a].get(&b).copied().unwrap_or(0)
    }

    /// Clusters joined to `a` by at least one edge, with the edge counts.
    pub fn neighbors(&self, a: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.between[a].iter().map(|(&b, &w)| (b, w))
    }

    /// Numerator of the merge delta over the denominator `2m²`.
    fn merge_numerator(&self, a: usize, b: usize) -> i128 {
        let m = self.edges as i128;
        2 * m * self.edges_between(a, b) as i128 - self.degree[a] as i128 * self.degree[b] as i128
    }

    /// `Q(merged) − Q(current)` for merging clusters `a` and `b`:
    /// `e_ab/m − 2·(d_a/2m)·(d_b/2m)`.
    pub fn merge_delta(&self, a: usize, b: usize) -> Result<f64> {
        let k = self.cluster_count();
        for c in [a, b] {
            if c >= k {
                return Err(Error::InvalidCluster(c));
            }
        }
        if a == b {
            return Err(Error::InvalidParameter(format!(
                "cannot merge cluster {a} with itself"
            )));
        }
        let m = self.edges as i128;
        Ok(ratio(self.merge_numerator(a, b), 2 * m * m))
    }

    /// Exact comparison of two merge deltas.
    pub fn compare_merges(&self, x: (usize, usize), y: (usize, usize)) -> Ordering {
        self.merge_numerator(x.0, x.1)
            .cmp(&self.merge_numerator(y.0, y.1))
    }

    pub fn modularity(&self) -> f64 {
        let m = self.edges as i128;
        let num = 4 * m * self.intra.iter().map(|&e| e as i128).sum::<i128>()
            - self.degree.iter().map(|&d| (d as i128).pow(2)).sum::<i128>();
        ratio(num, 4 * m * m)
    }
}

/// Modularity change from merging clusters `a` and `b` of `p`.
pub fn merge_delta(g: &Graph, p: &Partition, a: usize, b: usize) -> Result<f64> {
    ClusterCounts::new(g, p)?.merge_delta(a, b)
}

/// Rule used to break exact ties between candidate moves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Smallest `(min id, max id)` pair wins; for node moves, the smallest
    /// target cluster id.
    #[default]
    Lexicographic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaximizerConfig {
    /// Seeds the node visiting order of the local-move passes.
    pub seed: u64,
    /// Upper bound on the total number of local-move passes.
    pub local_move_passes: usize,
    pub tie_break: TieBreak,
}

impl Default for MaximizerConfig {
    fn default() -> Self {
        MaximizerConfig {
            seed: 0,
            local_move_passes: 10,
            tie_break: TieBreak::Lexicographic,
        }
    }
}

impl MaximizerConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        MaximizerConfig { seed, ..self }
    }
}

/// Greedy modularity maximization.
///
/// Starting from singletons, the connected cluster pair with the largest
/// positive merge delta is merged until no merge improves `Q`. Local-move
/// passes then relocate single nodes to the neighboring cluster with the
/// best positive gain; whenever a pass moves something, agglomeration is
/// retried. Stops when neither step changes anything or the pass budget
/// is spent.
pub fn greedy_maximize(g: &Graph, cfg: &MaximizerConfig) -> Result<Partition> {
    if g.edge_count() == 0 {
        return Err(Error::EdgelessGraph);
    }
    let n = g.node_count();
    let mut assignment: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut passes_left = cfg.local_move_passes;

    loop {
        agglomerate(g, &mut assignment);
        let mut moved = false;
        while passes_left > 0 {
            passes_left -= 1;
            order.shuffle(&mut rng);
            if !local_move_pass(g, &mut assignment, &order) {
                break;
            }
            moved = true;
        }
        if !moved {
            break;
        }
    }

    Partition::new(g, assignment)
}

/// Runs best-first merging to convergence. Returns whether anything merged.
fn agglomerate(g: &Graph, assignment: &mut [usize]) -> bool {
    let (canon, k) = canonicalize(assignment);
    let mut counts = ClusterCounts::from_assignment(g, &canon, k);
    let mut alive = vec![true; k];
    let mut version = vec![0u32; k];
    let mut parent: Vec<usize> = (0..k).collect();

    // (numerator, Reverse((a, b)), version a, version b): the max-heap pops
    // the largest delta, then the lexicographically smallest pair.
    let mut heap: BinaryHeap<(i128, Reverse<(usize, usize)>, u32, u32)> = BinaryHeap::new();
    for a in 0..k {
        for (b, _) in counts.neighbors(a) {
            if a < b {
                heap.push((counts.merge_numerator(a, b), Reverse((a, b)), 0, 0));
            }
        }
    }

    let mut merged_any = false;
    while let Some((num, Reverse((a, b)), va, vb)) = heap.pop() {
        if !alive[a] || !alive[b] || version[a] != va || version[b] != vb {
            continue;
        }
        if num <= 0 {
            break;
        }
        merged_any = true;
        // fold b into a
        let e_ab = counts.between[a].remove(&b).unwrap_or(0);
        counts.between[b].remove(&a);
        counts.intra[a] += counts.intra[b] + e_ab;
        counts.degree[a] += counts.degree[b];
        let moved = std::mem::take(&mut counts.between[b]);
        for (c, w) in moved {
            counts.between[c].remove(&b);
            *counts.between[c].entry(a).or_insert(0) += w;
            *counts.between[a].entry(c).or_insert(0) += w;
        }
        alive[b] = false;
        parent[b] = a;
        version[a] += 1;
        let neighbors: Vec<usize> = counts.between[a].keys().copied().collect();
        for c in neighbors {
            let (x, y) = (a.min(c), a.max(c));
            heap.push((
                counts.merge_numerator(x, y),
                Reverse((x, y)),
                version[x],
                version[y],
            ));
        }
    }

    if merged_any {
        for (slot, &c) in assignment.iter_mut().zip(&canon) {
            let mut r = c;
            while parent[r] != r {
                r = parent[r];
            }
            *slot = r;
        }
    }
    merged_any
}

/// One pass of single-node relocations in the given order. Returns whether
/// any node moved.
fn local_move_pass(g: &Graph, assignment: &mut [usize], order: &[usize]) -> bool {
    let n = g.node_count();
    let m = g.edge_count() as i128;
    let k = assignment.iter().copied().max().map_or(0, |c| c + 1).max(n);
    let mut degree = vec![0i128; k];
    for u in 0..n {
        degree[assignment[u]] += g.degree(u) as i128;
    }

    let mut moved = false;
    let mut links: BTreeMap<usize, i128> = BTreeMap::new();
    for &u in order {
        let home = assignment[u];
        let ku = g.degree(u) as i128;
        if ku == 0 {
            continue;
        }
        links.clear();
        for &v in g.neighbors(u) {
            *links.entry(assignment[v]).or_insert(0) += 1;
        }
        let k_home = links.get(&home).copied().unwrap_or(0);
        let d_home = degree[home] - ku;

        let mut best: Option<(i128, usize)> = None;
        for (&c, &k_c) in &links {
            if c == home {
                continue;
            }
            let gain = 2 * m * (k_c - k_home) - ku * (degree[c] - d_home);
            if gain > 0 && best.is_none_or(|(g0, _)| gain > g0) {
                best = Some((gain, c));
            }
        }
        if let Some((_, target)) = best {
            degree[home] -= ku;
            degree[target] += ku;
            assignment[u] = target;
            moved = true;
        }
    }
    moved
}

/// Exhaustive modularity optimum for graphs with at most
/// [`BRUTE_FORCE_LIMIT`] nodes.
///
/// Enumerates every set partition as a restricted growth string. Ties go
/// to fewer clusters, then to the lexicographically smallest assignment.
pub fn brute_force_optimal(g: &Graph) -> Result<(Partition, f64)> {
    let n = g.node_count();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLargeForBruteForce(n));
    }
    if g.edge_count() == 0 {
        return Err(Error::EdgelessGraph);
    }
    let m = g.edge_count() as i128;

    struct Search<'a> {
        g: &'a Graph,
        m: i128,
        assignment: Vec<usize>,
        intra: Vec<i128>,
        degree: Vec<i128>,
        best: Option<(i128, usize, Vec<usize>)>,
    }

    impl Search<'_> {
        fn visit(&mut self, u: usize, k: usize, sum_e: i128, sum_d2: i128) {
            let n = self.g.node_count();
            if u == n {
                let num = 4 * self.m * sum_e - sum_d2;
                let better = match &self.best {
                    None => true,
                    Some((b, bk, _)) => num > *b || (num == *b && k < *bk),
                };
                if better {
                    self.best = Some((num, k, self.assignment.clone()));
                }
                return;
            }
            let du = self.g.degree(u) as i128;
            for c in 0..=k {
                let links = self
                    .g
                    .neighbors(u)
                    .iter()
                    .filter(|&&v| v < u && self.assignment[v] == c)
                    .count() as i128;
                let d_old = self.degree[c];
                self.assignment[u] = c;
                self.intra[c] += links;
                self.degree[c] += du;
                let d2 = sum_d2 - d_old * d_old + (d_old + du) * (d_old + du);
                let next_k = if c == k { k + 1 } else { k };
                self.visit(u + 1, next_k, sum_e + links, d2);
                self.intra[c] -= links;
                self.degree[c] -= du;
            }
        }
    }

    let mut search = Search {
        g,
        m,
        assignment: vec![0; n],
        intra: vec![0; n],
        degree: vec![0; n],
        best: None,
    };
    search.visit(0, 0, 0, 0);
    let (num, _, assignment) = search.best.expect("at least one partition exists");
    let q = ratio(num, 4 * m * m);
    Ok((Partition::new(g, assignment)?, q))
}

/// Partition export: a `#` header carrying `Q`, then `token<TAB>cluster`.
pub fn write_partition_tsv(g: &Graph, p: &Partition) -> String {
    let mut out = format!(
        "# modularity={:.6} clusters={}\n",
        p.modularity(),
        p.cluster_count()
    );
    for (u, &c) in p.assignment().iter().enumerate() {
        out.push_str(g.token(u));
        out.push('\t');
        out.push_str(&c.to_string());
        out.push('\n');
    }
    out
}

/// Reads a partition export back against `g`.
pub fn read_partition_tsv(text: &str, g: &Graph) -> Result<Partition> {
    let mut assignment = vec![usize::MAX; g.node_count()];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: lineno + 1,
            message,
        };
        let (token, cluster) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected token<TAB>cluster".into()))?;
        let node = g
            .node_id(token)
            .ok_or_else(|| parse_err(format!("unknown node `{token}`")))?;
        let cluster: usize = cluster
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad cluster id `{cluster}`")))?;
        assignment[node] = cluster;
    }
    if let Some(u) = assignment.iter().position(|&c| c == usize::MAX) {
        return Err(Error::PartitionMismatch(format!(
            "node `{}` has no cluster",
            g.token(u)
        )));
    }
    Partition::new(g, assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    const EPS: f64 = 1e-12;

    #[test]
    fn barbell_two_triangles() {
        let g = fixtures::barbell();
        let q = modularity(&g, &[0, 0, 0, 1, 1, 1]).unwrap();
        assert!((q - 5.0 / 14.0).abs() < EPS);
    }

    #[test]
    fn single_cluster_is_zero() {
        let g = fixtures::barbell();
        assert_eq!(modularity(&g, &[3; 6]).unwrap(), 0.0);
        let g = fixtures::ring_of_cliques(4, 5);
        assert_eq!(modularity(&g, &[0; 20]).unwrap(), 0.0);
    }

    #[test]
    fn barbell_singletons() {
        let g = fixtures::barbell();
        let q = modularity(&g, &[0, 1, 2, 3, 4, 5]).unwrap();
        assert!((q + 34.0 / 196.0).abs() < EPS);
    }

    #[test]
    fn edgeless_graph_is_rejected() {
        let g = Graph::from_edges(3, []).unwrap();
        assert_eq!(modularity(&g, &[0, 1, 2]).unwrap_err(), Error::EdgelessGraph);
        assert_eq!(
            greedy_maximize(&g, &MaximizerConfig::default()).unwrap_err(),
            Error::EdgelessGraph
        );
    }

    #[test]
    fn canonical_labels() {
        let g = fixtures::barbell();
        let p = Partition::new(&g, vec![7, 7, 7, 2, 2, 2]).unwrap();
        assert_eq!(p.assignment(), &[0, 0, 0, 1, 1, 1]);
        assert_eq!(p.cluster_count(), 2);
    }

    #[test]
    fn merge_delta_barbell() {
        let g = fixtures::barbell();
        let p = Partition::new(&g, vec![0, 0, 0, 1, 1, 1]).unwrap();
        let d = merge_delta(&g, &p, 0, 1).unwrap();
        assert!((d + 5.0 / 14.0).abs() < EPS);
    }

    #[test]
    fn merge_delta_without_connecting_edge() {
        // two disjoint edges: d_a = d_b = m
        let g = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        let p = Partition::new(&g, vec![0, 0, 1, 1]).unwrap();
        assert!((merge_delta(&g, &p, 0, 1).unwrap() + 0.5).abs() < EPS);
    }

    #[test]
    fn merge_delta_errors() {
        let g = fixtures::barbell();
        let p = Partition::new(&g, vec![0, 0, 0, 1, 1, 1]).unwrap();
        assert_eq!(merge_delta(&g, &p, 0, 2).unwrap_err(), Error::InvalidCluster(2));
        assert!(merge_delta(&g, &p, 1, 1).is_err());
    }

    #[test]
    fn greedy_barbell() {
        let g = fixtures::barbell();
        let p = greedy_maximize(&g, &MaximizerConfig::default()).unwrap();
        assert_eq!(p.assignment(), &[0, 0, 0, 1, 1, 1]);
        assert!((p.modularity() - 5.0 / 14.0).abs() < EPS);
    }

    #[test]
    fn greedy_triangle_is_one_cluster() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let p = greedy_maximize(&g, &MaximizerConfig::default()).unwrap();
        assert_eq!(p.cluster_count(), 1);
        assert_eq!(p.modularity(), 0.0);
    }

    #[test]
    fn greedy_recovers_ring_of_cliques() {
        let g = fixtures::ring_of_cliques(4, 5);
        for seed in 0..5 {
            let p = greedy_maximize(&g, &MaximizerConfig::default().with_seed(seed)).unwrap();
            let expected: Vec<usize> = (0..20).map(|u| u / 5).collect();
            assert_eq!(p.assignment(), expected.as_slice());
        }
    }

    #[test]
    fn brute_force_small_cases() {
        let (p, q) = brute_force_optimal(&fixtures::barbell()).unwrap();
        assert_eq!(p.assignment(), &[0, 0, 0, 1, 1, 1]);
        assert!((q - 5.0 / 14.0).abs() < EPS);

        let edge = Graph::from_edges(2, [(0, 1)]).unwrap();
        let (p, q) = brute_force_optimal(&edge).unwrap();
        assert_eq!(p.cluster_count(), 1);
        assert_eq!(q, 0.0);

        let k4 = fixtures::complete(4);
        let (p, q) = brute_force_optimal(&k4).unwrap();
        assert_eq!(p.cluster_count(), 1);
        assert_eq!(q, 0.0);
    }

    #[test]
    fn brute_force_refuses_large_graphs() {
        let g = fixtures::ring_of_cliques(3, 5);
        assert_eq!(
            brute_force_optimal(&g).unwrap_err(),
            Error::TooLargeForBruteForce(15)
        );
    }

    #[test]
    fn partition_tsv_round_trip() {
        let g = fixtures::barbell();
        let p = greedy_maximize(&g, &MaximizerConfig::default()).unwrap();
        let text = write_partition_tsv(&g, &p);
        assert!(text.starts_with("# modularity=0.357143 clusters=2\n"));
        assert!(text.contains("a\t0\n"));
        let back = read_partition_tsv(&text, &g).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn partition_tsv_requires_every_node() {
        let g = fixtures::barbell();
        assert!(matches!(
            read_partition_tsv("a\t0\n", &g),
            Err(Error::PartitionMismatch(_))
        ));
    }
}
