//! Simple undirected graphs with dense integer node ids.
//!
//! Nodes carry the token they were read from so exports can use the
//! caller's naming. Categorical attributes are stored column-wise, one
//! label per node.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label assigned to nodes that have no row in an attribute table.
pub const MISSING_CATEGORY: &str = "NA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    attributes: BTreeMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    tokens: Vec<String>,
    edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    attributes: BTreeMap<String, Vec<String>>,
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        GraphRepr {
            tokens: g.tokens,
            edges: g.edges,
            attributes: g.attributes,
        }
    }
}

impl TryFrom<GraphRepr> for Graph {
    type Error = Error;

    fn try_from(repr: GraphRepr) -> Result<Self> {
        let mut g = Graph::with_tokens(repr.tokens, repr.edges)?;
        for (name, labels) in repr.attributes {
            if labels.len() != g.node_count() {
                return Err(Error::InvalidGraph(format!(
                    "attribute `{name}` has {} labels for {} nodes",
                    labels.len(),
                    g.node_count()
                )));
            }
            g.attributes.insert(name, labels);
        }
        Ok(g)
    }
}

impl Graph {
    /// Builds a graph on `n` nodes named `"0"..n`.
    ///
    /// Rejects self-loops, duplicate edges and out-of-range endpoints.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let tokens = (0..n).map(|i| i.to_string()).collect();
        Self::with_tokens(tokens, edges)
    }

    pub fn with_tokens<I>(tokens: Vec<String>, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let n = tokens.len();
        let mut index = HashMap::with_capacity(n);
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate node token `{t}`")));
            }
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n {
                return Err(Error::UnknownNode(u));
            }
            if v >= n {
                return Err(Error::UnknownNode(v));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            if !set.insert((u.min(v), u.max(v))) {
                return Err(Error::InvalidGraph(format!("duplicate edge {u}-{v}")));
            }
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Graph {
            tokens,
            index,
            edges,
            adjacency,
            attributes: BTreeMap::new(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.node_count() && self.adjacency[u].binary_search(&v).is_ok()
    }

    pub fn degree_sequence(&self) -> DegreeSequence {
        DegreeSequence(self.adjacency.iter().map(Vec::len).collect())
    }

    pub fn token(&self, node: usize) -> &str {
        &self.tokens[node]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn node_id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn attributes(&self) -> &BTreeMap<String, Vec<String>> {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&[String]> {
        self.attributes.get(name).map(Vec::as_slice)
    }

    /// Sets one label per node for `name`, replacing any previous column.
    pub fn set_attribute(&mut self, name: impl Into<String>, labels: Vec<String>) -> Result<()> {
        if labels.len() != self.node_count() {
            return Err(Error::InvalidParameter(format!(
                "{} labels given for {} nodes",
                labels.len(),
                self.node_count()
            )));
        }
        self.attributes.insert(name.into(), labels);
        Ok(())
    }
}

/// Node degrees indexed by node id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeSequence(pub Vec<usize>);

impl DegreeSequence {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Result of parsing an edge list.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: Graph,
    pub duplicates_dropped: usize,
    pub self_loops_dropped: usize,
}

/// Parses a whitespace-separated edge list. Lines starting with `#` and
/// blank lines are skipped; tokens get dense ids in order of first
/// appearance.
pub fn load_edge_list(text: &str) -> Result<LoadedGraph> {
    let mut tokens: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    let mut duplicates_dropped = 0;
    let mut self_loops_dropped = 0;

    let mut intern = |tok: &str| -> usize {
        if let Some(&id) = index.get(tok) {
            return id;
        }
        let id = tokens.len();
        tokens.push(tok.to_owned());
        index.insert(tok.to_owned(), id);
        id
    };

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected two node tokens, found {}", fields.len()),
            });
        }
        let u = intern(fields[0]);
        let v = intern(fields[1]);
        if u == v {
            self_loops_dropped += 1;
            continue;
        }
        if !seen.insert((u.min(v), u.max(v))) {
            duplicates_dropped += 1;
            continue;
        }
        edges.push((u, v));
    }

    let graph = Graph::with_tokens(tokens, edges)?;
    Ok(LoadedGraph {
        graph,
        duplicates_dropped,
        self_loops_dropped,
    })
}

/// Writes the graph back out in edge-list form.
pub fn write_edge_list(g: &Graph) -> String {
    let mut out = String::new();
    for &(u, v) in g.edges() {
        out.push_str(g.token(u));
        out.push(' ');
        out.push_str(g.token(v));
        out.push('\n');
    }
    out
}

/// Result of attaching an attribute table to a graph.
#[derive(Debug, Clone)]
pub struct AttributeLoad {
    pub graph: Graph,
    /// Human-readable notes about rows that could not be matched.
    pub warnings: Vec<String>,
}

/// Attaches a comma- or tab-delimited attribute table. The delimiter is
/// taken from the header row (tab wins if present).
///
/// Nodes without a row get [`MISSING_CATEGORY`]. Rows for unknown tokens
/// are skipped with a warning; a token appearing twice is an error.
pub fn load_attributes(text: &str, graph: &Graph) -> Result<AttributeLoad> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));

    let mut graph = graph.clone();
    let Some((_, header)) = lines.next() else {
        return Ok(AttributeLoad {
            graph,
            warnings: Vec::new(),
        });
    };
    let delimiter = if header.contains('\t') { '\t' } else { ',' };
    let names: Vec<String> = header
        .split(delimiter)
        .skip(1)
        .map(|s| s.trim().to_owned())
        .collect();
    if names.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "header names no attributes".into(),
        });
    }

    let n = graph.node_count();
    let mut columns = vec![vec![MISSING_CATEGORY.to_owned(); n]; names.len()];
    let mut seen_rows = BTreeSet::new();
    let mut warnings = Vec::new();

    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(delimiter).map(str::trim).collect();
        if fields.len() != names.len() + 1 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!(
                    "expected {} fields, found {}",
                    names.len() + 1,
                    fields.len()
                ),
            });
        }
        let token = fields[0];
        if !seen_rows.insert(token.to_owned()) {
            return Err(Error::DuplicateAttributeRow(token.to_owned()));
        }
        let Some(id) = graph.node_id(token) else {
            warnings.push(format!("line {}: node `{token}` not in graph", lineno + 1));
            continue;
        };
        for (col, value) in columns.iter_mut().zip(&fields[1..]) {
            col[id] = if value.is_empty() {
                MISSING_CATEGORY.to_owned()
            } else {
                (*value).to_owned()
            };
        }
    }

    for (name, col) in names.into_iter().zip(columns) {
        graph.attributes.insert(name, col);
    }
    Ok(AttributeLoad { graph, warnings })
}

/// Connected components, largest first; ties broken by smallest member.
/// Members of each component are sorted.
pub fn connected_components(g: &Graph) -> Vec<Vec<usize>> {
    let n = g.node_count();
    let mut seen = vec![false; n];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut members = Vec::new();
        while let Some(u) = stack.pop() {
            members.push(u);
            for &v in g.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    components.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    components
}

/// An induced subgraph together with the ids its nodes had in the parent.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    pub graph: Graph,
    /// `original[i]` is the parent id of subgraph node `i`.
    pub original: Vec<usize>,
}

/// Restricts `g` to `nodes`, keeping every edge with both endpoints inside.
/// New ids follow the ascending order of the original ids.
pub fn induced_subgraph(g: &Graph, nodes: &[usize]) -> Result<Subgraph> {
    let n = g.node_count();
    let mut original: Vec<usize> = nodes.to_vec();
    original.sort_unstable();
    original.dedup();
    if let Some(&bad) = original.iter().find(|&&u| u >= n) {
        return Err(Error::UnknownNode(bad));
    }
    let mut local = vec![usize::MAX; n];
    for (i, &u) in original.iter().enumerate() {
        local[u] = i;
    }
    let mut edges = Vec::new();
    for &u in &original {
        for &v in g.neighbors(u) {
            if u < v && local[v] != usize::MAX {
                edges.push((local[u], local[v]));
            }
        }
    }
    let tokens = original.iter().map(|&u| g.tokens[u].clone()).collect();
    let mut graph = Graph::with_tokens(tokens, edges)?;
    for (name, labels) in &g.attributes {
        let col = original.iter().map(|&u| labels[u].clone()).collect();
        graph.attributes.insert(name.clone(), col);
    }
    Ok(Subgraph { graph, original })
}

/// The largest connected component (ties go to the one holding the
/// smallest node id).
pub fn largest_component(g: &Graph) -> Subgraph {
    let comps = connected_components(g);
    let nodes = comps.into_iter().next().unwrap_or_default();
    induced_subgraph(g, &nodes).expect("component members are valid ids")
}

/// One node of a quotient graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterNode {
    pub id: usize,
    pub size: usize,
}

/// Graph of clusters. Edge weights count the original edges joining two
/// clusters; intra-cluster edge counts are kept alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientGraph {
    pub nodes: Vec<ClusterNode>,
    /// Keyed by `(min id, max id)`.
    pub edges: BTreeMap<(usize, usize), usize>,
    /// Intra-cluster edge count per entry of `nodes`.
    pub internal_edges: Vec<usize>,
}

impl QuotientGraph {
    /// Builds the quotient for a cluster assignment, naming cluster `c`
    /// `ids[c]`.
    pub fn from_assignment(g: &Graph, assignment: &[usize], ids: &[usize]) -> Result<Self> {
        if assignment.len() != g.node_count() {
            return Err(Error::PartitionMismatch(format!(
                "{} assignments for {} nodes",
                assignment.len(),
                g.node_count()
            )));
        }
        let k = ids.len();
        let mut sizes = vec![0usize; k];
        for &c in assignment {
            if c >= k {
                return Err(Error::InvalidCluster(c));
            }
            sizes[c] += 1;
        }
        let mut internal_edges = vec![0usize; k];
        let mut edges = BTreeMap::new();
        for &(u, v) in g.edges() {
            let (a, b) = (assignment[u], assignment[v]);
            if a == b {
                internal_edges[a] += 1;
            } else {
                let (x, y) = (ids[a].min(ids[b]), ids[a].max(ids[b]));
                *edges.entry((x, y)).or_insert(0) += 1;
            }
        }
        let nodes = ids
            .iter()
            .zip(&sizes)
            .map(|(&id, &size)| ClusterNode { id, size })
            .collect();
        Ok(QuotientGraph {
            nodes,
            edges,
            internal_edges,
        })
    }

    pub fn total_size(&self) -> usize {
        self.nodes.iter().map(|n| n.size).sum()
    }

    pub fn total_edge_weight(&self) -> usize {
        self.edges.values().sum()
    }
}

/// Quotient graph of a partition, with cluster ids `0..k`.
pub fn quotient_graph(g: &Graph, p: &crate::modularity::Partition) -> Result<QuotientGraph> {
    let ids: Vec<usize> = (0..p.cluster_count()).collect();
    QuotientGraph::from_assignment(g, p.assignment(), &ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::modularity::Partition;

    #[test]
    fn triangle() {
        let lg = load_edge_list("0 1\n1 2\n2 0").unwrap();
        assert_eq!(lg.graph.node_count(), 3);
        assert_eq!(lg.graph.edge_count(), 3);
    }

    #[test]
    fn drops_duplicates_and_self_loops() {
        let lg = load_edge_list("0 1\n0 1\n0 0").unwrap();
        assert_eq!(lg.graph.edge_count(), 1);
        assert_eq!(lg.graph.node_count(), 2);
        assert_eq!(lg.duplicates_dropped, 1);
        assert_eq!(lg.self_loops_dropped, 1);
    }

    #[test]
    fn reversed_duplicate_is_dropped() {
        let lg = load_edge_list("a b\nb a\n").unwrap();
        assert_eq!(lg.graph.edge_count(), 1);
        assert_eq!(lg.duplicates_dropped, 1);
    }

    #[test]
    fn barbell_file() {
        let lg = load_edge_list(fixtures::BARBELL_EDGES).unwrap();
        let g = lg.graph;
        assert_eq!(g.node_count(), 6);
        assert_eq!(g.edge_count(), 7);
        assert_eq!(g.degree_sequence().0, vec![2, 2, 3, 3, 2, 2]);
        assert_eq!(g.node_id("c"), Some(2));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = load_edge_list("# header\n0 1\n1 2 3\n").unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: 3,
                message: "expected two node tokens, found 3".into()
            }
        );
        assert!(matches!(load_edge_list("x\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let lg = load_edge_list("# c\n\n  \na b\n# d e\n").unwrap();
        assert_eq!(lg.graph.edge_count(), 1);
    }

    #[test]
    fn attributes_two_categories() {
        let g = fixtures::barbell();
        let table = "node,orientation\na,BM\nb,BM\nc,HT\nd,HT\ne,BM\nf,HT\n";
        let load = load_attributes(table, &g).unwrap();
        assert!(load.warnings.is_empty());
        let col = load.graph.attribute("orientation").unwrap();
        let cats: BTreeSet<&String> = col.iter().collect();
        assert_eq!(load.graph.attributes().len(), 1);
        assert_eq!(cats.len(), 2);
        assert_eq!(col[2], "HT");
    }

    #[test]
    fn attributes_tab_delimited() {
        let g = fixtures::barbell();
        let load = load_attributes("id\tsex\tage\na\tM\t30\n", &g).unwrap();
        assert_eq!(load.graph.attribute("sex").unwrap()[0], "M");
        assert_eq!(load.graph.attribute("age").unwrap()[0], "30");
        assert_eq!(load.graph.attribute("age").unwrap()[1], MISSING_CATEGORY);
    }

    #[test]
    fn header_only_table_declares_missing_labels() {
        let g = fixtures::barbell();
        let load = load_attributes("node,orientation\n", &g).unwrap();
        let col = load.graph.attribute("orientation").unwrap();
        assert!(col.iter().all(|l| l == MISSING_CATEGORY));
        assert_eq!(load.graph.edges(), g.edges());
    }

    #[test]
    fn empty_table_is_a_no_op() {
        let g = fixtures::barbell();
        let load = load_attributes("", &g).unwrap();
        assert_eq!(load.graph, g);
    }

    #[test]
    fn unknown_token_warns() {
        let g = fixtures::barbell();
        let load = load_attributes("node,o\na,BM\nz,HT\n", &g).unwrap();
        assert_eq!(load.warnings.len(), 1);
        assert!(load.warnings[0].contains('z'));
        assert_eq!(load.graph.attribute("o").unwrap()[0], "BM");
    }

    #[test]
    fn duplicate_row_is_an_error() {
        let g = fixtures::barbell();
        let err = load_attributes("node,o\na,BM\na,HT\n", &g).unwrap_err();
        assert_eq!(err, Error::DuplicateAttributeRow("a".into()));
    }

    #[test]
    fn components() {
        let tri = Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(connected_components(&tri), vec![vec![0, 1, 2]]);

        let with_iso = Graph::from_edges(4, [(1, 2), (2, 3), (1, 3)]).unwrap();
        assert_eq!(connected_components(&with_iso), vec![vec![1, 2, 3], vec![0]]);

        assert_eq!(connected_components(&fixtures::barbell()).len(), 1);
    }

    #[test]
    fn component_ties_use_smallest_member() {
        let g = Graph::from_edges(4, [(2, 3), (0, 1)]).unwrap();
        assert_eq!(connected_components(&g), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn induced_subgraphs_of_barbell() {
        let g = fixtures::barbell();
        let left = induced_subgraph(&g, &[0, 1, 2]).unwrap();
        assert_eq!(left.graph.edge_count(), 3);
        assert_eq!(left.graph.node_count(), 3);

        let bridge = induced_subgraph(&g, &[3, 2]).unwrap();
        assert_eq!(bridge.graph.node_count(), 2);
        assert_eq!(bridge.graph.edge_count(), 1);
        assert_eq!(bridge.original, vec![2, 3]);
        assert_eq!(bridge.graph.token(0), "c");

        let all = induced_subgraph(&g, &[0, 1, 2, 3, 4, 5]).unwrap();
        assert_eq!(all.graph.edges(), g.edges());

        assert_eq!(induced_subgraph(&g, &[0, 9]).unwrap_err(), Error::UnknownNode(9));
    }

    #[test]
    fn quotients_of_barbell() {
        let g = fixtures::barbell();
        let two = Partition::new(&g, vec![0, 0, 0, 1, 1, 1]).unwrap();
        let q = quotient_graph(&g, &two).unwrap();
        assert_eq!(q.nodes.iter().map(|n| n.size).collect::<Vec<_>>(), vec![3, 3]);
        assert_eq!(q.edges.len(), 1);
        assert_eq!(q.edges[&(0, 1)], 1);

        let singles = Partition::singletons(&g).unwrap();
        let q = quotient_graph(&g, &singles).unwrap();
        assert_eq!(q.edges.len(), 7);
        assert!(q.edges.values().all(|&w| w == 1));

        let one = Partition::new(&g, vec![0; 6]).unwrap();
        let q = quotient_graph(&g, &one).unwrap();
        assert_eq!(q.nodes.len(), 1);
        assert!(q.edges.is_empty());
    }

    #[test]
    fn quotient_rejects_short_assignment() {
        let g = fixtures::barbell();
        assert!(matches!(
            QuotientGraph::from_assignment(&g, &[0, 0], &[0]),
            Err(Error::PartitionMismatch(_))
        ));
    }

    #[test]
    fn serde_round_trip_rebuilds_adjacency() {
        let mut g = fixtures::barbell();
        g.set_attribute("o", vec!["x".into(); 6]).unwrap();
        let json = serde_json::to_string(&g).unwrap();
        let back: Graph = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
    }
}
