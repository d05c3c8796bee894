//! Synthetic graphs used by tests, benchmarks and the `gen` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{load_edge_list, Graph};

/// Two triangles `a,b,c` and `d,e,f` joined by the edge `c-d`.
pub const BARBELL_EDGES: &str = "a b\nb c\na c\nd e\ne f\nd f\nc d\n";

pub fn barbell() -> Graph {
    load_edge_list(BARBELL_EDGES).expect("static fixture").graph
}

pub fn complete(n: usize) -> Graph {
    let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)));
    Graph::from_edges(n, edges).expect("complete graph is simple")
}

/// `count` cliques of `size` nodes arranged in a ring; consecutive cliques
/// are joined by one edge from the last node of one to the first node of
/// the next. Clique `c` holds nodes `c*size .. (c+1)*size`.
pub fn ring_of_cliques(count: usize, size: usize) -> Graph {
    assert!(size >= 2, "cliques need at least two nodes");
    let mut edges = Vec::new();
    for c in 0..count {
        let base = c * size;
        for u in 0..size {
            for v in u + 1..size {
                edges.push((base + u, base + v));
            }
        }
    }
    if count >= 2 {
        let n = count * size;
        let bridges = if count == 2 { 1 } else { count };
        for c in 0..bridges {
            edges.push((c * size + size - 1, ((c + 1) * size) % n));
        }
    }
    Graph::from_edges(count * size, edges).expect("ring of cliques is simple")
}

/// Two `size`-cliques joined by a single edge.
pub fn clique_barbell(size: usize) -> Graph {
    ring_of_cliques(2, size)
}

/// G(n, p) from a seeded generator.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges).expect("G(n,p) is simple")
}

/// Planted partition: blocks of the given sizes (consecutive ids), edge
/// probability `p_in` inside blocks and `p_out` across.
pub fn planted_partition(sizes: &[usize], p_in: f64, p_out: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
        .collect();
    let n = block.len();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if block[u] == block[v] { p_in } else { p_out };
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges).expect("planted partition is simple")
}

/// Two-level planted structure: `groups` groups of `blocks` blocks of
/// `size` nodes. Probabilities apply inside a block, between blocks of
/// the same group, and between groups.
pub fn hierarchical_planted(
    groups: usize,
    blocks: usize,
    size: usize,
    probs: (f64, f64, f64),
    seed: u64,
) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = groups * blocks * size;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if u / size == v / size {
                probs.0
            } else if u / (size * blocks) == v / (size * blocks) {
                probs.1
            } else {
                probs.2
            };
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges).expect("planted graph is simple")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_of_cliques_shape() {
        let g = ring_of_cliques(4, 5);
        assert_eq!(g.node_count(), 20);
        assert_eq!(g.edge_count(), 44);
        assert!(g.has_edge(4, 5));
        assert!(g.has_edge(19, 0));
        let degrees = g.degree_sequence().0;
        assert_eq!(degrees.iter().filter(|&&d| d == 5).count(), 8);
    }

    #[test]
    fn clique_barbell_has_one_bridge() {
        let g = clique_barbell(5);
        assert_eq!(g.edge_count(), 21);
        assert!(g.has_edge(4, 5));
    }
}
