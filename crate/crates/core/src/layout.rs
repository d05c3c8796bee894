//! Force-directed placement of quotient graphs.
//!
//! A Fruchterman–Reingold simulation where the repulsion a cluster exerts
//! is scaled by its member count: node `i` pushes node `j` with magnitude
//! `w_i · k² / d`. Edges attract with `d² / k`. Displacements are capped by
//! a temperature that cools linearly to zero, and positions stay inside
//! the drawing bounds.
//!
//! Node circles obey `π r² = area_scale · size`, with one `area_scale` per
//! layout so that areas compare across refine and coarsen steps.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ClusterNode, QuotientGraph};

/// How pairwise repulsion depends on cluster sizes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Repulsion {
    /// Force from `i` on `j` is `w_i · k²/d`.
    #[default]
    SizeWeighted,
    /// `w_i · w_j · k²/d`, reciprocal.
    Symmetric,
    /// Classic unweighted `k²/d`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutConfig {
    pub iterations: usize,
    pub width: f64,
    pub height: f64,
    /// Area used for the ideal distance `k = √(area / Σ sizes)`; defaults
    /// to `width · height`.
    pub area: Option<f64>,
    /// Starting temperature as a fraction of the bounds diagonal.
    pub initial_temperature: f64,
    /// Share of the drawing area covered by node discs in total.
    pub node_area_fraction: f64,
    pub repulsion: Repulsion,
    /// Scale edge attraction by quotient edge weight.
    pub weighted_attraction: bool,
    /// Strength of the spring holding refined children near their parent's
    /// slot, relative to an edge.
    pub anchor_strength: f64,
    pub seed: u64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            iterations: 300,
            width: 1000.0,
            height: 1000.0,
            area: None,
            initial_temperature: 0.1,
            node_area_fraction: 0.08,
            repulsion: Repulsion::SizeWeighted,
            weighted_attraction: false,
            anchor_strength: 0.5,
            seed: 0,
        }
    }
}

impl LayoutConfig {
    fn area(&self) -> f64 {
        self.area.unwrap_or(self.width * self.height)
    }

    fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutNode {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    /// Sorted by id.
    pub nodes: Vec<LayoutNode>,
    pub area_scale: f64,
    pub width: f64,
    pub height: f64,
    pub seed: u64,
    pub weighted_attraction: bool,
}

impl Layout {
    pub fn node(&self, id: usize) -> Option<&LayoutNode> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn ids(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.id).collect()
    }

    pub fn radius_for(&self, size: usize) -> f64 {
        radius(self.area_scale, size)
    }

    fn insert(&mut self, node: LayoutNode) {
        match self.nodes.binary_search_by_key(&node.id, |n| n.id) {
            Ok(i) => self.nodes[i] = node,
            Err(i) => self.nodes.insert(i, node),
        }
    }
}

fn radius(area_scale: f64, size: usize) -> f64 {
    (area_scale * size as f64 / PI).sqrt()
}

/// Per-iteration record of the simulation, for checking the cooling
/// schedule.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayoutTrace {
    pub temperatures: Vec<f64>,
    pub max_displacements: Vec<f64>,
}

struct Body {
    x: f64,
    y: f64,
    weight: f64,
    movable: bool,
    anchor: Option<(f64, f64)>,
}

struct Simulation<'a> {
    bodies: Vec<Body>,
    /// `(i, j, weight)` over body indices.
    springs: Vec<(usize, usize, f64)>,
    k: f64,
    cfg: &'a LayoutConfig,
}

impl Simulation<'_> {
    fn run(&mut self, t0: f64, iterations: usize, trace: &mut LayoutTrace) {
        let n = self.bodies.len();
        let k2 = self.k * self.k;
        let min_d = 1e-6 * self.k;
        let mut disp = vec![(0.0f64, 0.0f64); n];
        let movable_weight: f64 = self.bodies.iter().filter(|b| b.movable).map(|b| b.weight).sum();

        for it in 0..iterations {
            let temp = t0 * (1.0 - it as f64 / iterations as f64);
            disp.iter_mut().for_each(|d| *d = (0.0, 0.0));

            for i in 0..n {
                for j in i + 1..n {
                    if !self.bodies[i].movable && !self.bodies[j].movable {
                        continue;
                    }
                    let (ux, uy, d) = direction(&self.bodies[i], &self.bodies[j], i, j, min_d);
                    let (wi, wj) = (self.bodies[i].weight, self.bodies[j].weight);
                    let (on_j, on_i) = match self.cfg.repulsion {
                        Repulsion::SizeWeighted => (wi * k2 / d, wj * k2 / d),
                        Repulsion::Symmetric => (wi * wj * k2 / d, wi * wj * k2 / d),
                        Repulsion::Uniform => (k2 / d, k2 / d),
                    };
                    disp[j].0 += ux * on_j;
                    disp[j].1 += uy * on_j;
                    disp[i].0 -= ux * on_i;
                    disp[i].1 -= uy * on_i;
                }
            }

            for &(i, j, w) in &self.springs {
                let (ux, uy, d) = direction(&self.bodies[i], &self.bodies[j], i, j, min_d);
                let mut f = d * d / self.k;
                if self.cfg.weighted_attraction {
                    f *= w;
                }
                disp[i].0 += ux * f;
                disp[i].1 += uy * f;
                disp[j].0 -= ux * f;
                disp[j].1 -= uy * f;
            }

            // Non-reciprocal repulsion and frozen neighbours give the movable
            // bodies a net push; left in, a free drawing chases itself into a
            // wall and refined children wander off their slot. Removing the
            // size-weighted mean displacement is a pure translation.
            let (mut mx, mut my) = (0.0, 0.0);
            for (b, &(dx, dy)) in self.bodies.iter().zip(&disp) {
                if b.movable {
                    mx += b.weight * dx;
                    my += b.weight * dy;
                }
            }
            let (mx, my) = (mx / movable_weight.max(1.0), my / movable_weight.max(1.0));
            for (b, d) in self.bodies.iter().zip(disp.iter_mut()) {
                if b.movable {
                    *d = (d.0 - mx, d.1 - my);
                }
            }

            for (b, dv) in self.bodies.iter().zip(disp.iter_mut()) {
                if let Some((ax, ay)) = b.anchor {
                    let (dx, dy) = (ax - b.x, ay - b.y);
                    let d = dx.hypot(dy);
                    if d > 0.0 {
                        let f = self.cfg.anchor_strength * d * d / self.k;
                        dv.0 += dx / d * f;
                        dv.1 += dy / d * f;
                    }
                }
            }

            let mut max_step = 0.0f64;
            for (b, &(dx, dy)) in self.bodies.iter_mut().zip(&disp) {
                if !b.movable {
                    continue;
                }
                let len = dx.hypot(dy);
                if len == 0.0 || !len.is_finite() {
                    continue;
                }
                let step = len.min(temp);
                let nx = (b.x + dx / len * step).clamp(0.0, self.cfg.width);
                let ny = (b.y + dy / len * step).clamp(0.0, self.cfg.height);
                max_step = max_step.max((nx - b.x).hypot(ny - b.y));
                b.x = nx;
                b.y = ny;
            }
            trace.temperatures.push(temp);
            trace.max_displacements.push(max_step);
        }
    }
}

/// Unit vector from `a` to `b` and their distance, clamped away from zero.
/// Coincident points separate along a direction fixed by the pair indices.
fn direction(a: &Body, b: &Body, i: usize, j: usize, min_d: f64) -> (f64, f64, f64) {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let d = dx.hypot(dy);
    if d == 0.0 {
        let angle = (i * 7919 + j * 104_729) as f64;
        return (angle.cos(), angle.sin(), min_d);
    }
    (dx / d, dy / d, d.max(min_d))
}

fn ideal_distance(cfg: &LayoutConfig, total_size: usize) -> f64 {
    (cfg.area() / total_size.max(1) as f64).sqrt()
}

fn area_scale(cfg: &LayoutConfig, total_size: usize) -> f64 {
    cfg.node_area_fraction * cfg.width * cfg.height / total_size.max(1) as f64
}

/// Lays out a quotient graph from a seeded random start.
pub fn fr_layout(qg: &QuotientGraph, cfg: &LayoutConfig) -> Layout {
    fr_layout_traced(qg, cfg).0
}

pub fn fr_layout_traced(qg: &QuotientGraph, cfg: &LayoutConfig) -> (Layout, LayoutTrace) {
    let mut trace = LayoutTrace::default();
    let total = qg.total_size();
    let scale = area_scale(cfg, total);
    let mut order: Vec<ClusterNode> = qg.nodes.clone();
    order.sort_by_key(|n| n.id);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bodies: Vec<Body> = if order.len() == 1 {
        vec![Body {
            x: cfg.width / 2.0,
            y: cfg.height / 2.0,
            weight: order[0].size as f64,
            movable: false,
            anchor: None,
        }]
    } else {
        order
            .iter()
            .map(|n| Body {
                x: rng.random_range(0.0..cfg.width),
                y: rng.random_range(0.0..cfg.height),
                weight: n.size as f64,
                movable: true,
                anchor: None,
            })
            .collect()
    };

    let index: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    let springs = qg
        .edges
        .iter()
        .map(|(&(a, b), &w)| (index[&a], index[&b], w as f64))
        .collect();

    let mut sim = Simulation {
        bodies,
        springs,
        k: ideal_distance(cfg, total),
        cfg,
    };
    if order.len() > 1 {
        sim.run(cfg.initial_temperature * cfg.diagonal(), cfg.iterations, &mut trace);
    }

    let nodes = order
        .iter()
        .zip(&sim.bodies)
        .map(|(n, b)| LayoutNode {
            id: n.id,
            x: b.x,
            y: b.y,
            radius: radius(scale, n.size),
            size: n.size,
        })
        .collect();
    let layout = Layout {
        nodes,
        area_scale: scale,
        width: cfg.width,
        height: cfg.height,
        seed: cfg.seed,
        weighted_attraction: cfg.weighted_attraction,
    };
    (layout, trace)
}

/// Replaces `refined` by `children` and runs the simulation on the
/// children only.
///
/// `qg` is the quotient graph of the new frontier (children plus every
/// other node of `parent`). Children start on a circle of half the parent
/// radius around the parent position and are softly anchored there; all
/// other nodes keep their coordinates exactly but still push and pull.
pub fn refine_layout(
    parent: &Layout,
    refined: usize,
    children: &[ClusterNode],
    qg: &QuotientGraph,
    cfg: &LayoutConfig,
) -> Result<Layout> {
    let slot = *parent.node(refined).ok_or(Error::UnknownNode(refined))?;
    if children.is_empty() {
        return Err(Error::InvalidMove(format!("cluster {refined} has no children")));
    }
    let child_sizes: usize = children.iter().map(|c| c.size).sum();
    if child_sizes != slot.size {
        return Err(Error::InvalidMove(format!(
            "children of {refined} hold {child_sizes} members, expected {}",
            slot.size
        )));
    }

    let mut out = parent.clone();
    out.nodes.retain(|n| n.id != refined);

    if let [only] = children {
        out.insert(LayoutNode {
            id: only.id,
            radius: parent.radius_for(only.size),
            size: only.size,
            ..slot
        });
        return Ok(out);
    }

    let c = children.len();
    let ring = slot.radius / 2.0;
    let mut bodies = Vec::with_capacity(out.nodes.len() + c);
    let mut ids = Vec::with_capacity(out.nodes.len() + c);
    for n in &out.nodes {
        bodies.push(Body {
            x: n.x,
            y: n.y,
            weight: n.size as f64,
            movable: false,
            anchor: None,
        });
        ids.push(n.id);
    }
    let first_child = bodies.len();
    for (i, ch) in children.iter().enumerate() {
        let angle = 2.0 * PI * i as f64 / c as f64;
        bodies.push(Body {
            x: (slot.x + ring * angle.cos()).clamp(0.0, cfg.width),
            y: (slot.y + ring * angle.sin()).clamp(0.0, cfg.height),
            weight: ch.size as f64,
            movable: true,
            anchor: Some((slot.x, slot.y)),
        });
        ids.push(ch.id);
    }

    let index: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let springs = qg
        .edges
        .iter()
        .filter_map(|(&(a, b), &w)| {
            let (ia, ib) = (*index.get(&a)?, *index.get(&b)?);
            (ia >= first_child || ib >= first_child).then_some((ia, ib, w as f64))
        })
        .collect();

    let total: usize = out.nodes.iter().map(|n| n.size).sum::<usize>() + child_sizes;
    let mut sim = Simulation {
        bodies,
        springs,
        k: ideal_distance(cfg, total),
        cfg,
    };
    sim.run(slot.radius.max(1.0), cfg.iterations, &mut LayoutTrace::default());

    // The frame edge pushes back on children that hit it, which the anchor
    // cannot always absorb. If the group's centroid strayed more than half
    // the parent radius, pull every child toward the slot by a common
    // factor; points between the slot and an in-bounds child stay in bounds.
    let kids = &sim.bodies[first_child..];
    let (mut cx, mut cy) = (0.0, 0.0);
    for (ch, b) in children.iter().zip(kids) {
        cx += ch.size as f64 * b.x;
        cy += ch.size as f64 * b.y;
    }
    let drift = (cx / slot.size as f64 - slot.x).hypot(cy / slot.size as f64 - slot.y);
    let limit = slot.radius / 2.0;
    let shrink = if drift > limit { limit / drift } else { 1.0 };

    for (ch, b) in children.iter().zip(kids) {
        out.insert(LayoutNode {
            id: ch.id,
            x: slot.x + shrink * (b.x - slot.x),
            y: slot.y + shrink * (b.y - slot.y),
            radius: parent.radius_for(ch.size),
            size: ch.size,
        });
    }
    Ok(out)
}

/// Replaces the nodes in `merged` by one node `new_id` at their
/// size-weighted centroid.
pub fn coarsen_layout(layout: &Layout, merged: &[usize], new_id: usize) -> Result<Layout> {
    let mut members = Vec::with_capacity(merged.len());
    for &id in merged {
        members.push(*layout.node(id).ok_or(Error::UnknownNode(id))?);
    }
    if members.is_empty() {
        return Err(Error::InvalidMove("nothing to merge".into()));
    }
    let size: usize = members.iter().map(|n| n.size).sum();
    let (sx, sy) = members.iter().fold((0.0, 0.0), |(sx, sy), n| {
        (sx + n.size as f64 * n.x, sy + n.size as f64 * n.y)
    });
    let mut out = layout.clone();
    out.nodes.retain(|n| !merged.contains(&n.id));
    out.insert(LayoutNode {
        id: new_id,
        x: sx / size as f64,
        y: sy / size as f64,
        radius: layout.radius_for(size),
        size,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qg(sizes: &[usize], edges: &[(usize, usize)]) -> QuotientGraph {
        QuotientGraph {
            nodes: sizes
                .iter()
                .enumerate()
                .map(|(id, &size)| ClusterNode { id, size })
                .collect(),
            edges: edges.iter().map(|&e| (e, 1)).collect(),
            internal_edges: vec![0; sizes.len()],
        }
    }

    #[test]
    fn single_cluster_sits_in_the_center() {
        let cfg = LayoutConfig::default();
        let l = fr_layout(&qg(&[7], &[]), &cfg);
        assert_eq!(l.nodes.len(), 1);
        assert_eq!((l.nodes[0].x, l.nodes[0].y), (500.0, 500.0));
        let r = l.nodes[0].radius;
        assert!((PI * r * r - l.area_scale * 7.0).abs() < 1e-9);
    }

    #[test]
    fn coarsen_weighted_mean() {
        let l = Layout {
            nodes: vec![
                LayoutNode { id: 0, x: 0.0, y: 0.0, radius: 1.0, size: 3 },
                LayoutNode { id: 1, x: 2.0, y: 0.0, radius: 1.0, size: 1 },
                LayoutNode { id: 2, x: 9.0, y: 9.0, radius: 1.0, size: 1 },
            ],
            area_scale: 1.0,
            width: 10.0,
            height: 10.0,
            seed: 0,
            weighted_attraction: false,
        };
        let c = coarsen_layout(&l, &[0, 1], 5).unwrap();
        let n = c.node(5).unwrap();
        assert_eq!((n.x, n.y), (0.5, 0.0));
        assert_eq!(n.size, 4);
        assert_eq!(c.node(2), l.node(2));
        assert!(c.node(0).is_none());

        let same = coarsen_layout(&l, &[2], 6).unwrap();
        assert_eq!((same.node(6).unwrap().x, same.node(6).unwrap().y), (9.0, 9.0));

        assert_eq!(coarsen_layout(&l, &[0, 4], 5).unwrap_err(), Error::UnknownNode(4));
    }

    #[test]
    fn single_child_takes_parent_slot() {
        let cfg = LayoutConfig::default();
        let base = fr_layout(&qg(&[3, 4], &[(0, 1)]), &cfg);
        let children = [ClusterNode { id: 9, size: 4 }];
        let next = QuotientGraph {
            nodes: vec![ClusterNode { id: 0, size: 3 }, children[0]],
            edges: [((0, 9), 1)].into_iter().collect(),
            internal_edges: vec![0, 0],
        };
        let r = refine_layout(&base, 1, &children, &next, &cfg).unwrap();
        let old = base.node(1).unwrap();
        let new = r.node(9).unwrap();
        assert_eq!((new.x, new.y), (old.x, old.y));
    }

    #[test]
    fn refine_unknown_node() {
        let cfg = LayoutConfig::default();
        let base = fr_layout(&qg(&[3, 4], &[(0, 1)]), &cfg);
        let err = refine_layout(&base, 7, &[ClusterNode { id: 8, size: 1 }], &qg(&[1], &[]), &cfg)
            .unwrap_err();
        assert_eq!(err, Error::UnknownNode(7));
    }

    #[test]
    fn cooling_caps_every_step() {
        let cfg = LayoutConfig::default();
        let g = qg(&[5, 3, 8, 1, 2], &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]);
        let (_, trace) = fr_layout_traced(&g, &cfg);
        assert_eq!(trace.temperatures.len(), cfg.iterations);
        for (t, d) in trace.temperatures.iter().zip(&trace.max_displacements) {
            assert!(d <= &(t + 1e-9));
        }
        assert!(trace.temperatures.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn heavier_neighbor_pushes_harder() {
        let g = qg(&[100, 1], &[(0, 1)]);
        let weighted = fr_layout(&g, &LayoutConfig::default());
        let uniform = fr_layout(
            &g,
            &LayoutConfig {
                repulsion: Repulsion::Uniform,
                ..LayoutConfig::default()
            },
        );
        let dist = |l: &Layout| {
            let (a, b) = (l.node(0).unwrap(), l.node(1).unwrap());
            (a.x - b.x).hypot(a.y - b.y)
        };
        assert!(dist(&weighted) > dist(&uniform));
    }
}
