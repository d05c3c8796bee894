//! Configuration-model null hypothesis for modularity.
//!
//! Random graphs with the observed degree sequence are produced by
//! double-edge swaps on the observed graph, clustered with the same
//! maximizer, and the resulting modularity scores give a Monte Carlo
//! p-value for the observed clustering.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DegreeSequence, Graph};
use crate::modularity::{greedy_maximize, MaximizerConfig};

/// Default significance level.
pub const DEFAULT_ALPHA: f64 = 0.01;
/// Default number of null trials.
pub const DEFAULT_TRIALS: usize = 100;
/// Attempted swaps per edge when randomizing a graph.
pub const SWAPS_PER_EDGE: usize = 10;

/// Mixes a master seed with a stream index (splitmix64 finalizer), giving
/// independent reproducible sub-seeds.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Degree-preserving randomization of `template` by double-edge swaps.
///
/// `SWAPS_PER_EDGE · m` swaps are attempted. A swap takes edges `{a,b}`
/// and `{c,d}` to `{a,c}` and `{b,d}` (with a random orientation of the
/// second edge) and is rejected if it would create a self-loop or a
/// duplicate edge.
pub fn sample_configuration_graph(deg: &DegreeSequence, seed: u64, template: &Graph) -> Result<Graph> {
    if template.degree_sequence() != *deg {
        return Err(Error::DegreeMismatch);
    }
    if !deg.total().is_multiple_of(2) {
        return Err(Error::InvalidParameter("degree sum is odd".into()));
    }
    Ok(randomize(template, SWAPS_PER_EDGE * template.edge_count(), seed))
}

fn randomize(template: &Graph, attempts: usize, seed: u64) -> Graph {
    let mut edges: Vec<(usize, usize)> = template.edges().to_vec();
    let m = edges.len();
    if m < 2 {
        return template.clone();
    }
    let mut present: HashSet<(usize, usize)> = edges.iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key = |x: usize, y: usize| (x.min(y), x.max(y));

    for _ in 0..attempts {
        let i = rng.random_range(0..m);
        let j = rng.random_range(0..m);
        if i == j {
            continue;
        }
        let (a, b) = edges[i];
        let (mut c, mut d) = edges[j];
        if rng.random_bool(0.5) {
            std::mem::swap(&mut c, &mut d);
        }
        if a == c || b == d {
            continue;
        }
        let (e1, e2) = (key(a, c), key(b, d));
        if present.contains(&e1) || present.contains(&e2) {
            continue;
        }
        present.remove(&key(a, b));
        present.remove(&key(c, d));
        present.insert(e1);
        present.insert(e2);
        edges[i] = e1;
        edges[j] = e2;
    }

    let mut g = Graph::with_tokens(template.tokens().to_vec(), edges)
        .expect("swaps keep the graph simple");
    for (name, labels) in template.attributes() {
        g.set_attribute(name.clone(), labels.clone())
            .expect("node count unchanged");
    }
    g
}

/// Maximal modularity found on configuration-model samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub samples: Vec<f64>,
    pub trials: usize,
    /// Maximum of `samples`, or an externally supplied cut-off.
    pub threshold: f64,
    pub seed: u64,
}

impl NullDistribution {
    pub fn from_samples(samples: Vec<f64>, seed: u64) -> Self {
        let threshold = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        NullDistribution {
            trials: samples.len(),
            samples,
            threshold,
            seed,
        }
    }

    /// A distribution with no samples whose threshold comes from elsewhere,
    /// e.g. an analytical approximation for graphs too large to simulate.
    pub fn external(threshold: f64) -> Self {
        NullDistribution {
            samples: Vec::new(),
            trials: 0,
            threshold,
            seed: 0,
        }
    }

    pub fn is_external(&self) -> bool {
        self.trials == 0
    }

    /// Add-one Monte Carlo estimate `(1 + #{s ≥ q}) / (trials + 1)`.
    pub fn p_value(&self, q: f64) -> f64 {
        p_value(self, q)
    }

    pub fn is_significant(&self, q: f64, alpha: f64) -> bool {
        is_significant(self, q, alpha)
    }

    /// Null export: `#` header lines, then one sample per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# trials={}", self.trials);
        let _ = writeln!(out, "# seed={}", self.seed);
        let _ = writeln!(out, "# threshold={}", self.threshold);
        for s in &self.samples {
            let _ = writeln!(out, "{s}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        let mut seed = 0;
        let mut threshold = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            let bad = |m: &str| Error::Parse {
                line: i + 1,
                message: m.to_owned(),
            };
            if let Some(header) = line.strip_prefix('#') {
                if let Some((k, v)) = header.trim().split_once('=') {
                    match k {
                        "seed" => seed = v.parse().map_err(|_| bad("bad seed"))?,
                        "threshold" => {
                            threshold = Some(v.parse().map_err(|_| bad("bad threshold"))?)
                        }
                        _ => {}
                    }
                }
            } else if !line.is_empty() {
                samples.push(line.parse().map_err(|_| bad("bad sample"))?);
            }
        }
        if samples.is_empty() {
            let t = threshold.ok_or_else(|| Error::Parse {
                line: 0,
                message: "no samples and no threshold".into(),
            })?;
            return Ok(NullDistribution::external(t));
        }
        Ok(NullDistribution::from_samples(samples, seed))
    }
}

/// Runs `trials` null trials. Trial `i` randomizes `g` with sub-seed
/// `derive_seed(seed, i)` and clusters it with `cfg`. Trials run on the
/// current rayon pool; results are ordered by trial index, so the output
/// does not depend on scheduling.
pub fn null_distribution(
    g: &Graph,
    trials: usize,
    cfg: &MaximizerConfig,
    seed: u64,
) -> Result<NullDistribution> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if g.edge_count() == 0 {
        return Err(Error::EdgelessGraph);
    }
    let samples = (0..trials)
        .into_par_iter()
        .map(|i| null_trial(g, cfg, seed, i))
        .collect::<Result<Vec<f64>>>()?;
    Ok(NullDistribution::from_samples(samples, seed))
}

/// Sequential counterpart of [`null_distribution`].
pub fn null_distribution_sequential(
    g: &Graph,
    trials: usize,
    cfg: &MaximizerConfig,
    seed: u64,
) -> Result<NullDistribution> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let samples = (0..trials)
        .map(|i| null_trial(g, cfg, seed, i))
        .collect::<Result<Vec<f64>>>()?;
    Ok(NullDistribution::from_samples(samples, seed))
}

fn null_trial(g: &Graph, cfg: &MaximizerConfig, seed: u64, trial: usize) -> Result<f64> {
    let sub = derive_seed(seed, trial as u64);
    let sample = randomize(g, SWAPS_PER_EDGE * g.edge_count(), sub);
    Ok(greedy_maximize(&sample, cfg)?.modularity())
}

/// Add-one Monte Carlo p-value `(1 + #{s ≥ q}) / (trials + 1)`. Without
/// samples (external threshold) there is nothing to count and this is 1.
pub fn p_value(nd: &NullDistribution, q: f64) -> f64 {
    let at_least = nd.samples.iter().filter(|&&s| s >= q).count();
    (1 + at_least) as f64 / (nd.trials + 1) as f64
}

/// The smallest level a p-value can reach with this many trials, or
/// `alpha` if that is attainable.
pub fn effective_alpha(nd: &NullDistribution, alpha: f64) -> f64 {
    if nd.is_external() {
        alpha
    } else {
        alpha.max(1.0 / (nd.trials + 1) as f64)
    }
}

/// `q` must exceed every null sample (or the external threshold) and
/// reach `alpha`. With fewer than `1/alpha` trials the level cannot be
/// reached, and the test becomes "strictly above the null maximum".
pub fn is_significant(nd: &NullDistribution, q: f64, alpha: f64) -> bool {
    if nd.is_external() {
        return q > nd.threshold;
    }
    q > nd.threshold && p_value(nd, q) <= effective_alpha(nd, alpha)
}
