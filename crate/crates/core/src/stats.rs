//! Per-cluster categorical enrichment.
//!
//! Each cluster's label counts are tested against the proportions of the
//! whole graph with a chi-squared goodness-of-fit test. Pearson residuals
//! `(O − E)/√E` give the per-category direction of the deviation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::modularity::Partition;

/// Test outcome for one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTest {
    pub cluster: usize,
    pub size: usize,
    /// Observed counts, aligned with [`AttributeStats::categories`].
    pub counts: Vec<usize>,
    pub expected: Vec<f64>,
    pub residuals: Vec<f64>,
    pub chi2: f64,
    pub dof: i64,
    pub p: f64,
    /// Some expected count is below 1; the asymptotic p-value is rough.
    pub low_confidence: bool,
    /// Fewer than two categories; `p` is set to 1.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeStats {
    pub attribute: String,
    /// Categories with a non-zero global count, sorted.
    pub categories: Vec<String>,
    pub global_counts: Vec<usize>,
    pub clusters: Vec<ClusterTest>,
}

impl AttributeStats {
    pub fn cluster(&self, id: usize) -> Option<&ClusterTest> {
        self.clusters.iter().find(|c| c.cluster == id)
    }

    pub fn category_index(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }

    /// Tab-separated export: one row per cluster, then the residual matrix.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# attribute={} test=goodness-of-fit", self.attribute);
        let _ = writeln!(out, "cluster\tn\tchi2\tdof\tp\tflag");
        for c in &self.clusters {
            let flag = match (c.degenerate, c.low_confidence) {
                (true, _) => "degenerate",
                (false, true) => "low-confidence",
                _ => "ok",
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{}\t{:.6e}\t{flag}",
                c.cluster, c.size, c.chi2, c.dof, c.p
            );
        }
        let _ = writeln!(out);
        let _ = write!(out, "# residuals\ncluster");
        for cat in &self.categories {
            let _ = write!(out, "\t{cat}");
        }
        let _ = writeln!(out);
        for c in &self.clusters {
            let _ = write!(out, "{}", c.cluster);
            for r in &c.residuals {
                let _ = write!(out, "\t{r:.6}");
            }
            let _ = writeln!(out);
        }
        out
    }
}

/// Chi-squared test of every cluster of `p` against the global label
/// distribution of `attribute`.
pub fn cluster_chi2(g: &Graph, p: &Partition, attribute: &str) -> Result<AttributeStats> {
    let ids: Vec<usize> = (0..p.cluster_count()).collect();
    cluster_chi2_labeled(g, p.assignment(), &ids, attribute)
}

/// As [`cluster_chi2`], for an assignment into `0..ids.len()` whose
/// clusters are reported under the names in `ids`.
pub fn cluster_chi2_labeled(
    g: &Graph,
    assignment: &[usize],
    ids: &[usize],
    attribute: &str,
) -> Result<AttributeStats> {
    let labels = g
        .attribute(attribute)
        .ok_or_else(|| Error::UnknownAttribute(attribute.to_owned()))?;
    if assignment.len() != g.node_count() {
        return Err(Error::PartitionMismatch(format!(
            "{} assignments for {} nodes",
            assignment.len(),
            g.node_count()
        )));
    }

    let mut global: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *global.entry(l.as_str()).or_insert(0) += 1;
    }
    let categories: Vec<String> = global.keys().map(|s| (*s).to_owned()).collect();
    let global_counts: Vec<usize> = global.values().copied().collect();
    let cat_index: BTreeMap<&str, usize> =
        global.keys().enumerate().map(|(i, s)| (*s, i)).collect();
    let total = labels.len() as f64;

    let k = ids.len();
    let mut counts = vec![vec![0usize; categories.len()]; k];
    for (u, &c) in assignment.iter().enumerate() {
        if c >= k {
            return Err(Error::InvalidCluster(c));
        }
        counts[c][cat_index[labels[u].as_str()]] += 1;
    }

    let clusters = counts
        .into_iter()
        .zip(ids)
        .map(|(obs, &id)| {
            let size: usize = obs.iter().sum();
            let expected: Vec<f64> = global_counts
                .iter()
                .map(|&gc| size as f64 * gc as f64 / total)
                .collect();
            let residuals: Vec<f64> = obs
                .iter()
                .zip(&expected)
                .map(|(&o, &e)| if e > 0.0 { (o as f64 - e) / e.sqrt() } else { 0.0 })
                .collect();
            let chi2: f64 = obs
                .iter()
                .zip(&expected)
                .filter(|(_, &e)| e > 0.0)
                .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
                .sum();
            let dof = categories.len() as i64 - 1;
            let degenerate = dof <= 0 || size == 0;
            let p = if degenerate {
                1.0
            } else {
                chi_squared_sf(chi2, dof as f64)
            };
            ClusterTest {
                cluster: id,
                size,
                low_confidence: expected.iter().any(|&e| e < 1.0),
                counts: obs,
                expected,
                residuals,
                chi2,
                dof,
                p,
                degenerate,
            }
        })
        .collect();

    Ok(AttributeStats {
        attribute: attribute.to_owned(),
        categories,
        global_counts,
        clusters,
    })
}

/// Pearson residual `(O − E)/√E` of `category` in `cluster`; positive
/// means over-represented.
pub fn pearson_residual(stats: &AttributeStats, cluster: usize, category: &str) -> Result<f64> {
    let test = stats.cluster(cluster).ok_or(Error::InvalidCluster(cluster))?;
    let idx = stats.category_index(category);
    match idx {
        Some(i) if test.expected[i] > 0.0 => Ok(test.residuals[i]),
        _ => Err(Error::ZeroExpected {
            cluster,
            category: category.to_owned(),
        }),
    }
}

/// Upper tail of the chi-squared distribution with `dof` degrees of
/// freedom.
pub fn chi_squared_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    regularized_gamma_q(dof / 2.0, x / 2.0)
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, nine terms).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut sum = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// Regularized upper incomplete gamma `Q(a, x) = Γ(a, x) / Γ(a)`.
///
/// Power series for `x < a + 1`, modified Lentz continued fraction
/// otherwise.
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    if a <= 0.0 || x < 0.0 || a.is_nan() || x.is_nan() {
        return f64::NAN;
    }
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_fraction(a, x)
    }
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    if a <= 0.0 || x < 0.0 || a.is_nan() || x.is_nan() {
        return f64::NAN;
    }
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_fraction(a, x)
    }
}

const MAX_ITER: usize = 1000;
const TINY: f64 = 1e-300;

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * f64::EPSILON {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < f64::EPSILON {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}
