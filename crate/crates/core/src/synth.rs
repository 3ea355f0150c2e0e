//! Synthetic hierarchies and prediction sets, plus brute-force oracles.
//!
//! Everything here is a pure function of [`SynthConfig`]. Draw order is
//! fixed so another implementation of [`SeededRng`] reproduces the data:
//!
//! * Trees use stream tag 1, predictions stream tag 2 (see [`SeededRng::stream`]).
//! * Normal draws: Box–Muller, `sqrt(-2 ln u1) * cos(2 pi u2)` with
//!   `u1 = uniform_open()`, `u2 = uniform()`; the sine half is discarded.
//! * Gamma(shape >= 1): Marsaglia–Tsang; per attempt one normal, then one
//!   `uniform_open()` when `v > 0`. Gamma(shape < 1) draws
//!   Gamma(shape + 1) first, then `u = uniform_open()`, and returns `g * u^(1/shape)`.
//! * Each row draws K gammas in class order and divides by their sum; an
//!   all-zero draw (underflow at tiny concentration) is redrawn.
//! * Truth is drawn after the row: self-sampled uses one `uniform()` and
//!   inverse CDF in class order; corrupted adds one `uniform()` and, if it
//!   falls below rho, one `below(K)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numeric::argmax;
use crate::predictions::PredictionSet;
use crate::riskmin::CostMatrix;
use crate::rng::SeededRng;
use crate::taxonomy::Taxonomy;

const TREE_STREAM: u64 = 1;
const PREDICTION_STREAM: u64 = 2;
const VALIDATION_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruthMode {
    /// Truth drawn from the row's own distribution (perfectly calibrated).
    SelfSampled,
    /// Truth is the row argmax (zero top-1 error).
    Argmax,
    /// Self-sampled, then replaced by a uniform class with probability rho.
    Corrupted(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeMode {
    Flat,
    BalancedBinary,
    RandomAttachment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub classes: usize,
    pub samples: usize,
    pub concentration: f64,
    pub truth_mode: TruthMode,
    pub tree_mode: TreeMode,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            classes: 8,
            samples: 1000,
            concentration: 1.0,
            truth_mode: TruthMode::SelfSampled,
            tree_mode: TreeMode::BalancedBinary,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidConfig(format!("K = {} < 2", self.classes)));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "concentration must be positive, got {}",
                self.concentration
            )));
        }
        if let TruthMode::Corrupted(rho) = self.truth_mode {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::InvalidConfig(format!("rho must be in [0, 1], got {rho}")));
            }
        }
        if self.tree_mode == TreeMode::BalancedBinary && !self.classes.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "balanced-binary needs K a power of 2, got {}",
                self.classes
            )));
        }
        Ok(())
    }
}

fn width(n: usize) -> usize {
    n.saturating_sub(1).max(1).to_string().len()
}

fn leaf_name(i: usize, k: usize) -> String {
    format!("c{i:0w$}", w = width(k))
}

/// Generate a hierarchy. Leaves are named `c0..` (zero-padded so name
/// order equals creation order), internal nodes `n0..`, the root `root`.
///
/// * flat: every leaf under the root.
/// * balanced-binary: leaves paired bottom-up; K must be a power of 2.
/// * random-attachment: start with two leaves under the root; each new
///   leaf picks a uniformly random existing node. An internal node adopts
///   it; a leaf is replaced by a fresh internal node holding both leaves.
pub fn gen_taxonomy(cfg: &SynthConfig) -> Result<Taxonomy> {
    cfg.validate()?;
    let k = cfg.classes;
    let edges: Vec<(String, String)> = match cfg.tree_mode {
        TreeMode::Flat => (0..k).map(|i| (leaf_name(i, k), "root".to_string())).collect(),
        TreeMode::BalancedBinary => {
            let mut edges = Vec::new();
            let mut level: Vec<String> = (0..k).map(|i| leaf_name(i, k)).collect();
            let mut next_internal = 0;
            let internal_width = width(k - 1);
            while level.len() > 1 {
                let mut up = Vec::with_capacity(level.len() / 2);
                for pair in level.chunks(2) {
                    let name = if level.len() == 2 {
                        "root".to_string()
                    } else {
                        let n = format!("n{next_internal:0internal_width$}");
                        next_internal += 1;
                        n
                    };
                    for child in pair {
                        edges.push((child.clone(), name.clone()));
                    }
                    up.push(name);
                }
                level = up;
            }
            edges
        }
        TreeMode::RandomAttachment => random_attachment_edges(k, &mut SeededRng::stream(cfg.seed, TREE_STREAM)),
    };
    Taxonomy::from_edges(edges)
}

fn random_attachment_edges(k: usize, rng: &mut SeededRng) -> Vec<(String, String)> {
    // node 0 is the root
    let mut names = vec!["root".to_string()];
    let mut parent: Vec<Option<usize>> = vec![None];
    let mut is_leaf = vec![false];
    let mut internal_count = 0;
    let internal_width = width(k - 1);
    let add = |names: &mut Vec<String>, parent: &mut Vec<Option<usize>>, is_leaf: &mut Vec<bool>, name: String, p: usize, leaf: bool| {
        names.push(name);
        parent.push(Some(p));
        is_leaf.push(leaf);
        names.len() - 1
    };
    add(&mut names, &mut parent, &mut is_leaf, leaf_name(0, k), 0, true);
    add(&mut names, &mut parent, &mut is_leaf, leaf_name(1, k), 0, true);
    for t in 2..k {
        let chosen = rng.below(names.len() as u64) as usize;
        if is_leaf[chosen] {
            let old_parent = parent[chosen].expect("leaves are never the root");
            let m = add(
                &mut names,
                &mut parent,
                &mut is_leaf,
                format!("n{internal_count:0internal_width$}"),
                old_parent,
                false,
            );
            internal_count += 1;
            parent[chosen] = Some(m);
            add(&mut names, &mut parent, &mut is_leaf, leaf_name(t, k), m, true);
        } else {
            add(&mut names, &mut parent, &mut is_leaf, leaf_name(t, k), chosen, true);
        }
    }
    (1..names.len())
        .map(|v| (names[v].clone(), names[parent[v].expect("non-root")].clone()))
        .collect()
}

fn standard_normal(rng: &mut SeededRng) -> f64 {
    let u1 = rng.uniform_open();
    let u2 = rng.uniform();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Gamma(shape, 1) draw.
pub fn sample_gamma(rng: &mut SeededRng, shape: f64) -> f64 {
    if shape < 1.0 {
        let g = sample_gamma(rng, shape + 1.0);
        let u = rng.uniform_open();
        return g * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = standard_normal(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.uniform_open();
        if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
            return d * v;
        }
    }
}

/// Symmetric Dirichlet(concentration * 1) draw of length `k`.
pub fn sample_dirichlet(rng: &mut SeededRng, concentration: f64, k: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..k).map(|_| sample_gamma(rng, concentration)).collect();
        let sum: f64 = g.iter().sum();
        if sum > 0.0 {
            return g.into_iter().map(|x| x / sum).collect();
        }
    }
}

fn sample_class(rng: &mut SeededRng, p: &[f64]) -> usize {
    let u = rng.uniform();
    let mut cum = 0.0;
    for (j, &pj) in p.iter().enumerate() {
        cum += pj;
        if u < cum {
            return j;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

/// Dirichlet rows with truth drawn per `cfg.truth_mode`; class names and
/// order come from `tax`.
pub fn gen_predictions(cfg: &SynthConfig, tax: &Taxonomy) -> Result<PredictionSet> {
    gen_stream(cfg, tax, PREDICTION_STREAM, cfg.samples)
}

/// A held-out set of `samples` rows from the same generator, drawn from a
/// stream independent of [`gen_predictions`].
pub fn gen_validation(cfg: &SynthConfig, tax: &Taxonomy, samples: usize) -> Result<PredictionSet> {
    gen_stream(cfg, tax, VALIDATION_STREAM, samples)
}

fn gen_stream(cfg: &SynthConfig, tax: &Taxonomy, tag: u64, samples: usize) -> Result<PredictionSet> {
    cfg.validate()?;
    let k = cfg.classes;
    if tax.num_classes() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: tax.num_classes(),
        });
    }
    let mut rng = SeededRng::stream(cfg.seed, tag);
    let mut probs = Vec::with_capacity(samples * k);
    let mut truth = Vec::with_capacity(samples);
    for _ in 0..samples {
        let row = sample_dirichlet(&mut rng, cfg.concentration, k);
        let t = match cfg.truth_mode {
            TruthMode::Argmax => argmax(&row),
            TruthMode::SelfSampled => sample_class(&mut rng, &row),
            TruthMode::Corrupted(rho) => {
                let t = sample_class(&mut rng, &row);
                if rng.uniform() < rho {
                    rng.below(k as u64) as usize
                } else {
                    t
                }
            }
        };
        probs.extend_from_slice(&row);
        truth.push(t);
    }
    PredictionSet::from_flat(tax.class_names(), probs, truth)
}

/// Reference risk: plain double loop over `C[k][j] * p[j]` after dividing
/// `p` by its sum. Only checks what it needs to stay meaningful.
pub fn oracle_risk(p: &[f64], c: &CostMatrix) -> Result<Vec<f64>> {
    let k = c.num_classes();
    if p.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: p.len(),
        });
    }
    let mut sum = 0.0;
    for j in 0..k {
        if !p[j].is_finite() || p[j] < 0.0 {
            return Err(Error::InvalidProbability { index: j, value: p[j] });
        }
        sum += p[j];
    }
    if (sum - 1.0).abs() > crate::numeric::PROB_TOLERANCE {
        return Err(Error::NotNormalized { sum });
    }
    let mut risk = vec![0.0; k];
    for a in 0..k {
        for j in 0..k {
            risk[a] += c.get(a, j) as f64 * (p[j] / sum);
        }
    }
    Ok(risk)
}

/// Reference LCA height: intersect the two root paths, then measure the
/// height of the deepest shared node by walking its whole subtree.
pub fn oracle_lca(tax: &Taxonomy, i: usize, j: usize) -> Result<usize> {
    let nodes = tax.nodes();
    let root_path = |class: usize| -> Result<Vec<usize>> {
        let mut path = vec![tax.leaf_node(class)?];
        while let Some(p) = nodes[*path.last().unwrap()].parent {
            path.push(p);
        }
        path.reverse();
        Ok(path)
    };
    let (a, b) = (root_path(i)?, root_path(j)?);
    let lca = a
        .iter()
        .zip(&b)
        .take_while(|(x, y)| x == y)
        .last()
        .map(|(x, _)| *x)
        .expect("paths share the root");

    // longest downward path from lca to any leaf
    let mut best = 0;
    let mut stack = vec![(lca, 0usize)];
    while let Some((v, d)) = stack.pop() {
        if nodes[v].children.is_empty() {
            best = best.max(d);
        }
        stack.extend(nodes[v].children.iter().map(|&c| (c, d + 1)));
    }
    Ok(best)
}
