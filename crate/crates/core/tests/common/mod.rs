#![allow(dead_code)]

use hier_risk_core::{SeededRng, Taxonomy};

/// Random tree where node `i > 0` hangs under a uniformly chosen earlier
/// node. Produces unary chains, uneven depths and arbitrary fan-out.
/// Retries until the tree has between 2 and `max_leaves` leaves.
pub fn random_tree(seed: u64, max_nodes: usize, max_leaves: usize) -> Taxonomy {
    let mut rng = SeededRng::new(seed);
    loop {
        let n = 3 + rng.below((max_nodes - 2) as u64) as usize;
        let parents: Vec<usize> = (1..n).map(|i| rng.below(i as u64) as usize).collect();
        let mut has_child = vec![false; n];
        for &p in &parents {
            has_child[p] = true;
        }
        let leaves = has_child.iter().filter(|&&c| !c).count();
        if !(2..=max_leaves).contains(&leaves) {
            continue;
        }
        let edges = parents
            .iter()
            .enumerate()
            .map(|(i, &p)| (format!("v{}", i + 1), format!("v{p}")));
        return Taxonomy::from_edges(edges).expect("valid random tree");
    }
}

/// Random probability vector of length `k` from uniform weights.
pub fn random_probs(rng: &mut SeededRng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.uniform_open()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Random vector with `max > 0.5`: one class gets `0.5 + u/2`, the rest
/// share the remainder.
pub fn confident_probs(rng: &mut SeededRng, k: usize) -> Vec<f64> {
    let top = rng.below(k as u64) as usize;
    let mass = 0.5 + 0.5 * rng.uniform_open();
    let rest = random_probs(rng, k - 1);
    let mut p = Vec::with_capacity(k);
    let mut it = rest.into_iter();
    for j in 0..k {
        if j == top {
            p.push(mass);
        } else {
            p.push(it.next().unwrap() * (1.0 - mass));
        }
    }
    p
}
