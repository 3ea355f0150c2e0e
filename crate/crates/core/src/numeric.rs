//! Probability-vector validation and small numeric helpers.

use std::borrow::Cow;

use crate::error::{Error, Result};

/// Maximum allowed `|sum(p) - 1|` before a vector is rejected.
pub const PROB_TOLERANCE: f64 = 1e-6;

/// Check that `p` is a probability vector. Entries must be finite and
/// non-negative; a sum within [`PROB_TOLERANCE`] of 1 is renormalized,
/// anything further off is an error. Sums within summation rounding of 1
/// (`K * EPSILON`) are left untouched so that renormalizing is idempotent.
pub fn normalize_probabilities(p: &[f64]) -> Result<Cow<'_, [f64]>> {
    if p.is_empty() {
        return Err(Error::Empty("probability vector"));
    }
    for (index, &value) in p.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidProbability { index, value });
        }
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::NotNormalized { sum });
    }
    if (sum - 1.0).abs() <= p.len() as f64 * f64::EPSILON {
        Ok(Cow::Borrowed(p))
    } else {
        Ok(Cow::Owned(p.iter().map(|v| v / sum).collect()))
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the smallest entry, lowest index on ties.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Pairwise (cascade) summation with a fixed split: halves at `len / 2`
/// down to blocks of 8 summed left to right. The result depends only on
/// the input order, never on thread scheduling.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().fold(0.0, |acc, v| acc + v);
    }
    let (left, right) = values.split_at(values.len() / 2);
    pairwise_sum(left) + pairwise_sum(right)
}
