//! Row-stochastic likelihood matrix with ground-truth labels.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numeric::normalize_probabilities;
use crate::taxonomy::Taxonomy;

/// N samples by K classes, stored row-major. Every row is a validated
/// probability vector; truth indices are in `0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    class_names: Vec<String>,
    probs: Vec<f64>,
    truth: Vec<usize>,
}

impl PredictionSet {
    pub fn new(class_names: Vec<String>, rows: Vec<Vec<f64>>, truth: Vec<usize>) -> Result<Self> {
        let k = class_names.len();
        let mut flat = Vec::with_capacity(rows.len() * k);
        for (row, values) in rows.iter().enumerate() {
            if values.len() != k {
                return Err(Error::Row {
                    row,
                    source: Box::new(Error::DimensionMismatch {
                        expected: k,
                        found: values.len(),
                    }),
                });
            }
            flat.extend_from_slice(values);
        }
        Self::from_flat(class_names, flat, truth)
    }

    pub fn from_flat(class_names: Vec<String>, mut probs: Vec<f64>, truth: Vec<usize>) -> Result<Self> {
        let k = class_names.len();
        if k < 2 {
            return Err(Error::TooFewClasses { found: k });
        }
        let mut seen = HashMap::with_capacity(k);
        for name in &class_names {
            if seen.insert(name.as_str(), ()).is_some() {
                return Err(Error::ClassOrderMismatch(format!("duplicate class name `{name}`")));
            }
        }
        if probs.len() != truth.len() * k {
            return Err(Error::DimensionMismatch {
                expected: truth.len() * k,
                found: probs.len(),
            });
        }
        for (row, chunk) in probs.chunks_mut(k).enumerate() {
            let normalized = normalize_probabilities(chunk).map_err(|e| Error::Row {
                row,
                source: Box::new(e),
            })?;
            if let std::borrow::Cow::Owned(v) = normalized {
                chunk.copy_from_slice(&v);
            }
        }
        for (row, &t) in truth.iter().enumerate() {
            if t >= k {
                return Err(Error::Row {
                    row,
                    source: Box::new(Error::InvalidClass { index: t, classes: k }),
                });
            }
        }
        Ok(Self {
            class_names,
            probs,
            truth,
        })
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn truth(&self) -> &[usize] {
        &self.truth
    }

    /// Flat row-major probabilities.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.num_classes();
        &self.probs[i * k..(i + 1) * k]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.probs.chunks_exact(self.num_classes())
    }

    /// Same labels with a replacement probability matrix (validated).
    pub fn with_probs(&self, probs: Vec<f64>) -> Result<Self> {
        Self::from_flat(self.class_names.clone(), probs, self.truth.clone())
    }

    /// Re-map columns (and truth indices) into the taxonomy's class order.
    /// The class-name sets must be identical.
    pub fn align_to(&self, tax: &Taxonomy) -> Result<Self> {
        let k = self.num_classes();
        if tax.num_classes() != k {
            return Err(Error::ClassOrderMismatch(format!(
                "predictions have {k} classes, hierarchy has {}",
                tax.num_classes()
            )));
        }
        // column j of self -> class index in tax
        let mut target = Vec::with_capacity(k);
        for name in &self.class_names {
            let idx = tax.class_index(name).ok_or_else(|| {
                Error::ClassOrderMismatch(format!("class `{name}` is not a leaf of the hierarchy"))
            })?;
            target.push(idx);
        }
        if target.iter().enumerate().all(|(j, &t)| j == t) {
            return Ok(self.clone());
        }
        let mut probs = vec![0.0; self.probs.len()];
        for (src, dst) in self.probs.chunks_exact(k).zip(probs.chunks_exact_mut(k)) {
            for (j, &t) in target.iter().enumerate() {
                dst[t] = src[j];
            }
        }
        let truth = self.truth.iter().map(|&t| target[t]).collect();
        Ok(Self {
            class_names: tax.class_names(),
            probs,
            truth,
        })
    }

    /// Check that column order matches `names` exactly.
    pub fn check_class_order(&self, names: &[String]) -> Result<()> {
        if self.class_names.as_slice() == names {
            Ok(())
        } else {
            Err(Error::ClassOrderMismatch(
                "prediction columns are not in the cost matrix's class order".into(),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::parse_taxonomy;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rejects_unnormalized_row() {
        let err = PredictionSet::new(names(&["a", "b"]), vec![vec![0.5, 0.5], vec![1.0, 0.5]], vec![0, 1])
            .unwrap_err();
        assert!(matches!(err, Error::Row { row: 1, .. }), "{err}");
    }

    #[test]
    fn rejects_bad_truth() {
        assert!(PredictionSet::new(names(&["a", "b"]), vec![vec![0.5, 0.5]], vec![2]).is_err());
    }

    #[test]
    fn rejects_duplicate_names() {
        assert!(PredictionSet::new(names(&["a", "a"]), vec![], vec![]).is_err());
    }

    #[test]
    fn align_remaps_columns() {
        let tax = parse_taxonomy("a\tr\nb\tr\nc\tr\n").unwrap();
        let p = PredictionSet::new(names(&["c", "a", "b"]), vec![vec![0.5, 0.25, 0.25]], vec![0]).unwrap();
        let q = p.align_to(&tax).unwrap();
        assert_eq!(q.class_names(), &names(&["a", "b", "c"])[..]);
        assert_eq!(q.row(0), &[0.25, 0.25, 0.5]);
        assert_eq!(q.truth(), &[2]);
    }

    #[test]
    fn align_rejects_foreign_names() {
        let tax = parse_taxonomy("a\tr\nb\tr\n").unwrap();
        let p = PredictionSet::new(names(&["a", "x"]), vec![], vec![]).unwrap();
        assert!(matches!(p.align_to(&tax), Err(Error::ClassOrderMismatch(_))));
    }
}
