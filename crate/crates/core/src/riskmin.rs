//! Cost matrix construction and the conditional-risk decision rule.
//!
//! For a likelihood vector `p` and cost matrix `C` (LCA heights), the risk
//! of predicting class `k` is `R(k) = sum_j C[k][j] * p[j]`. The Bayes
//! decision is `argmin_k R(k)`; sorting all classes by ascending risk gives
//! the re-ranked top-k list.
//!
//! Ties are broken by lowest class index everywhere. Risks accumulate in
//! ascending `j`, so results are bit-stable for a given build.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{argmax, argmin, normalize_probabilities};
use crate::predictions::PredictionSet;
use crate::taxonomy::Taxonomy;

/// Fast-path threshold on `max(p)`. Above it the argmax is returned
/// without computing risks. The CRM argmax identity already holds for any
/// `max(p) > 0.5`; the risk margin there is at least `2 max(p) - 1`, and
/// the extra `5e-10` keeps that margin far above accumulated rounding so
/// both paths return the same index.
pub const FAST_PATH_THRESHOLD: f64 = 0.5 + 5e-10;

/// Symmetric K x K matrix of integer costs with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostMatrix {
    class_names: Vec<String>,
    entries: Vec<u32>,
}

impl CostMatrix {
    /// `C[i][j]` = height of the lowest common ancestor of classes i and j.
    pub fn from_taxonomy(tax: &Taxonomy) -> Self {
        let k = tax.num_classes();
        let mut entries = vec![0u32; k * k];
        for i in 0..k {
            for j in (i + 1)..k {
                let h = tax.lca_height(i, j).expect("class indices in range") as u32;
                entries[i * k + j] = h;
                entries[j * k + i] = h;
            }
        }
        Self {
            class_names: tax.class_names(),
            entries,
        }
    }

    /// Arbitrary cost matrix, checked only for shape, symmetry and zero
    /// diagonal. Meant for experiments and tests.
    pub fn from_entries(class_names: Vec<String>, entries: Vec<u32>) -> Result<Self> {
        let k = class_names.len();
        if entries.len() != k * k {
            return Err(Error::DimensionMismatch {
                expected: k * k,
                found: entries.len(),
            });
        }
        for i in 0..k {
            if entries[i * k + i] != 0 {
                return Err(Error::InvalidCostMatrix(format!("non-zero diagonal at {i}")));
            }
            for j in (i + 1)..k {
                if entries[i * k + j] != entries[j * k + i] {
                    return Err(Error::InvalidCostMatrix(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self {
            class_names,
            entries,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.entries[i * self.num_classes() + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let k = self.num_classes();
        &self.entries[i * k..(i + 1) * k]
    }

    pub fn max_cost(&self) -> u32 {
        self.entries.iter().copied().max().unwrap_or(0)
    }

    /// Same matrix with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: u32) -> Self {
        Self {
            class_names: self.class_names.clone(),
            entries: self.entries.iter().map(|&c| c * factor).collect(),
        }
    }

    /// CSV with a header row and a leading column of class names.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, name) in self.class_names.iter().enumerate() {
            out.push_str(name);
            for c in self.row(i) {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankingBasis {
    LikelihoodDescending,
    RiskAscending,
}

/// Full class ordering for one sample, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedOutput {
    /// Permutation of `0..K`.
    pub order: Vec<usize>,
    /// Per-class score (indexed by class) that induced `order`.
    pub scores: Vec<f64>,
    pub basis: RankingBasis,
}

impl RankedOutput {
    pub fn top(&self) -> usize {
        self.order[0]
    }
}

fn check_len(p: &[f64], c: &CostMatrix) -> Result<()> {
    if p.len() != c.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: c.num_classes(),
            found: p.len(),
        });
    }
    Ok(())
}

fn risks_unchecked(p: &[f64], c: &CostMatrix) -> Vec<f64> {
    (0..c.num_classes())
        .map(|k| {
            c.row(k)
                .iter()
                .zip(p)
                .fold(0.0, |acc, (&cost, &pj)| acc + f64::from(cost) * pj)
        })
        .collect()
}

/// `R(k) = sum_j C[k][j] p[j]` for every class k.
pub fn conditional_risk(p: &[f64], c: &CostMatrix) -> Result<Vec<f64>> {
    check_len(p, c)?;
    let p = normalize_probabilities(p)?;
    Ok(risks_unchecked(&p, c))
}

/// The minimum-risk class, lowest index on ties.
pub fn crm_predict(p: &[f64], c: &CostMatrix) -> Result<usize> {
    crm_predict_with(p, c, false)
}

/// [`crm_predict`] with the optional argmax shortcut for confident rows.
pub fn crm_predict_with(p: &[f64], c: &CostMatrix, fast_path: bool) -> Result<usize> {
    check_len(p, c)?;
    let p = normalize_probabilities(p)?;
    if fast_path {
        let top = argmax(&p);
        if p[top] > FAST_PATH_THRESHOLD {
            return Ok(top);
        }
    }
    Ok(argmin(&risks_unchecked(&p, c)))
}

fn sorted_order(scores: &[f64], descending: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps ascending class index among equal scores
    if descending {
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    } else {
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    }
    order
}

/// All classes by ascending risk.
pub fn crm_rerank(p: &[f64], c: &CostMatrix) -> Result<RankedOutput> {
    let scores = conditional_risk(p, c)?;
    Ok(RankedOutput {
        order: sorted_order(&scores, false),
        scores,
        basis: RankingBasis::RiskAscending,
    })
}

/// All classes by descending likelihood.
pub fn likelihood_rank(p: &[f64]) -> Result<RankedOutput> {
    let scores = normalize_probabilities(p)?.into_owned();
    Ok(RankedOutput {
        order: sorted_order(&scores, true),
        scores,
        basis: RankingBasis::LikelihoodDescending,
    })
}

/// Rank every row of `preds` under `basis`. Rows are processed in
/// parallel; output order matches input order.
pub fn batch_apply(preds: &PredictionSet, c: &CostMatrix, basis: RankingBasis) -> Result<Vec<RankedOutput>> {
    preds.check_class_order(c.class_names())?;
    (0..preds.len())
        .into_par_iter()
        .map(|i| {
            let row = preds.row(i);
            match basis {
                RankingBasis::LikelihoodDescending => likelihood_rank(row),
                RankingBasis::RiskAscending => crm_rerank(row, c),
            }
            .map_err(|e| Error::Row {
                row: i,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Top-1 CRM decision for every row.
pub fn batch_predict(preds: &PredictionSet, c: &CostMatrix, fast_path: bool) -> Result<Vec<usize>> {
    preds.check_class_order(c.class_names())?;
    (0..preds.len())
        .into_par_iter()
        .map(|i| {
            crm_predict_with(preds.row(i), c, fast_path).map_err(|e| Error::Row {
                row: i,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::parse_taxonomy;

    /// Classes a,b share a parent; c,d share the other.
    fn balanced() -> CostMatrix {
        let t = parse_taxonomy("a\tp\nb\tp\nc\tq\nd\tq\np\tr\nq\tr\n").unwrap();
        CostMatrix::from_taxonomy(&t)
    }

    fn flat(k: usize) -> CostMatrix {
        let text: String = (0..k).map(|i| format!("c{i}\troot\n")).collect();
        CostMatrix::from_taxonomy(&parse_taxonomy(&text).unwrap())
    }

    const P: [f64; 4] = [0.35, 0.05, 0.33, 0.27];

    /// Hand-computed dot products of the balanced cost rows with `P`.
    const P_RISKS: [f64; 4] = [1.25, 1.55, 1.07, 1.13];

    #[test]
    fn cost_matrices() {
        let c3 = flat(3);
        assert_eq!(c3.row(0), &[0, 1, 1]);
        assert_eq!(c3.row(1), &[1, 0, 1]);
        assert_eq!(c3.row(2), &[1, 1, 0]);
        let b = balanced();
        let expected: [[u32; 4]; 4] = [[0, 1, 2, 2], [1, 0, 2, 2], [2, 2, 0, 1], [2, 2, 1, 0]];
        for i in 0..4 {
            assert_eq!(b.row(i), &expected[i]);
        }
        assert_eq!(flat(2).row(0), &[0, 1]);
    }

    #[test]
    fn cost_csv() {
        assert_eq!(flat(2).to_csv(), "class,c0,c1\nc0,0,1\nc1,1,0\n");
    }

    #[test]
    fn side_door_validation() {
        let names = vec!["a".to_string(), "b".to_string()];
        assert!(CostMatrix::from_entries(names.clone(), vec![0, 1, 2, 0]).is_err());
        assert!(CostMatrix::from_entries(names.clone(), vec![1, 1, 1, 0]).is_err());
        assert!(CostMatrix::from_entries(names, vec![0, 3, 3, 0]).is_ok());
    }

    #[test]
    fn one_hot_risk_is_cost_column() {
        let c = balanced();
        for k in 0..4 {
            let mut p = [0.0; 4];
            p[k] = 1.0;
            let r = conditional_risk(&p, &c).unwrap();
            for m in 0..4 {
                assert_eq!(r[m], f64::from(c.get(m, k)));
            }
            assert_eq!(crm_rerank(&p, &c).unwrap().top(), k);
        }
    }

    #[test]
    fn flat_risk_is_complement() {
        let c = flat(4);
        let r = conditional_risk(&P, &c).unwrap();
        for k in 0..4 {
            assert!((r[k] - (1.0 - P[k])).abs() < 1e-15);
        }
    }

    #[test]
    fn worked_example() {
        let c = balanced();
        let r = conditional_risk(&P, &c).unwrap();
        for k in 0..4 {
            assert!((r[k] - P_RISKS[k]).abs() < 1e-12, "{r:?}");
        }
        assert_eq!(argmax(&P), 0);
        assert_eq!(crm_predict(&P, &c).unwrap(), 2);
        assert_eq!(crm_rerank(&P, &c).unwrap().order, vec![2, 3, 0, 1]);
        assert_eq!(likelihood_rank(&P).unwrap().order, vec![0, 2, 3, 1]);
    }

    #[test]
    fn uniform_ties() {
        let c = flat(5);
        let p = [0.2; 5];
        assert_eq!(crm_predict(&p, &c).unwrap(), 0);
        assert_eq!(likelihood_rank(&p).unwrap().order, vec![0, 1, 2, 3, 4]);
        assert_eq!(crm_rerank(&p, &c).unwrap().order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn invalid_vectors_rejected() {
        let c = flat(3);
        assert!(conditional_risk(&[0.5, 0.5], &c).is_err());
        assert!(crm_predict(&[0.5, 0.6, 0.0], &c).is_err());
        assert!(crm_rerank(&[-0.1, 0.6, 0.5], &c).is_err());
        assert!(likelihood_rank(&[0.3, 0.3]).is_err());
    }

    #[test]
    fn fast_path_agrees() {
        let c = balanced();
        for p in [[0.6, 0.1, 0.2, 0.1], [0.05, 0.05, 0.1, 0.8], P] {
            assert_eq!(
                crm_predict_with(&p, &c, true).unwrap(),
                crm_predict_with(&p, &c, false).unwrap()
            );
        }
    }

    #[test]
    fn batch_matches_rows() {
        let c = balanced();
        let names = c.class_names().to_vec();
        let empty = PredictionSet::new(names.clone(), vec![], vec![]).unwrap();
        assert!(batch_apply(&empty, &c, RankingBasis::RiskAscending).unwrap().is_empty());

        let rows = vec![P.to_vec(), vec![0.1, 0.2, 0.3, 0.4], vec![0.25; 4]];
        let preds = PredictionSet::new(names, rows.clone(), vec![0, 1, 2]).unwrap();
        let out = batch_apply(&preds, &c, RankingBasis::RiskAscending).unwrap();
        for (row, r) in rows.iter().zip(&out) {
            assert_eq!(*r, crm_rerank(row, &c).unwrap());
        }
        let out = batch_apply(&preds, &c, RankingBasis::LikelihoodDescending).unwrap();
        for (row, r) in rows.iter().zip(&out) {
            assert_eq!(*r, likelihood_rank(row).unwrap());
        }
        let tops = batch_predict(&preds, &c, false).unwrap();
        assert_eq!(tops[0], 2);
    }

    #[test]
    fn batch_rejects_order_mismatch() {
        let c = balanced();
        let names = vec!["b".into(), "a".into(), "c".into(), "d".into()];
        let preds = PredictionSet::new(names, vec![P.to_vec()], vec![0]).unwrap();
        assert!(matches!(
            batch_apply(&preds, &c, RankingBasis::RiskAscending),
            Err(Error::ClassOrderMismatch(_))
        ));
    }
}
