//! Hierarchy-aware evaluation of ranked predictions.
//!
//! Severities are LCA heights, so every per-sample quantity is an integer
//! and all totals are accumulated exactly in `u64`; means are a single
//! division at the end, independent of reduction order.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictions::PredictionSet;
use crate::riskmin::{batch_apply, CostMatrix, RankedOutput, RankingBasis};
use crate::taxonomy::Taxonomy;

/// Operating points reported when no `k` is requested.
pub const DEFAULT_K: [usize; 3] = [1, 5, 20];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MistakeSeverity {
    /// `None` when there are no mistakes (the mean is undefined).
    pub mean: Option<f64>,
    pub n_mistakes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub basis: RankingBasis,
    pub n_samples: usize,
    pub top1_error: f64,
    pub distance_at_k: BTreeMap<usize, f64>,
    pub severity_over_mistakes: Option<f64>,
    pub severity_over_all: f64,
    pub n_mistakes: usize,
    pub histogram: BTreeMap<u32, usize>,
}

impl MetricsReport {
    /// `severity,count` rows, one per level `1..=tree height`.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("severity,count\n");
        for (s, c) in &self.histogram {
            out.push_str(&format!("{s},{c}\n"));
        }
        out
    }
}

fn check_inputs(ranked: &[RankedOutput], truth: &[usize]) -> Result<()> {
    if ranked.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: ranked.len(),
        });
    }
    if ranked.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    Ok(())
}

fn check_k(k: usize, classes: usize) -> Result<()> {
    if k == 0 || k > classes {
        return Err(Error::KOutOfRange { k, max: classes });
    }
    Ok(())
}

fn top1_severities(ranked: &[RankedOutput], truth: &[usize], costs: &CostMatrix) -> Vec<u32> {
    ranked
        .par_iter()
        .zip(truth)
        .map(|(r, &t)| costs.get(r.top(), t))
        .collect()
}

/// Fraction of samples whose first-ranked class is not the truth.
pub fn top1_error(ranked: &[RankedOutput], truth: &[usize]) -> Result<f64> {
    check_inputs(ranked, truth)?;
    let wrong = ranked.iter().zip(truth).filter(|(r, &t)| r.top() != t).count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// Mean over samples of the mean LCA height between the truth and each
/// of the first `k` ranked classes. A correct class contributes 0.
pub fn distance_at_k(ranked: &[RankedOutput], truth: &[usize], tax: &Taxonomy, k: usize) -> Result<f64> {
    check_inputs(ranked, truth)?;
    check_k(k, tax.num_classes())?;
    let costs = CostMatrix::from_taxonomy(tax);
    let total: u64 = ranked
        .par_iter()
        .zip(truth)
        .map(|(r, &t)| r.order[..k].iter().map(|&c| u64::from(costs.get(c, t))).sum::<u64>())
        .sum();
    Ok(total as f64 / (k as f64 * truth.len() as f64))
}

/// Mean top-1 LCA height over misclassified samples only.
pub fn severity_over_mistakes(ranked: &[RankedOutput], truth: &[usize], tax: &Taxonomy) -> Result<MistakeSeverity> {
    check_inputs(ranked, truth)?;
    let sev = top1_severities(ranked, truth, &CostMatrix::from_taxonomy(tax));
    let n_mistakes = sev.iter().filter(|&&s| s > 0).count();
    let total: u64 = sev.iter().map(|&s| u64::from(s)).sum();
    Ok(MistakeSeverity {
        mean: (n_mistakes > 0).then(|| total as f64 / n_mistakes as f64),
        n_mistakes,
    })
}

/// Mean top-1 LCA height over all samples (hierarchical distance@1).
pub fn severity_over_all(ranked: &[RankedOutput], truth: &[usize], tax: &Taxonomy) -> Result<f64> {
    check_inputs(ranked, truth)?;
    let sev = top1_severities(ranked, truth, &CostMatrix::from_taxonomy(tax));
    let total: u64 = sev.iter().map(|&s| u64::from(s)).sum();
    Ok(total as f64 / truth.len() as f64)
}

fn histogram_from(severities: &[u32], height: usize) -> BTreeMap<u32, usize> {
    let mut hist: BTreeMap<u32, usize> = (1..=height as u32).map(|s| (s, 0)).collect();
    for &s in severities.iter().filter(|&&s| s > 0) {
        *hist.entry(s).or_insert(0) += 1;
    }
    hist
}

/// Count of mistakes at each LCA height `1..=tree height`.
pub fn severity_histogram(ranked: &[RankedOutput], truth: &[usize], tax: &Taxonomy) -> Result<BTreeMap<u32, usize>> {
    check_inputs(ranked, truth)?;
    let sev = top1_severities(ranked, truth, &CostMatrix::from_taxonomy(tax));
    Ok(histogram_from(&sev, tax.height()))
}

/// Outcome of comparing a model with `m` mistakes of total severity `d_h`
/// against one making `n` further mistakes of total severity `d_l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlawCheck {
    /// `d_h / m`
    pub before: f64,
    /// `(d_h + d_l) / (m + n)`
    pub after: f64,
    /// `after <= before`, decided exactly by cross-multiplication.
    pub non_increasing: bool,
    /// `d_h / m >= d_l / n`, decided exactly.
    pub sufficient_condition: bool,
}

/// Whether adding `n` mistakes of total severity `d_l` lowers (or keeps)
/// the average mistake severity of a model with `m` mistakes totalling `d_h`.
pub fn metric_flaw_check(d_h: u64, m: u64, d_l: u64, n: u64) -> Result<FlawCheck> {
    if m == 0 || n == 0 || d_h == 0 || d_l == 0 {
        return Err(Error::InvalidConfig(
            "metric_flaw_check needs positive counts and severities".into(),
        ));
    }
    let (dh, mm, dl, nn) = (u128::from(d_h), u128::from(m), u128::from(d_l), u128::from(n));
    // (dh+dl)/(m+n) <= dh/m  <=>  m*(dh+dl) <= dh*(m+n)
    let non_increasing = mm * (dh + dl) <= dh * (mm + nn);
    // dh/m >= dl/n  <=>  dh*n >= dl*m
    let sufficient_condition = dh * nn >= dl * mm;
    Ok(FlawCheck {
        before: d_h as f64 / m as f64,
        after: (d_h + d_l) as f64 / (m + n) as f64,
        non_increasing,
        sufficient_condition,
    })
}

/// All metrics for already-ranked outputs in one pass over the samples.
pub fn report_from_ranked(
    ranked: &[RankedOutput],
    truth: &[usize],
    tax: &Taxonomy,
    basis: RankingBasis,
    k_list: &[usize],
) -> Result<MetricsReport> {
    check_inputs(ranked, truth)?;
    for &k in k_list {
        check_k(k, tax.num_classes())?;
    }
    let mut ks: Vec<usize> = k_list.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let costs = CostMatrix::from_taxonomy(tax);

    // per sample: (top-1 severity, prefix sums at each requested k)
    let per_sample: Vec<(u32, Vec<u64>)> = ranked
        .par_iter()
        .zip(truth)
        .map(|(r, &t)| {
            let mut sums = Vec::with_capacity(ks.len());
            let mut acc = 0u64;
            let mut pos = 0;
            for &k in &ks {
                while pos < k {
                    acc += u64::from(costs.get(r.order[pos], t));
                    pos += 1;
                }
                sums.push(acc);
            }
            (costs.get(r.top(), t), sums)
        })
        .collect();

    let n = truth.len();
    let mut k_totals = vec![0u64; ks.len()];
    let mut sev_total = 0u64;
    let mut n_mistakes = 0usize;
    let mut severities = Vec::with_capacity(n);
    for ((sev, sums), (r, &t)) in per_sample.iter().zip(ranked.iter().zip(truth)) {
        if r.top() != t {
            n_mistakes += 1;
        }
        sev_total += u64::from(*sev);
        severities.push(*sev);
        for (tot, s) in k_totals.iter_mut().zip(sums) {
            *tot += s;
        }
    }
    let distance_at_k = ks
        .iter()
        .zip(&k_totals)
        .map(|(&k, &tot)| (k, tot as f64 / (k as f64 * n as f64)))
        .collect();
    Ok(MetricsReport {
        basis,
        n_samples: n,
        top1_error: n_mistakes as f64 / n as f64,
        distance_at_k,
        severity_over_mistakes: (n_mistakes > 0).then(|| sev_total as f64 / n_mistakes as f64),
        severity_over_all: sev_total as f64 / n as f64,
        n_mistakes,
        histogram: histogram_from(&severities, tax.height()),
    })
}

/// Rank `preds` under `basis` (CRM uses the taxonomy's cost matrix) and
/// compute every metric.
pub fn full_report(preds: &PredictionSet, tax: &Taxonomy, basis: RankingBasis, k_list: &[usize]) -> Result<MetricsReport> {
    let costs = CostMatrix::from_taxonomy(tax);
    let ranked = batch_apply(preds, &costs, basis)?;
    report_from_ranked(&ranked, preds.truth(), tax, basis, k_list)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::parse_taxonomy;

    fn balanced() -> Taxonomy {
        parse_taxonomy("a\tp\nb\tp\nc\tq\nd\tq\np\tr\nq\tr\n").unwrap()
    }

    fn ranked(order: &[usize]) -> RankedOutput {
        RankedOutput {
            order: order.to_vec(),
            scores: vec![0.0; order.len()],
            basis: RankingBasis::RiskAscending,
        }
    }

    fn tops(t: &[usize]) -> Vec<RankedOutput> {
        // any order with the requested class first
        t.iter()
            .map(|&c| {
                let mut o = vec![c];
                o.extend((0..4).filter(|&x| x != c));
                ranked(&o)
            })
            .collect()
    }

    #[test]
    fn top1_cases() {
        assert_eq!(top1_error(&tops(&[0, 1, 2]), &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(top1_error(&tops(&[1, 2, 3]), &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(top1_error(&tops(&[0, 1, 3, 3]), &[0, 1, 2, 0]).unwrap(), 0.5);
        assert!(top1_error(&tops(&[0]), &[0, 1]).is_err());
    }

    #[test]
    fn distance_cases() {
        let t = balanced();
        assert_eq!(distance_at_k(&tops(&[0, 1]), &[0, 1], &t, 1).unwrap(), 0.0);
        assert_eq!(distance_at_k(&[ranked(&[2, 3, 0, 1])], &[0], &t, 2).unwrap(), 2.0);
        // full-set mean does not depend on order: (0+1+2+2)/4
        assert_eq!(distance_at_k(&[ranked(&[2, 3, 0, 1])], &[0], &t, 4).unwrap(), 1.25);
        assert_eq!(distance_at_k(&[ranked(&[0, 1, 2, 3])], &[0], &t, 4).unwrap(), 1.25);
        assert!(matches!(
            distance_at_k(&tops(&[0]), &[0], &t, 0),
            Err(Error::KOutOfRange { .. })
        ));
        assert!(distance_at_k(&tops(&[0]), &[0], &t, 5).is_err());
    }

    #[test]
    fn severity_cases() {
        let t = balanced();
        let none = severity_over_mistakes(&tops(&[0, 1]), &[0, 1], &t).unwrap();
        assert_eq!(none, MistakeSeverity { mean: None, n_mistakes: 0 });
        let all2 = severity_over_mistakes(&tops(&[2, 3]), &[0, 0], &t).unwrap();
        assert_eq!(all2.mean, Some(2.0));

        // severities {2, 2, 1} plus three correct samples
        let pred = tops(&[2, 3, 1, 0, 1, 2]);
        let truth = [0, 0, 0, 0, 1, 2];
        let s = severity_over_mistakes(&pred, &truth, &t).unwrap();
        assert_eq!(s.n_mistakes, 3);
        assert!((s.mean.unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert!((severity_over_all(&pred, &truth, &t).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        let hist = severity_histogram(&pred, &truth, &t).unwrap();
        assert_eq!(hist, BTreeMap::from([(1, 1), (2, 2)]));

        assert_eq!(severity_over_all(&tops(&[3]), &[0], &t).unwrap(), 2.0);
        assert_eq!(severity_over_all(&tops(&[0]), &[0], &t).unwrap(), 0.0);
        assert_eq!(
            severity_histogram(&tops(&[0]), &[0], &t).unwrap(),
            BTreeMap::from([(1, 0), (2, 0)])
        );
        let sib = severity_histogram(&tops(&[1, 0, 3]), &[0, 1, 2], &t).unwrap();
        assert_eq!(sib, BTreeMap::from([(1, 3), (2, 0)]));
    }

    #[test]
    fn flaw_cases() {
        let f = metric_flaw_check(10, 5, 5, 5).unwrap();
        assert_eq!((f.before, f.after), (2.0, 1.5));
        assert!(f.non_increasing && f.sufficient_condition);

        let eq = metric_flaw_check(4, 2, 6, 3).unwrap();
        assert_eq!(eq.before, eq.after);
        assert!(eq.non_increasing && eq.sufficient_condition);

        let up = metric_flaw_check(2, 2, 9, 3).unwrap();
        assert_eq!(up.before, 1.0);
        assert!((up.after - 2.2).abs() < 1e-15);
        assert!(!up.non_increasing && !up.sufficient_condition);

        assert!(metric_flaw_check(0, 1, 1, 1).is_err());
        assert!(metric_flaw_check(1, 1, 1, 0).is_err());
    }

    #[test]
    fn report_single_correct_sample() {
        let t = balanced();
        let preds = PredictionSet::new(t.class_names(), vec![vec![0.7, 0.1, 0.1, 0.1]], vec![0]).unwrap();
        let r = full_report(&preds, &t, RankingBasis::RiskAscending, &[1]).unwrap();
        assert_eq!(r.top1_error, 0.0);
        assert_eq!(r.distance_at_k[&1], 0.0);
        assert_eq!(r.severity_over_mistakes, None);
        assert_eq!(r.severity_over_all, 0.0);
        assert_eq!(r.n_mistakes, 0);
        assert!(r.histogram.values().all(|&c| c == 0));
    }

    #[test]
    fn histogram_csv_format() {
        let t = balanced();
        let preds = PredictionSet::new(t.class_names(), vec![vec![0.1, 0.7, 0.1, 0.1]], vec![0]).unwrap();
        let r = full_report(&preds, &t, RankingBasis::LikelihoodDescending, &[1, 4]).unwrap();
        assert_eq!(r.histogram_csv(), "severity,count\n1,1\n2,0\n");
    }

    #[test]
    fn report_rejects_empty_and_bad_k() {
        let t = balanced();
        let empty = PredictionSet::new(t.class_names(), vec![], vec![]).unwrap();
        assert!(full_report(&empty, &t, RankingBasis::RiskAscending, &[1]).is_err());
        let one = PredictionSet::new(t.class_names(), vec![vec![0.25; 4]], vec![0]).unwrap();
        assert!(matches!(
            full_report(&one, &t, RankingBasis::RiskAscending, &[5]),
            Err(Error::KOutOfRange { k: 5, max: 4 })
        ));
    }
}
