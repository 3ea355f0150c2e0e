//! Confidence calibration: binned ECE/MCE, temperature scaling, and ECE
//! measured after collapsing the hierarchy to a given depth.
//!
//! Bins are `B` equal-width intervals `(b/B, (b+1)/B]`; a confidence of
//! exactly 0 falls in the first bin. Empty bins add nothing to ECE and
//! are skipped by MCE.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{argmax, pairwise_sum};
use crate::predictions::PredictionSet;
use crate::riskmin::{batch_predict, CostMatrix};
use crate::taxonomy::Taxonomy;

pub const DEFAULT_BINS: usize = 15;

/// Probabilities are clamped to this before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Temperature search bracket `[1/64, 64]` and tolerance, both in log T.
pub const LOG_T_MIN: f64 = -4.158_883_083_359_671_8; // ln(1/64)
pub const LOG_T_MAX: f64 = 4.158_883_083_359_671_8; // ln(64)
pub const LOG_T_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfidenceSource {
    /// Probability of the argmax class.
    MaxLikelihood,
    /// Probability of the minimum-risk class.
    CrmSelected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBins {
    pub bins: Vec<Bin>,
    pub total: usize,
}

impl CalibrationBins {
    pub fn edges(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.bins.iter().map(|b| b.low).collect();
        e.extend(self.bins.last().map(|b| b.high));
        e
    }

    /// `bin_low,bin_high,count,mean_conf,accuracy` rows for plotting.
    pub fn reliability_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count,mean_conf,accuracy\n");
        for b in &self.bins {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                b.low, b.high, b.count, b.mean_confidence, b.accuracy
            ));
        }
        out
    }
}

fn bin_index(conf: f64, n_bins: usize) -> usize {
    let edge = |b: usize| b as f64 / n_bins as f64;
    let mut idx = ((conf * n_bins as f64).ceil() as usize).saturating_sub(1).min(n_bins - 1);
    // nudge for rounding in conf * B
    while idx > 0 && conf <= edge(idx) {
        idx -= 1;
    }
    while idx + 1 < n_bins && conf > edge(idx + 1) {
        idx += 1;
    }
    idx
}

/// Bin per-sample confidences with their correctness flags.
pub fn bin_confidences(confidences: &[f64], correct: &[bool], n_bins: usize) -> Result<CalibrationBins> {
    if n_bins == 0 {
        return Err(Error::InvalidBins);
    }
    if confidences.len() != correct.len() {
        return Err(Error::DimensionMismatch {
            expected: correct.len(),
            found: confidences.len(),
        });
    }
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    let mut hits = vec![0usize; n_bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidProbability { index: 0, value: c });
        }
        let b = bin_index(c, n_bins);
        members[b].push(c);
        hits[b] += usize::from(ok);
    }
    let bins = members
        .iter()
        .zip(&hits)
        .enumerate()
        .map(|(b, (m, &h))| {
            let count = m.len();
            let (mean_confidence, accuracy) = if count == 0 {
                (0.0, 0.0)
            } else {
                (pairwise_sum(m) / count as f64, h as f64 / count as f64)
            };
            Bin {
                low: b as f64 / n_bins as f64,
                high: (b + 1) as f64 / n_bins as f64,
                count,
                mean_confidence,
                accuracy,
            }
        })
        .collect();
    Ok(CalibrationBins {
        bins,
        total: confidences.len(),
    })
}

/// Confidence (probability of the predicted class) and correctness of
/// each sample, given the predicted class per row.
pub fn sample_confidences(preds: &PredictionSet, predicted: &[usize]) -> Result<(Vec<f64>, Vec<bool>)> {
    if predicted.len() != preds.len() {
        return Err(Error::DimensionMismatch {
            expected: preds.len(),
            found: predicted.len(),
        });
    }
    let k = preds.num_classes();
    let mut conf = Vec::with_capacity(preds.len());
    let mut correct = Vec::with_capacity(preds.len());
    for (i, (&c, &t)) in predicted.iter().zip(preds.truth()).enumerate() {
        if c >= k {
            return Err(Error::Row {
                row: i,
                source: Box::new(Error::InvalidClass { index: c, classes: k }),
            });
        }
        conf.push(preds.row(i)[c]);
        correct.push(c == t);
    }
    Ok((conf, correct))
}

/// Predicted class per row under `source`. CRM selection needs the cost
/// matrix; `fast_path` enables the confident-row shortcut.
pub fn predicted_classes(
    preds: &PredictionSet,
    source: ConfidenceSource,
    costs: Option<&CostMatrix>,
    fast_path: bool,
) -> Result<Vec<usize>> {
    match source {
        ConfidenceSource::MaxLikelihood => Ok(preds.rows().map(argmax).collect()),
        ConfidenceSource::CrmSelected => {
            let costs = costs.ok_or_else(|| {
                Error::InvalidConfig("crm-selected confidence needs a hierarchy".into())
            })?;
            batch_predict(preds, costs, fast_path)
        }
    }
}

/// Bin the probability each row assigns to its predicted class.
pub fn bin_predictions(preds: &PredictionSet, predicted: &[usize], n_bins: usize) -> Result<CalibrationBins> {
    let (conf, correct) = sample_confidences(preds, predicted)?;
    bin_confidences(&conf, &correct, n_bins)
}

/// Expected calibration error: count-weighted mean of `|accuracy - confidence|`.
pub fn ece(bins: &CalibrationBins) -> f64 {
    if bins.total == 0 {
        return 0.0;
    }
    let n = bins.total as f64;
    bins.bins
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| (b.count as f64 / n) * (b.accuracy - b.mean_confidence).abs())
        .sum()
}

/// Maximum calibration error over non-empty bins.
pub fn mce(bins: &CalibrationBins) -> f64 {
    bins.bins
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| (b.accuracy - b.mean_confidence).abs())
        .fold(0.0, f64::max)
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(t))
    }
}

fn scale_row(row: &[f64], t: f64, out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (o, &p) in out.iter_mut().zip(row) {
        *o = p.max(PROB_FLOOR).ln() / t;
        max = max.max(*o);
    }
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Row-wise `softmax(ln p / T)` over a flat row-major matrix with `k` columns.
pub fn apply_temperature(probs: &[f64], k: usize, t: f64) -> Result<Vec<f64>> {
    check_temperature(t)?;
    if k == 0 || !probs.len().is_multiple_of(k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: probs.len(),
        });
    }
    let mut out = vec![0.0; probs.len()];
    out.par_chunks_mut(k)
        .zip(probs.par_chunks(k))
        .for_each(|(o, row)| scale_row(row, t, o));
    Ok(out)
}

/// Temperature-scaled copy of a prediction set.
pub fn scale_predictions(preds: &PredictionSet, t: f64) -> Result<PredictionSet> {
    let probs = apply_temperature(preds.probs(), preds.num_classes(), t)?;
    preds.with_probs(probs)
}

/// Mean negative log-likelihood of the true class after scaling by `t`.
pub fn temperature_nll(preds: &PredictionSet, t: f64) -> Result<f64> {
    check_temperature(t)?;
    if preds.is_empty() {
        return Err(Error::Empty("prediction set"));
    }
    let logs = log_probs(preds);
    Ok(nll_from_logs(&logs, preds.truth(), preds.num_classes(), t))
}

fn log_probs(preds: &PredictionSet) -> Vec<f64> {
    preds.probs().par_iter().map(|&p| p.max(PROB_FLOOR).ln()).collect()
}

fn nll_from_logs(logs: &[f64], truth: &[usize], k: usize, t: f64) -> f64 {
    let per_sample: Vec<f64> = logs
        .par_chunks(k)
        .zip(truth.par_iter())
        .map(|(z, &y)| {
            let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v / t));
            let lse = max + z.iter().map(|&v| (v / t - max).exp()).sum::<f64>().ln();
            lse - z[y] / t
        })
        .collect();
    pairwise_sum(&per_sample) / truth.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureFit {
    pub temperature: f64,
    pub nll: f64,
    pub nll_at_one: f64,
    /// Every row was one-hot; scaling cannot change anything and T = 1.
    pub degenerate: bool,
}

/// Temperature minimizing validation NLL: golden-section search on log T
/// over [`LOG_T_MIN`, `LOG_T_MAX`] to [`LOG_T_TOLERANCE`]. The result is
/// never worse than T = 1 on the fitting set.
pub fn fit_temperature(val: &PredictionSet) -> Result<TemperatureFit> {
    if val.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let k = val.num_classes();
    let logs = log_probs(val);
    let nll = |log_t: f64| nll_from_logs(&logs, val.truth(), k, log_t.exp());
    let nll_at_one = nll(0.0);

    let one_hot = val.rows().all(|r| r.iter().filter(|&&p| p > 0.0).count() == 1);
    if one_hot {
        return Ok(TemperatureFit {
            temperature: 1.0,
            nll: nll_at_one,
            nll_at_one,
            degenerate: true,
        });
    }

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (LOG_T_MIN, LOG_T_MAX);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (nll(c), nll(d));
    while b - a > LOG_T_TOLERANCE {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = nll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = nll(d);
        }
    }
    let best = 0.5 * (a + b);
    let f_best = nll(best);
    let (log_t, f) = if f_best <= nll_at_one {
        (best, f_best)
    } else {
        (0.0, nll_at_one)
    };
    Ok(TemperatureFit {
        temperature: log_t.exp(),
        nll: f,
        nll_at_one,
        degenerate: false,
    })
}

/// ECE in the label space obtained by collapsing the hierarchy to
/// `depth`: probabilities are summed within each collapsed group, truth is
/// mapped to its group, and confidence is the largest group probability.
/// When everything collapses into one group that group has probability 1.
pub fn hierarchical_ece(preds: &PredictionSet, tax: &Taxonomy, depth: usize, n_bins: usize) -> Result<f64> {
    if n_bins == 0 {
        return Err(Error::InvalidBins);
    }
    preds.check_class_order(&tax.class_names())?;
    let collapse = tax.collapse_to_depth(depth)?;
    let groups = collapse.num_groups();
    let (conf, correct): (Vec<f64>, Vec<bool>) = preds
        .rows()
        .zip(preds.truth())
        .map(|(row, &t)| {
            if groups == 1 {
                return (1.0, true);
            }
            let mut q = vec![0.0; groups];
            for (j, &p) in row.iter().enumerate() {
                q[collapse.group_of_class[j]] += p;
            }
            let g = argmax(&q);
            (q[g].min(1.0), g == collapse.group_of_class[t])
        })
        .unzip();
    Ok(ece(&bin_confidences(&conf, &correct, n_bins)?))
}

/// Hierarchical ECE at every depth from 0 to the deepest leaf.
pub fn hierarchical_ece_profile(preds: &PredictionSet, tax: &Taxonomy, n_bins: usize) -> Result<BTreeMap<usize, f64>> {
    (0..=tax.max_leaf_depth())
        .map(|d| Ok((d, hierarchical_ece(preds, tax, d, n_bins)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationReport {
    pub confidence_source: ConfidenceSource,
    pub bins: usize,
    pub temperature: f64,
    pub degenerate_fit: bool,
    pub ece_pre: f64,
    pub ece_post: f64,
    pub mce_pre: f64,
    pub mce_post: f64,
    /// Test-set ECE per hierarchy depth before scaling, when a hierarchy is supplied.
    pub ece_by_depth: Option<BTreeMap<usize, f64>>,
}

/// Fit T on `val`, then report ECE/MCE on `test` before and after scaling.
/// Predictions under `CrmSelected` are recomputed on the scaled probabilities.
pub fn calibration_report(
    val: &PredictionSet,
    test: &PredictionSet,
    n_bins: usize,
    source: ConfidenceSource,
    tax: Option<&Taxonomy>,
    fast_path: bool,
) -> Result<(CalibrationReport, CalibrationBins, CalibrationBins)> {
    if n_bins == 0 {
        return Err(Error::InvalidBins);
    }
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let costs = tax.map(CostMatrix::from_taxonomy);
    let fit = fit_temperature(val)?;
    let scaled = scale_predictions(test, fit.temperature)?;

    let pred_pre = predicted_classes(test, source, costs.as_ref(), fast_path)?;
    let bins_pre = bin_predictions(test, &pred_pre, n_bins)?;
    let pred_post = predicted_classes(&scaled, source, costs.as_ref(), fast_path)?;
    let bins_post = bin_predictions(&scaled, &pred_post, n_bins)?;
    let ece_by_depth = tax
        .map(|t| hierarchical_ece_profile(test, t, n_bins))
        .transpose()?;

    let report = CalibrationReport {
        confidence_source: source,
        bins: n_bins,
        temperature: fit.temperature,
        degenerate_fit: fit.degenerate,
        ece_pre: ece(&bins_pre),
        ece_post: ece(&bins_post),
        mce_pre: mce(&bins_pre),
        mce_post: mce(&bins_post),
        ece_by_depth,
    };
    Ok((report, bins_pre, bins_post))
}
