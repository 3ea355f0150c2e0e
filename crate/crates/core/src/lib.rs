//! Post-hoc conditional risk minimization over a class hierarchy.
//!
//! Given any classifier's per-class likelihoods and a tree over the
//! classes, this crate builds the LCA-height cost matrix, re-ranks classes
//! by expected cost, and evaluates hierarchy-aware quality (distance@k,
//! mistake severity) and calibration (ECE/MCE, temperature scaling).
//!
//! ```
//! use hier_risk_core::{parse_taxonomy, CostMatrix, crm_predict};
//!
//! let tax = parse_taxonomy("a\tp\nb\tp\nc\tq\nd\tq\np\tr\nq\tr\n").unwrap();
//! let costs = CostMatrix::from_taxonomy(&tax);
//! // the argmax is `a`, but most of the mass sits under `q`
//! let p = [0.35, 0.05, 0.33, 0.27];
//! assert_eq!(crm_predict(&p, &costs).unwrap(), 2);
//! ```

pub mod calibration;
pub mod dataio;
pub mod error;
pub mod metrics;
pub mod numeric;
pub mod predictions;
pub mod riskmin;
pub mod rng;
pub mod synth;
pub mod taxonomy;

pub use calibration::{
    apply_temperature, bin_confidences, bin_predictions, calibration_report, ece, fit_temperature,
    hierarchical_ece, hierarchical_ece_profile, mce, CalibrationBins, CalibrationReport,
    ConfidenceSource, TemperatureFit,
};
pub use error::{Error, Result};
pub use metrics::{
    distance_at_k, full_report, metric_flaw_check, report_from_ranked, severity_histogram,
    severity_over_all, severity_over_mistakes, top1_error, MetricsReport, MistakeSeverity,
};
pub use predictions::PredictionSet;
pub use riskmin::{
    batch_apply, batch_predict, conditional_risk, crm_predict, crm_predict_with, crm_rerank,
    likelihood_rank, CostMatrix, RankedOutput, RankingBasis,
};
pub use rng::SeededRng;
pub use synth::{SynthConfig, TreeMode, TruthMode};
pub use taxonomy::{parse_taxonomy, Collapse, Taxonomy};
