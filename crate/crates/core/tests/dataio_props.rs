use hier_risk_core::dataio::{
    format_predictions, load_predictions, parse_predictions, report_to_json, save_predictions,
};
use hier_risk_core::synth::{gen_predictions, gen_taxonomy};
use hier_risk_core::{full_report, PredictionSet, RankingBasis, SynthConfig, TreeMode, TruthMode};
use proptest::prelude::*;

proptest! {
    #[test]
    fn prediction_csv_round_trip(seed in any::<u64>(), k in 2usize..12, n in 0usize..40, conc in 0.05f64..5.0) {
        let cfg = SynthConfig {
            seed,
            classes: k,
            samples: n,
            concentration: conc,
            truth_mode: TruthMode::Corrupted(0.3),
            tree_mode: TreeMode::RandomAttachment,
        };
        let t = gen_taxonomy(&cfg).unwrap();
        let p = gen_predictions(&cfg, &t).unwrap();
        let back = parse_predictions(&format_predictions(&p).unwrap()).unwrap();
        prop_assert_eq!(back.truth(), p.truth());
        for (a, b) in back.probs().iter().zip(p.probs()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn file_round_trip_is_exact() {
    let cfg = SynthConfig { seed: 3, classes: 8, samples: 100, ..SynthConfig::default() };
    let t = gen_taxonomy(&cfg).unwrap();
    let p = gen_predictions(&cfg, &t).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    save_predictions(&p, &path).unwrap();
    let back: PredictionSet = load_predictions(&path).unwrap();
    assert_eq!(back, p);
}

#[test]
fn identical_runs_give_identical_bytes() {
    let run = || {
        let cfg = SynthConfig { seed: 5, classes: 16, samples: 300, ..SynthConfig::default() };
        let t = gen_taxonomy(&cfg).unwrap();
        let p = gen_predictions(&cfg, &t).unwrap();
        let r = full_report(&p, &t, RankingBasis::RiskAscending, &[1, 5]).unwrap();
        (format_predictions(&p).unwrap(), report_to_json(&r).unwrap())
    };
    assert_eq!(run(), run());
}
