use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hier_risk_core::dataio::{
    load_predictions, load_taxonomy, report_to_json, save_predictions, save_taxonomy,
};
use hier_risk_core::metrics::DEFAULT_K;
use hier_risk_core::synth::{gen_predictions, gen_taxonomy, gen_validation};
use hier_risk_core::{
    batch_apply, batch_predict, calibration_report, full_report, ConfidenceSource, CostMatrix,
    MetricsReport, PredictionSet, RankingBasis, SynthConfig, Taxonomy, TreeMode, TruthMode,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "hier-risk", version, about = "Hierarchy-aware re-ranking and evaluation of classifier outputs")]
struct Cli {
    /// Write the artifact here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for per-sample work (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Skip the risk computation when the top class has more than half the mass.
    #[arg(long, global = true)]
    theorem1_fastpath: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the LCA-height cost matrix as CSV.
    BuildCosts {
        #[arg(long)]
        hierarchy: PathBuf,
    },
    /// Rank classes per sample and emit the top entries as CSV.
    Rerank {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value_t = Basis::Crm)]
        basis: Basis,
        /// Number of ranked classes to emit per sample.
        #[arg(long, default_value_t = 1)]
        top: usize,
    },
    /// Evaluate rankings and emit a metrics report as JSON.
    Eval {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value_t = Basis::Crm)]
        basis: Basis,
        /// Comma-separated k values for distance@k.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
    },
    /// Fit a temperature on validation data and report calibration on test data.
    Calibrate {
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 15)]
        bins: usize,
        #[arg(long, value_enum, default_value_t = Source::MaxLikelihood)]
        source: Source,
        /// Needed for crm-selected confidences; also adds per-depth ECE.
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        /// Also write post-scaling reliability-diagram bins here.
        #[arg(long)]
        reliability: Option<PathBuf>,
    },
    /// Evaluate both bases on the original hierarchy and on one with shuffled leaves.
    ShuffleEval {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
    },
    /// Generate a synthetic hierarchy and prediction files.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    hierarchy: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 8)]
    classes: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Extra held-out rows written to validation.csv.
    #[arg(long, default_value_t = 0)]
    val_samples: usize,
    /// Symmetric Dirichlet concentration.
    #[arg(long, default_value_t = 1.0)]
    concentration: f64,
    /// self, argmax or corrupted:RHO
    #[arg(long, default_value = "self", value_parser = parse_truth)]
    truth: TruthMode,
    #[arg(long, value_enum, default_value_t = Tree::Balanced)]
    tree: Tree,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Basis {
    Likelihood,
    Crm,
}

impl From<Basis> for RankingBasis {
    fn from(b: Basis) -> Self {
        match b {
            Basis::Likelihood => RankingBasis::LikelihoodDescending,
            Basis::Crm => RankingBasis::RiskAscending,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    MaxLikelihood,
    CrmSelected,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tree {
    Flat,
    Balanced,
    Random,
}

fn parse_truth(s: &str) -> Result<TruthMode, String> {
    match s {
        "self" => Ok(TruthMode::SelfSampled),
        "argmax" => Ok(TruthMode::Argmax),
        _ => match s.strip_prefix("corrupted:") {
            Some(rho) => rho
                .parse()
                .map(TruthMode::Corrupted)
                .map_err(|e| format!("bad rho `{rho}`: {e}")),
            None => Err(format!("expected self, argmax or corrupted:RHO, got `{s}`")),
        },
    }
}

enum Failure {
    /// Bad input files or flags.
    Input(String),
    /// Anything else, e.g. an output that could not be written.
    Internal(String),
}

impl From<hier_risk_core::Error> for Failure {
    fn from(e: hier_risk_core::Error) -> Self {
        let mut msg = e.to_string();
        let mut src = std::error::Error::source(&e);
        while let Some(s) = src {
            msg.push_str(": ");
            msg.push_str(&s.to_string());
            src = s.source();
        }
        Failure::Input(msg)
    }
}

type CliResult<T> = Result<T, Failure>;

fn context<T>(r: hier_risk_core::Result<T>, path: &Path) -> CliResult<T> {
    r.map_err(|e| match Failure::from(e) {
        Failure::Input(m) => Failure::Input(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Internal(format!("writing {}: {e}", p.display()))),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Internal(format!("writing stdout: {e}"))),
    }
}

fn load_pair(inputs: &Inputs) -> CliResult<(Taxonomy, PredictionSet)> {
    let tax = context(load_taxonomy(&inputs.hierarchy), &inputs.hierarchy)?;
    let preds = context(load_predictions(&inputs.predictions), &inputs.predictions)?;
    let preds = context(preds.align_to(&tax), &inputs.predictions)?;
    Ok((tax, preds))
}

/// Explicit k values are validated downstream; the default list is clipped to K.
fn k_list(k: &Option<Vec<usize>>, classes: usize) -> Vec<usize> {
    match k {
        Some(v) => v.clone(),
        None => DEFAULT_K.iter().copied().filter(|&k| k <= classes).collect(),
    }
}

fn json<T: Serialize>(v: &T) -> CliResult<String> {
    report_to_json(v).map_err(|e| Failure::Internal(e.to_string()))
}

#[derive(Serialize)]
struct BasisPair {
    likelihood: MetricsReport,
    crm: MetricsReport,
}

#[derive(Serialize)]
struct ShuffleReport {
    seed: u64,
    original: BasisPair,
    shuffled: BasisPair,
}

fn both_bases(preds: &PredictionSet, tax: &Taxonomy, ks: &[usize]) -> CliResult<BasisPair> {
    Ok(BasisPair {
        likelihood: full_report(preds, tax, RankingBasis::LikelihoodDescending, ks)?,
        crm: full_report(preds, tax, RankingBasis::RiskAscending, ks)?,
    })
}

fn run(cli: Cli) -> CliResult<()> {
    let out = cli.out.as_deref();
    let fast = cli.theorem1_fastpath;
    match cli.command {
        Command::BuildCosts { hierarchy } => {
            let tax = context(load_taxonomy(&hierarchy), &hierarchy)?;
            emit(out, &CostMatrix::from_taxonomy(&tax).to_csv())
        }
        Command::Rerank { inputs, basis, top } => {
            let (tax, preds) = load_pair(&inputs)?;
            let k = tax.num_classes();
            if top == 0 || top > k {
                return Err(hier_risk_core::Error::KOutOfRange { k: top, max: k }.into());
            }
            let costs = CostMatrix::from_taxonomy(&tax);
            let names = tax.class_names();
            let orders: Vec<Vec<usize>> = match (basis, top) {
                (Basis::Crm, 1) => batch_predict(&preds, &costs, fast)?.into_iter().map(|c| vec![c]).collect(),
                _ => batch_apply(&preds, &costs, basis.into())?
                    .into_iter()
                    .map(|r| r.order[..top].to_vec())
                    .collect(),
            };
            let mut text = String::from("sample,truth");
            for r in 1..=top {
                text.push_str(&format!(",rank{r}"));
            }
            text.push('\n');
            for (i, (order, &y)) in orders.iter().zip(preds.truth()).enumerate() {
                text.push_str(&format!("{i},{}", names[y]));
                for &c in order {
                    text.push(',');
                    text.push_str(&names[c]);
                }
                text.push('\n');
            }
            emit(out, &text)
        }
        Command::Eval { inputs, basis, k } => {
            let (tax, preds) = load_pair(&inputs)?;
            let ks = k_list(&k, tax.num_classes());
            let report = full_report(&preds, &tax, basis.into(), &ks)?;
            emit(out, &json(&report)?)
        }
        Command::Calibrate { val, test, bins, source, hierarchy, reliability } => {
            let tax = match &hierarchy {
                Some(h) => Some(context(load_taxonomy(h), h)?),
                None => None,
            };
            let source = match source {
                Source::MaxLikelihood => ConfidenceSource::MaxLikelihood,
                Source::CrmSelected => ConfidenceSource::CrmSelected,
            };
            if source == ConfidenceSource::CrmSelected && tax.is_none() {
                return Err(Failure::Input("--source crm-selected needs --hierarchy".into()));
            }
            let mut val_set = context(load_predictions(&val), &val)?;
            let mut test_set = context(load_predictions(&test), &test)?;
            if test_set.is_empty() {
                return Err(Failure::Input(format!("{}: test set has no rows", test.display())));
            }
            if let Some(t) = &tax {
                val_set = context(val_set.align_to(t), &val)?;
                test_set = context(test_set.align_to(t), &test)?;
            }
            let (report, _, post) = calibration_report(&val_set, &test_set, bins, source, tax.as_ref(), fast)?;
            if let Some(path) = &reliability {
                fs::write(path, post.reliability_csv())
                    .map_err(|e| Failure::Internal(format!("writing {}: {e}", path.display())))?;
            }
            emit(out, &json(&report)?)
        }
        Command::ShuffleEval { inputs, seed, k } => {
            let (tax, preds) = load_pair(&inputs)?;
            let ks = k_list(&k, tax.num_classes());
            let shuffled = tax.shuffle_leaves(seed);
            let shuffled_preds = preds.align_to(&shuffled)?;
            let report = ShuffleReport {
                seed,
                original: both_bases(&preds, &tax, &ks)?,
                shuffled: both_bases(&shuffled_preds, &shuffled, &ks)?,
            };
            emit(out, &json(&report)?)
        }
        Command::Simulate(a) => {
            let cfg = SynthConfig {
                seed: a.seed,
                classes: a.classes,
                samples: a.samples,
                concentration: a.concentration,
                truth_mode: a.truth,
                tree_mode: match a.tree {
                    Tree::Flat => TreeMode::Flat,
                    Tree::Balanced => TreeMode::BalancedBinary,
                    Tree::Random => TreeMode::RandomAttachment,
                },
            };
            let tax = gen_taxonomy(&cfg)?;
            let preds = gen_predictions(&cfg, &tax)?;
            let val = (a.val_samples > 0)
                .then(|| gen_validation(&cfg, &tax, a.val_samples))
                .transpose()?;
            let write_err = |e: hier_risk_core::Error| Failure::Internal(e.to_string());
            fs::create_dir_all(&a.out_dir)
                .map_err(|e| Failure::Internal(format!("creating {}: {e}", a.out_dir.display())))?;
            save_taxonomy(&tax, a.out_dir.join("hierarchy.tsv")).map_err(write_err)?;
            save_predictions(&preds, a.out_dir.join("predictions.csv")).map_err(write_err)?;
            if let Some(v) = val {
                save_predictions(&v, a.out_dir.join("validation.csv")).map_err(write_err)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
