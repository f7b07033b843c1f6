use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use kgstale_core::fact_attention::MarginForm;
use kgstale_core::kgdata::FractionBasis;
use kgstale_core::pipeline::RunConfig;
use kgstale_core::trainer::FeatureFacts;

use crate::UsageError;

#[derive(Debug, Parser)]
#[command(name = "kgstale", version, about = "Outdated fact detection for knowledge graphs")]
pub struct Cli {
    /// Log verbosity (error, warn, info, debug, trace)
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean raw triple files, inject outdated facts and write labeled splits
    Prepare(PrepareArgs),
    /// Learn features, train the detector and evaluate it
    Train(TrainArgs),
    /// Evaluate a trained detector on a labeled file
    Evaluate(EvaluateArgs),
    /// Run the pipeline over a range of values of one hyperparameter
    Sweep(SweepArgs),
    /// Print dataset statistics
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct SplitFiles {
    #[arg(long)]
    pub train_file: Option<PathBuf>,
    #[arg(long)]
    pub test_file: Option<PathBuf>,
    #[arg(long)]
    pub valid_file: Option<PathBuf>,
}

impl SplitFiles {
    /// Explicit files win over `{split}.tsv` (labeled) or `{split}.txt`
    /// (raw) inside `dir`.
    pub fn resolve(&self, dir: Option<&Path>, labeled: bool) -> Result<[PathBuf; 3]> {
        let ext = if labeled { "tsv" } else { "txt" };
        let pick = |flag: &Option<PathBuf>, name: &str, split: &str| -> Result<PathBuf> {
            match (flag, dir) {
                (Some(p), _) => Ok(p.clone()),
                (None, Some(d)) => Ok(d.join(format!("{split}.{ext}"))),
                (None, None) => Err(UsageError(format!("--{name} is required")).into()),
            }
        };
        Ok([
            pick(&self.train_file, "train-file", "train")?,
            pick(&self.test_file, "test-file", "test")?,
            pick(&self.valid_file, "valid-file", "valid")?,
        ])
    }
}

/// Hyperparameters; unset flags fall back to `--config`, then to defaults.
#[derive(Debug, Args, Default)]
pub struct Hyper {
    /// Flat `key = value` config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long = "lambda")]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub detector_epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub neg_ratio: Option<usize>,
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Training facts used for feature learning: current or all
    #[arg(long)]
    pub feature_facts: Option<String>,
    /// Hinge direction of the margin loss: standard or reversed
    #[arg(long)]
    pub margin_form: Option<String>,
    /// Disable the per-entity self-loop fact
    #[arg(long)]
    pub no_self_loop: bool,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Directory holding raw train.txt, test.txt and valid.txt
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub files: SplitFiles,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub fraction: f64,
    /// Size the injection against the split after (post) or before (pre) injection
    #[arg(long, default_value = "post")]
    pub fraction_basis: String,
    /// Dataset name for the summary line
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `prepare`
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub files: SplitFiles,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub hyper: Hyper,
    /// Dataset name for the metrics CSV
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory written by `train`
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test_file: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Directory for metrics.csv (defaults to the model directory)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub files: SplitFiles,
    #[arg(long)]
    pub out: PathBuf,
    /// K, lambda or dim
    #[arg(long)]
    pub param: String,
    /// Comma list (1,2,4) or range (0.1..1.0, a..b:step)
    #[arg(long)]
    pub values: String,
    #[command(flatten)]
    pub hyper: Hyper,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub files: SplitFiles,
    /// Files carry a fourth label column
    #[arg(long)]
    pub labeled: bool,
    /// Also write stats.txt and stats.csv here
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub name: Option<String>,
}

pub fn parse_basis(s: &str) -> Result<FractionBasis> {
    match s {
        "post" => Ok(FractionBasis::PostInjection),
        "pre" => Ok(FractionBasis::PreInjection),
        _ => Err(UsageError(format!("fraction basis must be post or pre, got `{s}`")).into()),
    }
}

fn parse_margin_form(s: &str) -> Result<MarginForm> {
    match s {
        "standard" => Ok(MarginForm::Standard),
        "reversed" => Ok(MarginForm::Reversed),
        _ => Err(UsageError(format!("margin form must be standard or reversed, got `{s}`")).into()),
    }
}

fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!(UsageError(format!("{}:{}: expected `key = value`", path.display(), i + 1)));
        };
        map.insert(k.trim().to_owned(), v.trim().to_owned());
    }
    Ok(map)
}

fn set<T: std::str::FromStr>(file: &BTreeMap<String, String>, key: &str, flag: Option<T>, slot: &mut T) -> Result<()> {
    if let Some(v) = flag {
        *slot = v;
    } else if let Some(raw) = file.get(key) {
        *slot = raw
            .parse()
            .map_err(|_| UsageError(format!("config key `{key}` has bad value `{raw}`")))?;
    }
    Ok(())
}

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "fraction",
    "fraction_basis",
    "threshold",
    "dim",
    "heads",
    "lambda",
    "margin",
    "lr",
    "epochs",
    "detector_epochs",
    "detector_hidden",
    "patience",
    "batch",
    "neg_ratio",
    "gcn_layers",
    "self_loop",
    "margin_form",
    "feature_facts",
    "transe_epochs",
    "transe_margin",
    "transe_lr",
];

impl Hyper {
    /// Defaults, overridden by the config file, overridden by flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => read_config(p)?,
            None => BTreeMap::new(),
        };
        if let Some(k) = file.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            bail!(UsageError(format!("unknown config key `{k}`")));
        }
        let mut c = RunConfig::default();
        let t = &mut c.train;
        set(&file, "seed", self.seed, &mut c.seed)?;
        set(&file, "fraction", self.fraction, &mut c.fraction)?;
        set(&file, "threshold", self.threshold, &mut c.threshold)?;
        set(&file, "dim", self.dim, &mut t.dim)?;
        set(&file, "heads", self.heads, &mut t.heads)?;
        set(&file, "lambda", self.lambda, &mut t.lambda)?;
        set(&file, "margin", self.margin, &mut t.margin)?;
        set(&file, "lr", self.lr, &mut t.lr)?;
        set(&file, "epochs", self.epochs, &mut t.epochs)?;
        set(&file, "detector_epochs", self.detector_epochs, &mut t.detector_epochs)?;
        set(&file, "detector_hidden", None, &mut t.detector_hidden)?;
        set(&file, "patience", None, &mut t.patience)?;
        set(&file, "batch", self.batch, &mut t.batch)?;
        set(&file, "neg_ratio", self.neg_ratio, &mut t.neg_ratio)?;
        set(&file, "gcn_layers", None, &mut t.gcn_layers)?;
        set(&file, "self_loop", self.no_self_loop.then_some(false), &mut t.self_loop)?;
        set(&file, "transe_epochs", None, &mut t.transe.epochs)?;
        set(&file, "transe_margin", None, &mut t.transe.margin)?;
        set(&file, "transe_lr", None, &mut t.transe.lr)?;

        let mut basis = String::from("post");
        set(&file, "fraction_basis", None, &mut basis)?;
        c.basis = parse_basis(&basis)?;
        let mut form = String::from("standard");
        set(&file, "margin_form", self.margin_form.clone(), &mut form)?;
        c.train.margin_form = parse_margin_form(&form)?;
        let mut facts = String::from(c.train.feature_facts.as_str());
        set(&file, "feature_facts", self.feature_facts.clone(), &mut facts)?;
        c.train.feature_facts = FeatureFacts::parse(&facts)
            .ok_or_else(|| UsageError(format!("feature facts must be current or all, got `{facts}`")))?;

        if !(c.threshold > 0.0 && c.threshold < 1.0) {
            bail!(UsageError(format!("threshold must be in (0, 1), got {}", c.threshold)));
        }
        c.train.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(c)
    }
}
