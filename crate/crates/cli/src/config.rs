//! Command-line options, `key = value` config files and the resolved run configuration.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use privehd::rng::derive_seed;
use privehd::{EncodingVariant, QuantScheme};
use serde::{Serialize, Serializer};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "privehd", version, about = "Hyperdimensional classification with a privacy toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a dataset split and report accuracy.
    #[command(args_override_self = true)]
    Train(Opts),
    /// Evaluate a saved model.
    #[command(args_override_self = true)]
    Predict(Opts),
    /// Run retraining epochs on a saved model.
    #[command(args_override_self = true)]
    Retrain(Opts),
    /// Prune a saved model, then optionally retrain.
    #[command(args_override_self = true)]
    Prune(Opts),
    /// Quantize, prune, retrain and release a noisy model.
    #[command(args_override_self = true)]
    DpTrain(Opts),
    /// Reconstruct features from a query or from two adjacent models.
    #[command(args_override_self = true)]
    Attack(Opts),
    /// Approximate-encoder cost, sign agreement and end-to-end accuracy.
    #[command(args_override_self = true)]
    HwSim(Opts),
    /// Accuracy grids over epsilon, dimensionality, scheme and mask size.
    #[command(args_override_self = true)]
    Sweep(Opts),
    /// Write a synthetic dataset as CSV.
    #[command(args_override_self = true)]
    GenData(Opts),
}

impl Command {
    pub fn parts(&self) -> (&'static str, &Opts) {
        match self {
            Command::Train(o) => ("train", o),
            Command::Predict(o) => ("predict", o),
            Command::Retrain(o) => ("retrain", o),
            Command::Prune(o) => ("prune", o),
            Command::DpTrain(o) => ("dp-train", o),
            Command::Attack(o) => ("attack", o),
            Command::HwSim(o) => ("hw-sim", o),
            Command::Sweep(o) => ("sweep", o),
            Command::GenData(o) => ("gen-data", o),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    Synthetic,
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalSet {
    Test,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackMode {
    Query,
    Adjacent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grid {
    /// epsilon x D_hv accuracy of released models
    Dp,
    /// scheme x D_hv x mask accuracy and PSNR of obfuscated queries
    Inference,
    /// scheme x D_hv accuracy of models trained on quantized encodings
    Training,
}

/// Every flag is optional; unset values fall back to the config file, then to defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// `key = value` file using the long flag names as keys.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Dataset CSV; a generated dataset is used when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub data_kind: Option<DataKind>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Feature count of a synthetic dataset.
    #[arg(long)]
    pub features: Option<usize>,
    /// Edge length of image-like samples.
    #[arg(long)]
    pub side: Option<usize>,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    #[arg(long)]
    pub cluster_std: Option<f64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub eval: Option<EvalSet>,

    /// `level` or `scalar`.
    #[arg(long)]
    pub encoding: Option<EncodingVariant>,
    #[arg(long)]
    pub d_hv: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    /// none, binary, ternary, ternary_biased, two_bit; append `/empirical` for data-driven thresholds.
    #[arg(long)]
    pub scheme: Option<QuantScheme>,

    /// Percentage of dimensions to prune.
    #[arg(long)]
    pub prune: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// `inf` disables noise.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Fraction of query dimensions masked to zero.
    #[arg(long)]
    pub mask: Option<f64>,

    #[arg(long)]
    pub master_seed: Option<u64>,
    #[arg(long)]
    pub codebook_seed: Option<u64>,
    #[arg(long)]
    pub noise_seed: Option<u64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub ties_seed: Option<u64>,
    #[arg(long)]
    pub data_seed: Option<u64>,

    /// Input model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Second model for the adjacent-model attack.
    #[arg(long)]
    pub model_without: Option<PathBuf>,
    /// Output model (or dataset for gen-data).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON-lines destination; stdout when absent.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Optional CSV projection of the measurement records.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Directory for PGM reconstructions of image-like samples.
    #[arg(long)]
    pub pgm_dir: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub attack: Option<AttackMode>,
    /// Target sample index.
    #[arg(long)]
    pub sample: Option<usize>,
    /// Monte-Carlo columns for hw-sim.
    #[arg(long)]
    pub columns: Option<usize>,

    #[arg(long, value_enum)]
    pub grid: Option<Grid>,
    /// Comma-separated list.
    #[arg(long)]
    pub epsilons: Option<String>,
    /// Comma-separated list of D_hv values.
    #[arg(long)]
    pub dims: Option<String>,
    /// Comma-separated list of schemes.
    #[arg(long)]
    pub schemes: Option<String>,
    /// Comma-separated list of masked fractions.
    #[arg(long)]
    pub masks: Option<String>,
    /// Noise seeds per grid point.
    #[arg(long)]
    pub trials: Option<usize>,
}

/// Stream indices used to derive sub-seeds from the master seed.
pub mod stream {
    pub const CODEBOOK: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const TIES: u64 = 4;
    pub const DATA: u64 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Seeds {
    pub master: u64,
    pub codebook: u64,
    pub noise: u64,
    pub split: u64,
    pub ties: u64,
    pub data: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Self {
            master,
            codebook: derive_seed(master, stream::CODEBOOK),
            noise: derive_seed(master, stream::NOISE),
            split: derive_seed(master, stream::SPLIT),
            ties: derive_seed(master, stream::TIES),
            data: derive_seed(master, stream::DATA),
        }
    }
}

/// Fully resolved configuration; logged as the first JSON-lines record.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub data: Option<PathBuf>,
    pub data_kind: DataKind,
    pub classes: usize,
    pub features: usize,
    pub side: usize,
    pub samples_per_class: usize,
    pub cluster_std: f64,
    pub train_fraction: f64,
    pub eval: EvalSet,
    pub encoding: EncodingVariant,
    pub d_hv: usize,
    pub levels: usize,
    #[serde(serialize_with = "display")]
    pub scheme: QuantScheme,
    pub prune: f64,
    pub epochs: usize,
    #[serde(serialize_with = "epsilon")]
    pub epsilon: f64,
    pub delta: f64,
    pub mask: f64,
    pub seeds: Seeds,
    pub model: Option<PathBuf>,
    pub model_without: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub pgm_dir: Option<PathBuf>,
    pub attack: AttackMode,
    pub sample: usize,
    pub columns: usize,
    pub grid: Grid,
    #[serde(serialize_with = "epsilons")]
    pub epsilons: Vec<f64>,
    pub dims: Vec<usize>,
    #[serde(serialize_with = "display_list")]
    pub schemes: Vec<QuantScheme>,
    pub masks: Vec<f64>,
    pub trials: usize,
}

fn display<S: Serializer>(v: &QuantScheme, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn display_list<S: Serializer>(v: &[QuantScheme], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|q| q.to_string()))
}

/// JSON has no infinity; write it as the string "inf".
pub fn epsilon_value(e: f64) -> serde_json::Value {
    if e.is_finite() {
        serde_json::json!(e)
    } else {
        serde_json::json!("inf")
    }
}

fn epsilon<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    epsilon_value(*v).serialize(s)
}

fn epsilons<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|&e| epsilon_value(e)))
}

fn parse_list<T: std::str::FromStr>(key: &str, raw: &Option<String>, default: Vec<T>) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    let Some(raw) = raw else { return Ok(default) };
    let items = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| CliError::Config(format!("--{key}: bad item {s:?}: {e}"))))
        .collect::<Result<Vec<T>, _>>()?;
    if items.is_empty() {
        return Err(CliError::Config(format!("--{key} is empty")));
    }
    Ok(items)
}

fn check(ok: bool, message: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(message()))
    }
}

impl RunConfig {
    pub fn resolve(command: &'static str, o: &Opts) -> Result<Self, CliError> {
        let master = o.master_seed.unwrap_or(0);
        let derived = Seeds::from_master(master);
        let seeds = Seeds {
            master,
            codebook: o.codebook_seed.unwrap_or(derived.codebook),
            noise: o.noise_seed.unwrap_or(derived.noise),
            split: o.split_seed.unwrap_or(derived.split),
            ties: o.ties_seed.unwrap_or(derived.ties),
            data: o.data_seed.unwrap_or(derived.data),
        };
        let data_kind = o.data_kind.unwrap_or(DataKind::Synthetic);
        let side = o.side.unwrap_or(16);
        let cfg = RunConfig {
            command,
            data: o.data.clone(),
            data_kind,
            classes: o.classes.unwrap_or(4),
            features: o.features.unwrap_or(match data_kind {
                DataKind::Synthetic => 64,
                DataKind::Image => side * side,
            }),
            side,
            samples_per_class: o.samples_per_class.unwrap_or(100),
            cluster_std: o.cluster_std.unwrap_or(0.08),
            train_fraction: o.train_fraction.unwrap_or(0.7),
            eval: o.eval.unwrap_or(EvalSet::Test),
            encoding: o.encoding.unwrap_or(EncodingVariant::Level),
            d_hv: o.d_hv.unwrap_or(4000),
            levels: o.levels.unwrap_or(16),
            scheme: o.scheme.unwrap_or(QuantScheme::NONE),
            prune: o.prune.unwrap_or(0.0),
            epochs: o.epochs.unwrap_or(0),
            epsilon: o.epsilon.unwrap_or(f64::INFINITY),
            delta: o.delta.unwrap_or(privehd::privacy::DEFAULT_DELTA),
            mask: o.mask.unwrap_or(0.0),
            seeds,
            model: o.model.clone(),
            model_without: o.model_without.clone(),
            out: o.out.clone(),
            log: o.log.clone(),
            csv: o.csv.clone(),
            pgm_dir: o.pgm_dir.clone(),
            attack: o.attack.unwrap_or(AttackMode::Query),
            sample: o.sample.unwrap_or(0),
            columns: o.columns.unwrap_or(100_000),
            grid: o.grid.unwrap_or(Grid::Dp),
            epsilons: parse_list("epsilons", &o.epsilons, vec![0.25, 0.5, 1.0, 2.0])?,
            dims: parse_list("dims", &o.dims, vec![1000, 2000, 4000])?,
            schemes: parse_list(
                "schemes",
                &o.schemes,
                vec![QuantScheme::NONE, QuantScheme::BINARY, QuantScheme::TERNARY, QuantScheme::TWO_BIT],
            )?,
            masks: parse_list("masks", &o.masks, vec![0.0, 0.5, 0.9])?,
            trials: o.trials.unwrap_or(1),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        check(self.train_fraction > 0.0 && self.train_fraction < 1.0, || {
            format!("train-fraction must be in (0, 1), got {}", self.train_fraction)
        })?;
        check((0.0..100.0).contains(&self.prune), || format!("prune must be in [0, 100), got {}", self.prune))?;
        check(self.epsilon > 0.0, || format!("epsilon must be positive, got {}", self.epsilon))?;
        check(self.delta > 0.0 && self.delta < 1.0, || format!("delta must be in (0, 1), got {}", self.delta))?;
        for &m in std::iter::once(&self.mask).chain(&self.masks) {
            check((0.0..1.0).contains(&m), || format!("mask fraction must be in [0, 1), got {m}"))?;
        }
        for &e in &self.epsilons {
            check(e > 0.0, || format!("epsilons must be positive, got {e}"))?;
        }
        check(self.d_hv > 0 && self.dims.iter().all(|&d| d > 0), || "dimensionality must be positive".into())?;
        check(self.levels >= 2, || format!("levels must be at least 2, got {}", self.levels))?;
        check(self.trials > 0, || "trials must be positive".into())?;
        check(self.columns > 0, || "columns must be positive".into())?;
        if self.data_kind == DataKind::Image && self.data.is_none() {
            check(self.features == self.side * self.side, || {
                format!("image data has side^2 = {} features, got --features {}", self.side * self.side, self.features)
            })?;
        }
        Ok(())
    }
}

/// Turns a `key = value` file into `--key value` tokens. `#` starts a comment.
pub fn config_file_args(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config_text(&text)
}

pub fn parse_config_text(text: &str) -> Result<Vec<String>, CliError> {
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!("config line {}: expected `key = value`", i + 1)));
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(CliError::Config(format!("config line {}: invalid key {key:?}", i + 1)));
        }
        args.push(format!("--{key}"));
        args.push(value.trim().to_string());
    }
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("privehd").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn config_text_to_tokens() {
        let args = parse_config_text("# comment\nd_hv = 2000\n\nscheme = binary # trailing\n").unwrap();
        assert_eq!(args, ["--d-hv", "2000", "--scheme", "binary"]);
        assert!(parse_config_text("nonsense").is_err());
        assert!(parse_config_text("config = x").is_err());
    }

    #[test]
    fn later_values_override_earlier() {
        let cli = parse(&["train", "--d-hv", "2000", "--d-hv", "3000"]);
        assert_eq!(cli.command.parts().1.d_hv, Some(3000));
    }

    #[test]
    fn seeds_follow_master() {
        let a = RunConfig::resolve("train", &Opts { master_seed: Some(7), ..Default::default() }).unwrap();
        let b = RunConfig::resolve("train", &Opts { master_seed: Some(8), ..Default::default() }).unwrap();
        assert_eq!(a.seeds, Seeds::from_master(7));
        assert_ne!(a.seeds.codebook, b.seeds.codebook);
        let pinned = RunConfig::resolve("train", &Opts { master_seed: Some(7), noise_seed: Some(1), ..Default::default() });
        assert_eq!(pinned.unwrap().seeds.noise, 1);
    }

    #[test]
    fn validation_rejects_bad_values() {
        for o in [
            Opts { train_fraction: Some(1.0), ..Default::default() },
            Opts { prune: Some(100.0), ..Default::default() },
            Opts { epsilon: Some(0.0), ..Default::default() },
            Opts { masks: Some("0.5,1.0".into()), ..Default::default() },
            Opts { dims: Some("".into()), ..Default::default() },
        ] {
            assert!(matches!(RunConfig::resolve("train", &o), Err(CliError::Config(_))), "{o:?}");
        }
    }

    #[test]
    fn infinite_epsilon_is_logged_as_string() {
        let cfg = RunConfig::resolve("dp-train", &Opts::default()).unwrap();
        let v = serde_json::to_value(&cfg).unwrap();
        assert_eq!(v["epsilon"], "inf");
        assert_eq!(v["scheme"], "none");
    }
}
