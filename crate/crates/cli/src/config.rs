//! Run configuration: one TOML file, overridden by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tangent_core::estimators::AccuracyMode;
use tangent_core::experiment::{Cadence, DataConfig, DataSource, ExperimentConfig};
use tangent_core::{Optimizer, TrainConfig};

use crate::error::{invalid, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    #[serde(default = "yes")]
    pub use_bias: bool,
}

fn yes() -> bool {
    true
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![100; 4],
            use_bias: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub accuracy_mode: AccuracyMode,
    pub cadence: Cadence,
    /// Active-node histogram bin width; Freedman-Diaconis when unset.
    pub histogram_bin_width: Option<f64>,
    /// Write a parameter file after every epoch.
    pub checkpoints: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            accuracy_mode: AccuracyMode::Inverse,
            cadence: Cadence::Epoch,
            histogram_bin_width: None,
            checkpoints: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| invalid(format!("{}: {}", origin.display(), e.to_string().trim_end())))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path)
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            hidden: self.network.hidden.clone(),
            use_bias: self.network.use_bias,
            train: self.train.clone(),
            accuracy_mode: self.analysis.accuracy_mode,
            cadence: self.analysis.cadence,
        }
    }

    /// Field-level checks, including that dataset files exist.
    pub fn validate(&self, default_data_dir: Option<&Path>) -> CliResult<()> {
        if self.network.hidden.is_empty() {
            return Err(invalid("network.hidden must list at least one hidden layer"));
        }
        if let Some(i) = self.network.hidden.iter().position(|&n| n == 0) {
            return Err(invalid(format!("network.hidden[{i}] must be positive")));
        }
        self.train.validate()?;
        if let Some(w) = self.analysis.histogram_bin_width {
            if !(w > 0.0) {
                return Err(invalid(format!("analysis.histogram_bin_width must be positive, got {w}")));
            }
        }
        match &self.data.source {
            DataSource::Synthetic { dim, classes, spread, .. } => {
                if *dim == 0 || *classes < 2 {
                    return Err(invalid("data.source needs dim >= 1 and classes >= 2"));
                }
                if !(*spread >= 0.0) {
                    return Err(invalid("data.source.spread must be nonnegative"));
                }
                if self.data.train_samples.is_none() || self.data.test_samples.is_none() {
                    return Err(invalid("synthetic data needs data.train_samples and data.test_samples"));
                }
            }
            _ => {
                let missing = self.data.missing_files(default_data_dir)?;
                if !missing.is_empty() {
                    let list: Vec<String> = missing.iter().map(|p| p.display().to_string()).collect();
                    return Err(invalid(format!("data.source: missing files {}", list.join(", "))));
                }
            }
        }
        Ok(())
    }
}

/// Flag overrides shared by `train` and `reproduce-cifar`; set flags win.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Output directory.
    #[arg(long, short = 'o')]
    pub output_dir: Option<PathBuf>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Train without biases.
    #[arg(long)]
    pub no_bias: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub train_samples: Option<usize>,
    #[arg(long)]
    pub test_samples: Option<usize>,
    /// Standardize features with training-set statistics.
    #[arg(long)]
    pub standardize: bool,
    /// Estimate accuracy as `train_acc * ratio` instead of `train_acc / ratio`.
    #[arg(long)]
    pub direct_accuracy: bool,
    /// Compare parameters across the last optimizer step instead of the epoch.
    #[arg(long)]
    pub per_step: bool,
    #[arg(long)]
    pub histogram_bin_width: Option<f64>,
    /// Skip per-epoch parameter files.
    #[arg(long)]
    pub no_checkpoints: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(h) = &self.hidden {
            cfg.network.hidden = h.clone();
        }
        if self.no_bias {
            cfg.network.use_bias = false;
        }
        let t = &mut cfg.train;
        t.epochs = self.epochs.unwrap_or(t.epochs);
        t.seed = self.seed.unwrap_or(t.seed);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.learning_rate = self.learning_rate.unwrap_or(t.learning_rate);
        t.weight_decay = self.weight_decay.unwrap_or(t.weight_decay);
        if let Some(o) = self.optimizer {
            t.optimizer = match o {
                OptimizerArg::Sgd => Optimizer::Sgd,
                OptimizerArg::Adam => Optimizer::Adam,
            };
        }
        if self.train_samples.is_some() {
            cfg.data.train_samples = self.train_samples;
        }
        if self.test_samples.is_some() {
            cfg.data.test_samples = self.test_samples;
        }
        cfg.data.standardize |= self.standardize;
        if self.direct_accuracy {
            cfg.analysis.accuracy_mode = AccuracyMode::Direct;
        }
        if self.per_step {
            cfg.analysis.cadence = Cadence::Step;
        }
        if self.histogram_bin_width.is_some() {
            cfg.analysis.histogram_bin_width = self.histogram_bin_width;
        }
        if self.no_checkpoints {
            cfg.analysis.checkpoints = false;
        }
    }
}

/// Desk-scale CIFAR-10 preset: 4x100 with biases, SGD 0.05 / 0.0005 / 64,
/// 20 epochs, stratified 10000 / 2000 subsample.
pub fn cifar_preset(output_dir: PathBuf) -> RunConfig {
    RunConfig {
        output_dir,
        network: NetworkConfig::default(),
        train: TrainConfig::default(),
        data: DataConfig {
            source: DataSource::Cifar10 { dir: None },
            train_samples: Some(10_000),
            test_samples: Some(2_000),
            subsample_seed: 0,
            standardize: false,
        },
        analysis: AnalysisConfig::default(),
    }
}

/// Same shape as the CIFAR-10 preset on a ten-class Gaussian mixture.
pub fn surrogate_preset(output_dir: PathBuf) -> RunConfig {
    let mut cfg = cifar_preset(output_dir);
    cfg.data.source = DataSource::Synthetic {
        dim: 3072,
        classes: 10,
        spread: 0.03,
        seed: 0,
    };
    cfg
}
