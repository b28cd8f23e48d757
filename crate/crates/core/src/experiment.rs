//! Training runs with per-epoch estimators, bounds and active-node statistics.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::{bound_report, BoundReport};
use crate::data::{self, Dataset};
use crate::estimators::{estimator_report, AccuracyMode, EpochEvaluation, EstimatorReport, MaeSummary};
use crate::network::{NetworkSpec, Params};
use crate::region_stats::{active_node_stats, ActiveNodeStats};
use crate::trainer::{self, EpochMetrics, TrainConfig};
use crate::{Error, Result};

/// Environment variable naming the default dataset directory.
pub const DATA_DIR_ENV: &str = "TANGENT_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// CIFAR-10 binary batches; `dir` falls back to the data directory.
    Cifar10 {
        #[serde(default)]
        dir: Option<PathBuf>,
    },
    Mnist {
        #[serde(default)]
        dir: Option<PathBuf>,
    },
    /// Gaussian mixture; sizes come from `train_samples` and `test_samples`.
    Synthetic {
        dim: usize,
        classes: usize,
        #[serde(default = "default_spread")]
        spread: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_spread() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Stratified subsample size of the training set (all samples if unset).
    #[serde(default)]
    pub train_samples: Option<usize>,
    #[serde(default)]
    pub test_samples: Option<usize>,
    #[serde(default)]
    pub subsample_seed: u64,
    /// Per-feature standardization with training-set statistics.
    #[serde(default)]
    pub standardize: bool,
}

impl DataConfig {
    /// Directory a file-backed source reads from, if any.
    pub fn resolve_dir(&self, default_dir: Option<&Path>) -> Result<Option<PathBuf>> {
        let dir = match &self.source {
            DataSource::Cifar10 { dir } | DataSource::Mnist { dir } => dir.clone(),
            DataSource::Synthetic { .. } => return Ok(None),
        };
        dir.or_else(|| default_dir.map(Path::to_path_buf))
            .map(Some)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "data.source.dir is not set and {DATA_DIR_ENV} is not defined"
                ))
            })
    }

    /// Files the source needs that do not exist.
    pub fn missing_files(&self, default_dir: Option<&Path>) -> Result<Vec<PathBuf>> {
        let files = match (&self.source, self.resolve_dir(default_dir)?) {
            (DataSource::Cifar10 { .. }, Some(dir)) => data::cifar10_files(&dir),
            (DataSource::Mnist { .. }, Some(dir)) => data::mnist_files(&dir),
            _ => Vec::new(),
        };
        Ok(files.into_iter().filter(|f| !f.is_file()).collect())
    }

    pub fn load(&self, default_dir: Option<&Path>) -> Result<(Dataset, Dataset)> {
        let (mut train, mut test) = match &self.source {
            DataSource::Cifar10 { .. } => data::load_cifar10(&self.resolve_dir(default_dir)?.unwrap())?,
            DataSource::Mnist { .. } => data::load_mnist(&self.resolve_dir(default_dir)?.unwrap())?,
            &DataSource::Synthetic {
                dim,
                classes,
                spread,
                seed,
            } => {
                let (n_train, n_test) = match (self.train_samples, self.test_samples) {
                    (Some(a), Some(b)) => (a, b),
                    _ => {
                        return Err(Error::InvalidConfig(
                            "synthetic data needs data.train_samples and data.test_samples".into(),
                        ))
                    }
                };
                return self.finish(data::synthetic_gaussian_split(dim, classes, n_train, n_test, seed, spread)?);
            }
        };
        if let Some(n) = self.train_samples {
            train = data::subsample(&train, n, self.subsample_seed)?;
        }
        if let Some(n) = self.test_samples {
            test = data::subsample(&test, n, self.subsample_seed.wrapping_add(1))?;
        }
        self.finish((train, test))
    }

    fn finish(&self, (mut train, mut test): (Dataset, Dataset)) -> Result<(Dataset, Dataset)> {
        if self.standardize {
            data::standardize(&mut train, &mut test)?;
        }
        Ok((train, test))
    }
}

/// Which pair of parameter states the layer-maximum estimators compare.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cadence {
    /// End of the previous epoch against end of this epoch.
    #[default]
    Epoch,
    /// Before against after the last optimizer step of the epoch.
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub hidden: Vec<usize>,
    #[serde(default = "yes")]
    pub use_bias: bool,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub accuracy_mode: AccuracyMode,
    #[serde(default)]
    pub cadence: Cadence,
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    /// Four hidden layers of 100 with biases, SGD at the default settings.
    pub fn four_by_hundred(epochs: usize, seed: u64) -> Self {
        Self {
            hidden: vec![100; 4],
            use_bias: true,
            train: TrainConfig {
                epochs,
                seed,
                ..TrainConfig::default()
            },
            accuracy_mode: AccuracyMode::Inverse,
            cadence: Cadence::Epoch,
        }
    }

    pub fn network_spec(&self, input_dim: usize, classes: usize) -> Result<NetworkSpec> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(classes);
        NetworkSpec::new(sizes, self.use_bias)
    }
}

/// Desk-scale CIFAR-10 data: a stratified 10k/2k subsample when a CIFAR-10
/// directory is available, else a 3072-dimensional ten-class Gaussian
/// mixture of the same size.
pub fn desk_scale_data(cifar_dir: Option<&Path>, seed: u64) -> Result<(Dataset, Dataset, bool)> {
    let (source, surrogate) = match cifar_dir {
        Some(dir) => (DataSource::Cifar10 { dir: Some(dir.to_path_buf()) }, false),
        None => (
            DataSource::Synthetic {
                dim: 3072,
                classes: 10,
                spread: 0.03,
                seed,
            },
            true,
        ),
    };
    let cfg = DataConfig {
        source,
        train_samples: Some(10_000),
        test_samples: Some(2_000),
        subsample_seed: seed,
        standardize: false,
    };
    let (train, test) = cfg.load(None)?;
    Ok((train, test, surrogate))
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub report: EstimatorReport,
    pub bounds: BoundReport,
    #[serde(skip)]
    pub train_stats: ActiveNodeStats,
    #[serde(skip)]
    pub test_stats: ActiveNodeStats,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub spec: NetworkSpec,
    /// Parameters after each epoch; index 0 is the initialization.
    pub checkpoints: Vec<Params>,
    pub metrics: Vec<EpochMetrics>,
    pub records: Vec<EpochRecord>,
    /// `None` when no epoch ran.
    pub summary: Option<MaeSummary>,
    pub initial_train_stats: ActiveNodeStats,
    pub initial_test_stats: ActiveNodeStats,
}

impl ExperimentOutcome {
    pub fn reports(&self) -> Vec<EstimatorReport> {
        self.records.iter().map(|r| r.report.clone()).collect()
    }

    /// Statistics of the final state (the initial ones when no epoch ran).
    pub fn final_stats(&self) -> (&ActiveNodeStats, &ActiveNodeStats) {
        match self.records.last() {
            Some(r) => (&r.train_stats, &r.test_stats),
            None => (&self.initial_train_stats, &self.initial_test_stats),
        }
    }
}

/// Trains and evaluates every estimator and bound after each epoch;
/// `on_epoch` sees each record as soon as it is ready.
pub fn run_experiment(
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &ExperimentConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord, &Params) -> Result<()>,
) -> Result<ExperimentOutcome> {
    let classes = train_set.classes().max(test_set.classes());
    let spec = cfg.network_spec(train_set.dim(), classes)?;
    let init = trainer::init_params(&spec, cfg.train.seed);
    let initial_train_stats = active_node_stats(&init, train_set.inputs())?;
    let initial_test_stats = active_node_stats(&init, test_set.inputs())?;
    let mut records = Vec::with_capacity(cfg.train.epochs);
    let outcome = trainer::train_from(init, train_set, test_set, &cfg.train, &mut |ctx| {
        let train_stats = active_node_stats(ctx.current, train_set.inputs())?;
        let test_stats = active_node_stats(ctx.current, test_set.inputs())?;
        let previous = match cfg.cadence {
            Cadence::Epoch => ctx.previous,
            Cadence::Step => ctx.before_last_step,
        };
        let m = ctx.metrics;
        let report = estimator_report(&EpochEvaluation {
            epoch: ctx.epoch,
            previous,
            current: ctx.current,
            train_inputs: train_set.inputs(),
            test_inputs: test_set.inputs(),
            train_stats: &train_stats,
            test_stats: &test_stats,
            train_loss: m.train_loss,
            train_acc: m.train_acc,
            test_loss: m.test_loss,
            test_acc: m.test_acc,
            accuracy_mode: cfg.accuracy_mode,
        })?;
        let bounds = bound_report(ctx.current, Some(&train_stats))?;
        let record = EpochRecord {
            report,
            bounds,
            train_stats,
            test_stats,
        };
        on_epoch(&record, ctx.current)?;
        records.push(record);
        Ok(())
    })?;
    let summary = if records.is_empty() {
        None
    } else {
        Some(MaeSummary::from_reports(
            &records.iter().map(|r| r.report.clone()).collect::<Vec<_>>(),
        )?)
    };
    Ok(ExperimentOutcome {
        spec,
        checkpoints: outcome.checkpoints,
        metrics: outcome.metrics,
        records,
        summary,
        initial_train_stats,
        initial_test_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (Dataset, Dataset, ExperimentConfig) {
        let (tr, te) = data::synthetic_gaussian_split(12, 3, 300, 90, 5, 0.8).unwrap();
        let cfg = ExperimentConfig {
            hidden: vec![10, 8],
            use_bias: true,
            train: TrainConfig {
                epochs: 3,
                seed: 2,
                ..TrainConfig::default()
            },
            accuracy_mode: AccuracyMode::Inverse,
            cadence: Cadence::Epoch,
        };
        (tr, te, cfg)
    }

    #[test]
    fn records_every_epoch() {
        let (tr, te, cfg) = small();
        let mut seen = 0;
        let out = run_experiment(&tr, &te, &cfg, &mut |r, _| {
            seen += 1;
            assert_eq!(r.report.epoch, seen);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 3);
        assert_eq!(out.checkpoints.len(), 4);
        let s = out.summary.unwrap();
        assert!(s.loss_l3.is_finite() && s.loss_baseline >= 0.0);
        for r in &out.records {
            let e = &r.report;
            for v in [e.est_l1, e.est_l1_log, e.est_l2, e.est_l3] {
                assert!(v.is_finite() && v > 0.0);
            }
            assert_eq!(e.train_loss, out.metrics[e.epoch - 1].train_loss);
        }
    }

    #[test]
    fn zero_epochs_and_step_cadence() {
        let (tr, te, mut cfg) = small();
        cfg.train.epochs = 0;
        let out = run_experiment(&tr, &te, &cfg, &mut |_, _| Ok(())).unwrap();
        assert!(out.summary.is_none() && out.records.is_empty());
        assert_eq!(out.final_stats().0.len(), tr.len());

        cfg.train.epochs = 1;
        cfg.cadence = Cadence::Step;
        let step = run_experiment(&tr, &te, &cfg, &mut |_, _| Ok(())).unwrap();
        cfg.cadence = Cadence::Epoch;
        let epoch = run_experiment(&tr, &te, &cfg, &mut |_, _| Ok(())).unwrap();
        // Same training, different comparison point.
        assert_eq!(step.checkpoints, epoch.checkpoints);
        assert_eq!(step.records[0].report.est_l3, epoch.records[0].report.est_l3);
    }

    #[test]
    fn data_config_validation() {
        let cfg = DataConfig {
            source: DataSource::Cifar10 { dir: None },
            train_samples: None,
            test_samples: None,
            subsample_seed: 0,
            standardize: false,
        };
        assert!(matches!(cfg.resolve_dir(None), Err(Error::InvalidConfig(_))));
        assert_eq!(
            cfg.resolve_dir(Some(Path::new("/x"))).unwrap(),
            Some(PathBuf::from("/x"))
        );
        let synth = DataConfig {
            source: DataSource::Synthetic {
                dim: 4,
                classes: 2,
                spread: 1.0,
                seed: 0,
            },
            ..cfg
        };
        assert!(synth.load(None).is_err());
        let ok = DataConfig {
            train_samples: Some(10),
            test_samples: Some(4),
            ..synth
        };
        let (a, b) = ok.load(None).unwrap();
        assert_eq!((a.len(), b.len()), (10, 4));
    }
}
