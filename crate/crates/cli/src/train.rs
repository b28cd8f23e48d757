//! `train` and `reproduce-cifar`.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use tangent_core::bounds::{bound_report, BoundReport};
use tangent_core::checkpoint::save_params;
use tangent_core::estimators::{EstimatorReport, MaeSummary, METRICS_HEADER};
use tangent_core::experiment::run_experiment;
use tangent_core::region_stats::{active_node_stats, write_overlay_csv};

use crate::config::RunConfig;
use crate::error::{runtime, CliResult};
use crate::output::OutputDir;

#[derive(Serialize)]
struct EpochBounds<'a> {
    epoch: usize,
    #[serde(flatten)]
    report: &'a BoundReport,
}

pub struct TrainSummary {
    pub summary: Option<MaeSummary>,
    pub epochs: usize,
}

fn checkpoint_name(epoch: usize) -> String {
    format!("checkpoints/epoch_{epoch:03}.bin")
}

/// Trains with per-epoch estimators and writes every artifact under the
/// output directory. `note` is recorded in the manifest.
pub fn run(cfg: &RunConfig, data_dir: Option<&Path>, command: &str, note: Option<&str>) -> CliResult<TrainSummary> {
    cfg.validate(data_dir)?;
    let (train, test) = cfg.data.load(data_dir)?;
    let exp = cfg.experiment();
    let mut out = OutputDir::create(&cfg.output_dir)?;
    out.write_text(
        "config.toml",
        "resolved configuration",
        &toml::to_string(cfg).map_err(|e| runtime(e.to_string()))?,
    )?;

    let spec = exp.network_spec(train.dim(), train.classes().max(test.classes()))?;
    let init = tangent_core::trainer::init_params(&spec, exp.train.seed);
    if cfg.analysis.checkpoints {
        save_params(&init, &out.path(&checkpoint_name(0), "initial parameters")?)?;
    }
    let init_train_stats = active_node_stats(&init, train.inputs())?;
    let init_bounds = bound_report(&init, Some(&init_train_stats))?;

    let mut metrics = out.writer("metrics.csv", "per-epoch losses, accuracies and estimates")?;
    writeln!(metrics, "{METRICS_HEADER}")?;
    metrics.flush()?;
    let mut ckpt_paths = Vec::new();
    if cfg.analysis.checkpoints {
        for e in 1..=exp.train.epochs {
            ckpt_paths.push(out.path(&checkpoint_name(e), &format!("parameters after epoch {e}"))?);
        }
    }

    let mut io_error = None;
    let outcome = run_experiment(&train, &test, &exp, &mut |record, params| {
        let r = &record.report;
        eprintln!(
            "epoch {:>3}  train loss {:.4}  test loss {:.4}  train acc {:.4}  test acc {:.4}  est l1_log {:.4}  l2 {:.4}  l3 {:.4}",
            r.epoch, r.train_loss, r.test_loss, r.train_acc, r.test_acc, r.est_l1_log, r.est_l2, r.est_l3
        );
        if let Err(e) = writeln!(metrics, "{}", r.csv_row()).and_then(|_| metrics.flush()) {
            io_error.get_or_insert(e);
        }
        if let Some(p) = ckpt_paths.get(r.epoch - 1) {
            save_params(params, p)?;
        }
        Ok(())
    })?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    drop(metrics);

    let mut bounds = vec![EpochBounds {
        epoch: 0,
        report: &init_bounds,
    }];
    bounds.extend(outcome.records.iter().map(|r| EpochBounds {
        epoch: r.report.epoch,
        report: &r.bounds,
    }));
    out.write_json("bounds.json", "bound reports with components, epoch 0 is the initialization", &bounds)?;
    let reports: Vec<EstimatorReport> = outcome.reports();
    out.write_json("estimators.json", "estimator reports with their sensitivity components", &reports)?;

    let bin = cfg.analysis.histogram_bin_width;
    out.write_with("active_nodes_initial.csv", "active-node histograms at initialization, train vs test", |w| {
        write_overlay_csv(&outcome.initial_train_stats, &outcome.initial_test_stats, bin, w)
    })?;
    let (tr, te) = outcome.final_stats();
    out.write_with("active_nodes.csv", "active-node histograms after training, train vs test", |w| {
        write_overlay_csv(tr, te, bin, w)
    })?;

    let summary_json = match &outcome.summary {
        Some(s) => {
            out.write_json("mae_summary.json", "mean absolute errors against the test metrics", s)?;
            out.write_text("mae_summary.txt", "mean absolute error table", &s.table())?;
            serde_json::to_value(s)?
        }
        None => serde_json::Value::Null,
    };
    let summary = json!({
        "note": note,
        "train_samples": train.len(),
        "test_samples": test.len(),
        "input_dim": train.dim(),
        "mae": summary_json,
        "final_active_nodes": { "train_mean": tr.mu(), "test_mean": te.mu(), "train_std": tr.sigma(), "test_std": te.sigma() },
    });
    out.finish(command, &serde_json::to_value(cfg)?, &summary)?;
    Ok(TrainSummary {
        summary: outcome.summary,
        epochs: outcome.metrics.len(),
    })
}
