//! `analyze`: on-demand diagnostics for a saved parameter file.

use std::path::PathBuf;

use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};
use tangent_core::bounds::{bound_eq1, bound_report, hoeffding_tail, max_region_count, path_mass_diagnostic};
use tangent_core::checkpoint::load_params;
use tangent_core::data::{Dataset, Split};
use tangent_core::region_stats::{
    active_node_stats, empirical_tangent_sensitivity_with, neuron_margins, region_constancy_check,
    write_margins_csv, RegionWeighting,
};
use tangent_core::sensitivity::{
    mean_frobenius_sq, path_enumeration_sensitivity_capped, tangent_sample_sensitivity, DEFAULT_PATH_CAP,
};
use tangent_core::testing::rng;
use tangent_core::Params;

use crate::config::RunConfig;
use crate::error::{invalid, CliResult};
use crate::output::OutputDir;

/// Full matrices larger than this are summarized but not written.
const MAX_MATRIX_ENTRIES: usize = 5_000_000;

#[derive(Debug, Clone, clap::Args)]
pub struct AnalyzeArgs {
    /// Parameter file (`.json` or binary).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Run configuration whose `data` section supplies the inputs; uniform
    /// random inputs in `[0, 1]` are used without it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset split to analyze.
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    /// Number of inputs (the first `n` of the split, or `n` random inputs).
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    /// Seed for random inputs and perturbations.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short = 'o')]
    pub output_dir: PathBuf,
    #[arg(long, env = tangent_core::experiment::DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,

    /// Bound report with components.
    #[arg(long)]
    pub bounds: bool,
    /// Per-sample and empirical sensitivity, plus the matrix of the first input.
    #[arg(long)]
    pub sensitivity: bool,
    /// Active-node statistics and histogram.
    #[arg(long)]
    pub region_stats: bool,
    /// Per-neuron preactivation margins.
    #[arg(long)]
    pub margins: bool,
    /// Concentration of the sample-mean sensitivity.
    #[arg(long)]
    pub hoeffding: bool,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Sensitivity constancy under in-region perturbations.
    #[arg(long)]
    pub constancy: bool,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub radius: f64,
    /// Layerwise sensitivity against path enumeration.
    #[arg(long)]
    pub oracle_check: bool,
    #[arg(long, default_value_t = DEFAULT_PATH_CAP)]
    pub path_cap: u128,
    /// Every analysis above.
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

fn inputs(args: &AnalyzeArgs, params: &Params) -> CliResult<(Dataset, String)> {
    let d = params.spec().input_dim();
    if args.samples == 0 {
        return Err(invalid("--samples must be at least 1"));
    }
    match &args.config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            cfg.validate(args.data_dir.as_deref())?;
            let (train, test) = cfg.data.load(args.data_dir.as_deref())?;
            let ds = match args.split {
                SplitArg::Train => train,
                SplitArg::Test => test,
            };
            if ds.dim() != d {
                return Err(invalid(format!(
                    "checkpoint expects {d} inputs, dataset {} has {}",
                    ds.name(),
                    ds.dim()
                )));
            }
            let n = args.samples.min(ds.len());
            let idx: Vec<usize> = (0..n).collect();
            Ok((ds.select(&idx), format!("{} ({:?}), first {n}", ds.name(), ds.split())))
        }
        None => {
            let mut r = rng(args.seed);
            let rows: Vec<Vec<f64>> = (0..args.samples)
                .map(|_| (0..d).map(|_| r.random::<f64>()).collect())
                .collect();
            let ds = Dataset::from_rows("uniform", Split::Train, 1, &rows, vec![0; args.samples])?;
            Ok((ds, format!("{} uniform random inputs in [0, 1]", args.samples)))
        }
    }
}

#[derive(Serialize)]
struct OracleRow {
    sample: usize,
    max_abs_diff: f64,
    max_rel_diff: f64,
}

pub fn run(args: &AnalyzeArgs) -> CliResult<Value> {
    let params = load_params(&args.checkpoint)?;
    let (ds, source) = inputs(args, &params)?;
    let x = ds.inputs();
    let all = args.all;
    let mut out = OutputDir::create(&args.output_dir)?;
    let mut summary = serde_json::Map::new();
    summary.insert("inputs".into(), json!(source));
    let stats = active_node_stats(&params, x)?;

    if all || args.bounds {
        let report = bound_report(&params, Some(&stats))?;
        out.write_json("bounds.json", "bound report with components", &report)?;
        summary.insert("eq1_tight".into(), json!(report.eq1_tight_value));
        summary.insert("log10_eq2".into(), json!(report.log10_eq2_value));
    }
    if all || args.sensitivity {
        let per_sample = mean_frobenius_sq(&params, x)?;
        let empirical = empirical_tangent_sensitivity_with(&params, x, RegionWeighting::Normalized)?;
        let unnormalized = empirical_tangent_sensitivity_with(&params, x, RegionWeighting::Unnormalized)?;
        let first = tangent_sample_sensitivity(&params, &x.row_f64(0))?;
        let written = first.rows() * first.cols() <= MAX_MATRIX_ENTRIES;
        if written {
            out.write_with("sensitivity_sample0.csv", "sensitivity matrix of the first input", |w| first.write_csv(w))?;
        }
        let value = json!({
            "per_sample_frobenius_sq": per_sample,
            "empirical": empirical.value,
            "empirical_unnormalized": unnormalized.value,
            "distinct_patterns": empirical.patterns,
            "first_sample_frobenius_sq": first.frobenius_sq(),
            "first_sample_matrix_written": written,
        });
        out.write_json("sensitivity.json", "sensitivity summaries", &value)?;
        summary.insert("sensitivity".into(), value);
    }
    if all || args.region_stats {
        out.write_with("active_nodes.csv", "histogram of active hidden neurons per input", |w| {
            stats.histogram(None).write_csv(w)
        })?;
        let layers: Vec<f64> = (0..stats.hidden_sizes().len()).map(|l| stats.layer_mean(l)).collect();
        let diag = path_mass_diagnostic(&stats, params.depth()).ok();
        let value = json!({
            "samples": stats.len(),
            "hidden_neurons": stats.total_neurons(),
            "mean_active": stats.mu(),
            "std_active": stats.sigma(),
            "layer_mean_active": layers,
            "path_mass": diag,
            "max_region_count_single_output": max_region_count(params.spec()).to_string(),
        });
        out.write_json("region_stats.json", "active-node statistics", &value)?;
        summary.insert("region_stats".into(), value);
    }
    if all || args.margins {
        let margins = neuron_margins(&params, x)?;
        out.write_with("margins.csv", "per-neuron preactivation margins", |w| write_margins_csv(&margins, w))?;
        let rho = margins.iter().map(|m| m.rho).fold(f64::INFINITY, f64::min);
        summary.insert("min_margin".into(), json!(rho));
    }
    if all || args.hoeffding {
        let per_sample = mean_frobenius_sq(&params, x)?;
        let bound = bound_eq1(&params).tight;
        let empirical_tail = hoeffding_tail(args.epsilon, x.len(), per_sample.max)?;
        let bound_tail = bound.map(|b| hoeffding_tail(args.epsilon, x.len(), b)).transpose()?;
        let value = json!({
            "epsilon": args.epsilon,
            "samples": x.len(),
            "sens_max_sample": per_sample.max,
            "tail_with_sample_max": empirical_tail,
            "sens_max_bound": bound,
            "tail_with_bound": bound_tail,
        });
        out.write_json("hoeffding.json", "concentration of the sample-mean sensitivity", &value)?;
        summary.insert("hoeffding".into(), value);
    }
    if all || args.constancy {
        let n = x.len().min(5);
        let reports = (0..n)
            .map(|i| region_constancy_check(&params, &x.row_f64(i), args.trials, args.radius, args.seed + i as u64))
            .collect::<tangent_core::Result<Vec<_>>>()?;
        let violations: usize = reports.iter().map(|r| r.violations).sum();
        let in_region: usize = reports.iter().map(|r| r.in_region).sum();
        out.write_json("constancy.json", "sensitivity constancy within activation regions", &reports)?;
        summary.insert("constancy".into(), json!({ "in_region": in_region, "violations": violations }));
    }
    if all || args.oracle_check {
        let n = x.len().min(5);
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let xi = x.row_f64(i);
            let fast = tangent_sample_sensitivity(&params, &xi)?;
            let slow = path_enumeration_sensitivity_capped(&params, &xi, args.path_cap)?;
            rows.push(OracleRow {
                sample: i,
                max_abs_diff: fast.max_abs_diff(&slow),
                max_rel_diff: fast.max_rel_diff(&slow, f64::MIN_POSITIVE),
            });
        }
        let worst = rows.iter().map(|r| r.max_abs_diff).fold(0.0, f64::max);
        out.write_json("oracle.json", "layerwise sensitivity against path enumeration", &rows)?;
        summary.insert("oracle_max_abs_diff".into(), json!(worst));
    }
    let summary = Value::Object(summary);
    let config = json!({
        "checkpoint": args.checkpoint,
        "config": args.config,
        "split": format!("{:?}", args.split).to_lowercase(),
        "samples": args.samples,
        "seed": args.seed,
        "epsilon": args.epsilon,
        "trials": args.trials,
        "radius": args.radius,
    });
    out.finish("analyze", &config, &summary)?;
    Ok(summary)
}
