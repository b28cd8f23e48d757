//! `sweep` and `reproduce-fig2`.

use std::path::PathBuf;

use serde_json::{json, Value};
use tangent_core::sweep::{
    column, depth_curve, fig2_presets, interior_peak, write_sweep_csv, Geometry, Sweep, SweepRow,
    SweepVariable,
};

use crate::error::{invalid, CliResult};
use crate::output::OutputDir;

#[derive(Debug, Clone, clap::Args)]
pub struct SweepArgs {
    /// Swept quantity: mu, sigma, w_max or width.
    #[arg(long)]
    pub variable: Option<String>,
    /// Values of the swept quantity, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Depths as `a-b` or a comma-separated list.
    #[arg(long, default_value = "1-40")]
    pub depths: String,
    #[arg(long, default_value_t = 1000)]
    pub width: usize,
    #[arg(long, default_value_t = 0.1)]
    pub w_max: f64,
    #[arg(long, default_value_t = 480.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 40.0)]
    pub sigma: f64,
    /// Run the four preset panels instead of a custom sweep.
    #[arg(long, value_parser = ["fig2"])]
    pub preset: Option<String>,
    #[arg(long, short = 'o')]
    pub output_dir: PathBuf,
}

pub fn parse_depths(s: &str) -> CliResult<Vec<usize>> {
    let bad = || invalid(format!("--depths: expected `a-b` or a list, got {s:?}"));
    let depths: Vec<usize> = match s.split_once('-') {
        Some((a, b)) => {
            let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            (a..=b).collect()
        }
        None => s
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| bad()))
            .collect::<CliResult<_>>()?,
    };
    if depths.is_empty() {
        return Err(invalid(format!("--depths {s:?} is an empty range")));
    }
    if depths.contains(&0) {
        return Err(invalid("--depths must be at least 1"));
    }
    Ok(depths)
}

/// Per-panel shape summary: monotonicity in the swept value and the depth
/// peak of every depth curve.
fn describe(sweep: &Sweep, rows: &[SweepRow]) -> Value {
    let increasing_at: Vec<usize> = sweep
        .depths
        .iter()
        .copied()
        .filter(|&k| column(rows, k).windows(2).all(|w| w[1].1 > w[0].1))
        .collect();
    let peaks: Vec<Value> = sweep
        .values
        .iter()
        .map(|&v| json!({ "value": v, "peak_depth": interior_peak(&depth_curve(rows, v)) }))
        .collect();
    json!({
        "name": sweep.name,
        "variable": sweep.variable.name(),
        "rows": rows.len(),
        "strictly_increasing_depths": increasing_at.len(),
        "depths": sweep.depths.len(),
        "depth_peaks": peaks,
    })
}

fn emit(sweeps: &[Sweep], out: &mut OutputDir) -> CliResult<Vec<Value>> {
    let mut summaries = Vec::new();
    for s in sweeps {
        let rows = s.run()?;
        let file = format!("{}.csv", s.name);
        out.write_with(&file, &format!("active-node bound vs depth, swept over {}", s.variable.name()), |w| {
            write_sweep_csv(&rows, w)
        })?;
        let d = describe(s, &rows);
        println!("{file}: {} rows", rows.len());
        for p in d["depth_peaks"].as_array().into_iter().flatten() {
            println!("  {} = {}: depth peak {}", s.variable.name(), p["value"], p["peak_depth"]);
        }
        summaries.push(d);
    }
    Ok(summaries)
}

pub fn run(args: &SweepArgs) -> CliResult<()> {
    let sweeps = if args.preset.is_some() {
        fig2_presets()
    } else {
        let variable: SweepVariable = args
            .variable
            .as_deref()
            .ok_or_else(|| invalid("--variable is required without --preset"))?
            .parse()?;
        if args.values.is_empty() {
            return Err(invalid("--values is an empty range"));
        }
        vec![Sweep {
            name: format!("sweep_{}", variable.name()),
            variable,
            values: args.values.clone(),
            depths: parse_depths(&args.depths)?,
            base: Geometry {
                width: args.width,
                w_max: args.w_max,
                mu: args.mu,
                sigma: args.sigma,
            },
        }]
    };
    let mut out = OutputDir::create(&args.output_dir)?;
    let summaries = emit(&sweeps, &mut out)?;
    out.finish("sweep", &serde_json::to_value(&sweeps)?, &json!(summaries))?;
    Ok(())
}

pub fn reproduce_fig2(output_dir: &std::path::Path) -> CliResult<()> {
    let sweeps = fig2_presets();
    let mut out = OutputDir::create(output_dir)?;
    let summaries = emit(&sweeps, &mut out)?;
    out.finish("reproduce-fig2", &serde_json::to_value(&sweeps)?, &json!(summaries))?;
    Ok(())
}
