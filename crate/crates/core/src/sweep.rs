//! Active-node bound on synthetic geometries, swept over one variable.
//!
//! A synthetic network has `k` weight layers of width `width`, input
//! dimension `width`, `k * width^2` weights and every layer maximum equal to
//! `w_max`. Each sweep evaluates the bound for every listed value of the
//! swept variable at every listed depth.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::{eq2_factors, Eq2Inputs, Eq2Variant};
use crate::{Error, Result};

pub const SWEEP_HEADER: &str = "value,k,eq2,log10_eq2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Mu,
    Sigma,
    WMax,
    /// Layer width; `mu` and `sigma` scale with it as fractions of the width.
    Width,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mu => "mu",
            Self::Sigma => "sigma",
            Self::WMax => "w_max",
            Self::Width => "width",
        }
    }
}

impl std::str::FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu" => Ok(Self::Mu),
            "sigma" => Ok(Self::Sigma),
            "w_max" | "wmax" => Ok(Self::WMax),
            "width" => Ok(Self::Width),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep variable {other:?} (expected mu, sigma, w_max or width)"
            ))),
        }
    }
}

/// Fixed part of a synthetic geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub width: usize,
    pub w_max: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            width: 1000,
            w_max: 0.1,
            mu: 480.0,
            sigma: 40.0,
        }
    }
}

impl Geometry {
    pub fn eq2_inputs(&self, k: usize) -> Eq2Inputs {
        let n = self.width as f64;
        Eq2Inputs {
            n_theta: k as f64 * n * n,
            d_in: n,
            k,
            mu: self.mu,
            sigma: self.sigma,
            layer_w_max: vec![self.w_max; k],
        }
    }

    fn with(&self, variable: SweepVariable, value: f64) -> Result<Self> {
        let mut g = *self;
        match variable {
            SweepVariable::Mu => g.mu = value,
            SweepVariable::Sigma => g.sigma = value,
            SweepVariable::WMax => g.w_max = value,
            SweepVariable::Width => {
                if !(value >= 1.0) || value.fract() != 0.0 {
                    return Err(Error::InvalidConfig(format!("width must be a positive integer, got {value}")));
                }
                let scale = value / self.width as f64;
                g.width = value as usize;
                g.mu = self.mu * scale;
                g.sigma = self.sigma * scale;
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub name: String,
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub depths: Vec<usize>,
    pub base: Geometry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub k: usize,
    pub ln_eq2: f64,
}

impl SweepRow {
    pub fn eq2(&self) -> f64 {
        self.ln_eq2.exp()
    }

    pub fn log10_eq2(&self) -> f64 {
        self.ln_eq2 / std::f64::consts::LN_10
    }
}

impl Sweep {
    pub fn run(&self) -> Result<Vec<SweepRow>> {
        if self.values.is_empty() || self.depths.is_empty() {
            return Err(Error::InvalidConfig(format!("sweep {:?} has an empty range", self.name)));
        }
        if self.depths.contains(&0) {
            return Err(Error::InvalidConfig("depth must be at least 1".into()));
        }
        let mut rows = Vec::with_capacity(self.values.len() * self.depths.len());
        for &value in &self.values {
            let g = self.base.with(self.variable, value)?;
            for &k in &self.depths {
                let f = eq2_factors(&g.eq2_inputs(k), Eq2Variant::Stated)?;
                rows.push(SweepRow { value, k, ln_eq2: f.ln_value });
            }
        }
        Ok(rows)
    }
}

/// `value,k,eq2,log10_eq2`; `eq2` overflows to `inf` where the log column
/// stays finite.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{:e},{}", r.value, r.k, r.eq2(), r.log10_eq2())?;
    }
    Ok(())
}

/// Values at depth `k`, in sweep order.
pub fn column(rows: &[SweepRow], k: usize) -> Vec<(f64, f64)> {
    rows.iter().filter(|r| r.k == k).map(|r| (r.value, r.ln_eq2)).collect()
}

/// Depth curve of one swept value.
pub fn depth_curve(rows: &[SweepRow], value: f64) -> Vec<(usize, f64)> {
    rows.iter().filter(|r| r.value == value).map(|r| (r.k, r.ln_eq2)).collect()
}

/// Depth at which a curve peaks, if strictly inside the range, with the
/// curve strictly rising before and strictly falling after it.
pub fn interior_peak(curve: &[(usize, f64)]) -> Option<usize> {
    let (imax, _) = curve
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))?;
    if imax == 0 || imax + 1 == curve.len() {
        return None;
    }
    let rising = curve[..=imax].windows(2).all(|w| w[1].1 > w[0].1);
    let falling = curve[imax..].windows(2).all(|w| w[1].1 < w[0].1);
    (rising && falling).then_some(curve[imax].0)
}

pub const FIG2_DEPTHS: std::ops::RangeInclusive<usize> = 1..=40;

/// The four panels: mean, spread, layer maximum and width, each across depth
/// `1..=40` around `width 1000, w_max 0.1, mu 480, sigma 40`.
pub fn fig2_presets() -> Vec<Sweep> {
    let depths: Vec<usize> = FIG2_DEPTHS.collect();
    let base = Geometry::default();
    let mk = |name: &str, variable, values: &[f64]| Sweep {
        name: name.to_string(),
        variable,
        values: values.to_vec(),
        depths: depths.clone(),
        base,
    };
    vec![
        mk("fig2_mu", SweepVariable::Mu, &[300.0, 400.0, 480.0, 600.0]),
        mk("fig2_sigma", SweepVariable::Sigma, &[10.0, 20.0, 40.0, 80.0]),
        mk("fig2_w_max", SweepVariable::WMax, &[0.05, 0.1, 0.2]),
        mk("fig2_width", SweepVariable::Width, &[250.0, 500.0, 1000.0, 2000.0]),
    ]
}
