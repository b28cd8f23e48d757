//! Activation-region statistics over datasets: active-node counts, region
//! membership probabilities, empirical tangent sensitivity, neuron margins
//! and the region-constancy check.

use std::collections::HashMap;
use std::io::Write;

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::data::Inputs;
use crate::linalg::{gemm, Matrix, Operand};
use crate::network::{forward, forward_batch, ActivationPattern, Params};
use crate::sensitivity::{tangent_sample_sensitivity, SensitivityEngine};
use crate::testing::rng;
use crate::{Error, Result};

const CHUNK: usize = 256;

/// `ln sigmoid(t)` without overflow or underflow for large `|t|`.
pub fn log_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Hidden preactivations of rows `start..end`, one layer-major row per input.
fn hidden_block(params: &Params, inputs: Inputs<'_>, start: usize, end: usize) -> Result<Matrix> {
    let trace = forward_batch(params, &inputs.rows_matrix(start, end))?;
    let n = params.spec().hidden_neurons();
    let mut out = Matrix::zeros(end - start, n);
    for r in 0..end - start {
        let row = out.row_mut(r);
        let mut pos = 0;
        for h in &trace.preactivations {
            let src = h.row(r);
            row[pos..pos + src.len()].copy_from_slice(src);
            pos += src.len();
        }
    }
    Ok(out)
}

fn check_inputs(params: &Params, inputs: &Inputs<'_>) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = params.spec().input_dim();
    if inputs.dim() != d {
        return Err(Error::shape(format!("inputs have dimension {}, network expects {d}", inputs.dim())));
    }
    Ok(())
}

/// All hidden preactivations of a dataset, `samples x N`.
pub fn hidden_preactivations(params: &Params, inputs: Inputs<'_>) -> Result<Matrix> {
    check_inputs(params, &inputs)?;
    let n = inputs.len();
    let width = params.spec().hidden_neurons();
    let mut data = Vec::with_capacity(n * width);
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        data.extend_from_slice(hidden_block(params, inputs, start, end)?.as_slice());
    }
    Ok(Matrix::from_vec(n, width, data).unwrap())
}

fn pattern_of_row(row: &[f64], layer_sizes: &[usize]) -> ActivationPattern {
    let signs = row.iter().map(|&h| if h > 0.0 { 1 } else { -1 }).collect();
    ActivationPattern::from_signs(signs, layer_sizes.to_vec()).unwrap()
}

/// Activation pattern of every sample.
pub fn dataset_patterns(params: &Params, inputs: Inputs<'_>) -> Result<Vec<ActivationPattern>> {
    let h = hidden_preactivations(params, inputs)?;
    let sizes = params.spec().hidden_sizes();
    Ok((0..h.rows()).map(|r| pattern_of_row(h.row(r), sizes)).collect())
}

/// Equal-width histogram.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub start: f64,
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Bins of width `bin_width` starting at `start`, enough to cover `values`.
    pub fn with_grid(values: &[f64], start: f64, bin_width: f64) -> Self {
        let max = values.iter().copied().fold(start, f64::max);
        let bins = (((max - start) / bin_width).floor() as usize + 1).max(1);
        let mut counts = vec![0; bins];
        for &v in values {
            let b = (((v - start) / bin_width).floor().max(0.0) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Self {
            start,
            bin_width,
            counts,
        }
    }

    /// Freedman-Diaconis width unless `bin_width` is given.
    pub fn build(values: &[f64], bin_width: Option<f64>) -> Self {
        let width = bin_width.unwrap_or_else(|| freedman_diaconis_width(values));
        let start = values.iter().copied().fold(f64::INFINITY, f64::min);
        Self::with_grid(values, if start.is_finite() { start } else { 0.0 }, width)
    }

    pub fn edges(&self, bin: usize) -> (f64, f64) {
        let lo = self.start + bin as f64 * self.bin_width;
        (lo, lo + self.bin_width)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_start,bin_end,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            let (lo, hi) = self.edges(i);
            writeln!(w, "{lo},{hi},{c}")?;
        }
        Ok(())
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `2 IQR / n^(1/3)`, falling back to 1 for degenerate samples.
pub fn freedman_diaconis_width(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 1.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let w = 2.0 * iqr / (values.len() as f64).cbrt();
    if w > 0.0 {
        w
    } else {
        1.0
    }
}

/// Active hidden-node counts `T(x)` and per-layer counts `n_i(x)` over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveNodeStats {
    counts: Vec<usize>,
    per_layer_counts: Vec<Vec<usize>>,
    hidden_sizes: Vec<usize>,
    mu: f64,
    sigma: f64,
}

impl ActiveNodeStats {
    pub fn from_patterns(patterns: &[ActivationPattern]) -> Result<Self> {
        let first = patterns.first().ok_or(Error::EmptyDataset)?;
        let hidden_sizes = first.layer_sizes().to_vec();
        let per_layer_counts: Vec<Vec<usize>> = patterns.iter().map(|p| p.layer_counts()).collect();
        let counts: Vec<usize> = per_layer_counts.iter().map(|c| c.iter().sum()).collect();
        let n = counts.len() as f64;
        let mu = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
        let var = counts.iter().map(|&c| (c as f64 - mu).powi(2)).sum::<f64>() / n;
        Ok(Self {
            counts,
            per_layer_counts,
            hidden_sizes,
            mu,
            sigma: var.sqrt(),
        })
    }

    /// `T(x)` per sample.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// `n_i(x)` per sample.
    pub fn per_layer_counts(&self) -> &[Vec<usize>] {
        &self.per_layer_counts
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.hidden_sizes
    }

    pub fn total_neurons(&self) -> usize {
        self.hidden_sizes.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Sample mean of `T`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Population standard deviation of `T`.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn layer_mean(&self, layer: usize) -> f64 {
        self.per_layer_counts.iter().map(|c| c[layer] as f64).sum::<f64>() / self.len() as f64
    }

    fn totals(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    fn layer_values(&self, layer: usize) -> Vec<f64> {
        self.per_layer_counts.iter().map(|c| c[layer] as f64).collect()
    }

    /// Histogram of `T(x)`. The default width is Freedman-Diaconis rounded up
    /// to a whole number of neurons.
    pub fn histogram(&self, bin_width: Option<f64>) -> Histogram {
        let v = self.totals();
        Histogram::build(&v, Some(bin_width.unwrap_or_else(|| integer_width(&v))))
    }

    /// Histogram of `n_i(x)` for hidden layer `layer` (0-based).
    pub fn layer_histogram(&self, layer: usize, bin_width: Option<f64>) -> Histogram {
        let v = self.layer_values(layer);
        Histogram::build(&v, Some(bin_width.unwrap_or_else(|| integer_width(&v))))
    }

    /// Sample mean of `(T/k)^k` for a network of depth `k`.
    pub fn mean_normalized_power(&self, k: usize) -> f64 {
        self.counts
            .iter()
            .map(|&t| (t as f64 / k as f64).powi(k as i32))
            .sum::<f64>()
            / self.len() as f64
    }
}

fn integer_width(values: &[f64]) -> f64 {
    freedman_diaconis_width(values).ceil().max(1.0)
}

pub fn active_node_stats(params: &Params, inputs: Inputs<'_>) -> Result<ActiveNodeStats> {
    ActiveNodeStats::from_patterns(&dataset_patterns(params, inputs)?)
}

/// Train and test histograms on one grid. Columns: `scope,bin_start,bin_end,train,test`,
/// where scope is `total` or `layer<i>` (1-based).
pub fn write_overlay_csv<W: Write>(
    train: &ActiveNodeStats,
    test: &ActiveNodeStats,
    bin_width: Option<f64>,
    mut w: W,
) -> Result<()> {
    if train.hidden_sizes != test.hidden_sizes {
        return Err(Error::shape("train and test statistics come from different networks"));
    }
    writeln!(w, "scope,bin_start,bin_end,train,test")?;
    let mut scopes = vec![("total".to_string(), train.totals(), test.totals())];
    for i in 0..train.hidden_sizes.len() {
        scopes.push((format!("layer{}", i + 1), train.layer_values(i), test.layer_values(i)));
    }
    for (name, a, b) in scopes {
        let all: Vec<f64> = a.iter().chain(&b).copied().collect();
        let width = bin_width.unwrap_or_else(|| integer_width(&all));
        let start = all.iter().copied().fold(f64::INFINITY, f64::min);
        let max = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ha = Histogram::with_grid(&a, start, width);
        let hb = Histogram::with_grid(&b, start, width);
        let bins = (((max - start) / width).floor() as usize + 1).max(1);
        for i in 0..bins {
            let (lo, hi) = ha.edges(i);
            let ca = ha.counts.get(i).copied().unwrap_or(0);
            let cb = hb.counts.get(i).copied().unwrap_or(0);
            writeln!(w, "{name},{lo},{hi},{ca},{cb}")?;
        }
    }
    Ok(())
}

/// Log-probability that an input falls in the region of `pattern`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionProbability {
    pub pattern: ActivationPattern,
    pub log_prob: f64,
}

/// `sum_{a_l = +1} ln sigmoid(h_l) + sum_{a_l = -1} ln sigmoid(-h_l)` at `x`.
pub fn pattern_log_probability(
    params: &Params,
    x: &[f64],
    pattern: &ActivationPattern,
) -> Result<RegionProbability> {
    if pattern.layer_sizes() != params.spec().hidden_sizes() {
        return Err(Error::shape("pattern does not match the hidden layer sizes"));
    }
    let trace = forward(params, x)?;
    let log_prob = trace
        .flat_preactivations()
        .zip(pattern.signs())
        .map(|(h, &s)| log_sigmoid(if s > 0 { h } else { -h }))
        .sum();
    Ok(RegionProbability {
        pattern: pattern.clone(),
        log_prob,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionWeighting {
    /// Dataset-averaged membership probabilities rescaled to sum to one over
    /// the observed patterns.
    #[default]
    Normalized,
    /// Dataset-averaged membership probabilities as they are.
    Unnormalized,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalSensitivity {
    pub value: f64,
    pub samples: usize,
    /// Distinct patterns realized by the dataset, in order of first appearance.
    pub patterns: usize,
    /// Natural log of the (unnormalized) averaged membership probability of each pattern.
    pub log_probs: Vec<f64>,
    /// Frobenius-squared sensitivity of each pattern's region.
    pub region_sensitivity: Vec<f64>,
}

/// Probability-weighted mean of the Frobenius-squared region sensitivity
/// over the distinct activation patterns realized by `inputs`.
pub fn empirical_tangent_sensitivity(params: &Params, inputs: Inputs<'_>) -> Result<f64> {
    Ok(empirical_tangent_sensitivity_with(params, inputs, RegionWeighting::Normalized)?.value)
}

pub fn empirical_tangent_sensitivity_with(
    params: &Params,
    inputs: Inputs<'_>,
    weighting: RegionWeighting,
) -> Result<EmpiricalSensitivity> {
    let h = hidden_preactivations(params, inputs)?;
    let n = h.rows();
    let width = h.cols();
    let sizes = params.spec().hidden_sizes();

    let mut index: HashMap<ActivationPattern, usize> = HashMap::new();
    let mut patterns = Vec::new();
    for r in 0..n {
        let p = pattern_of_row(h.row(r), sizes);
        if !index.contains_key(&p) {
            index.insert(p.clone(), patterns.len());
            patterns.push(p);
        }
    }
    let np = patterns.len();

    // ln p(x, A) = sum_l ln sigmoid(-h_l) + sum_{l active in A} h_l, so the
    // pattern-dependent part is a product with the 0/1 indicator matrix.
    let mut indicator = Matrix::zeros(width, np);
    for (j, p) in patterns.iter().enumerate() {
        for (l, &s) in p.signs().iter().enumerate() {
            if s > 0 {
                indicator.set(l, j, 1.0);
            }
        }
    }
    let mut run_max = vec![f64::NEG_INFINITY; np];
    let mut run_sum = vec![0.0; np];
    let mut block = Vec::new();
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let rows = end - start;
        let hs = &h.as_slice()[start * width..end * width];
        block.clear();
        for r in 0..rows {
            let base: f64 = hs[r * width..(r + 1) * width].iter().map(|&v| log_sigmoid(-v)).sum();
            block.extend(std::iter::repeat_n(base, np));
        }
        gemm(
            rows,
            width,
            np,
            1.0,
            Operand::plain(hs),
            Operand::plain(indicator.as_slice()),
            1.0,
            &mut block,
        );
        for j in 0..np {
            let m = (0..rows).map(|r| block[r * np + j]).fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                continue;
            }
            let s: f64 = (0..rows).map(|r| (block[r * np + j] - m).exp()).sum();
            if m > run_max[j] {
                run_sum[j] = run_sum[j] * (run_max[j] - m).exp() + s;
                run_max[j] = m;
            } else {
                run_sum[j] += s * (m - run_max[j]).exp();
            }
        }
    }
    let ln_n = (n as f64).ln();
    let log_probs: Vec<f64> = run_max
        .iter()
        .zip(&run_sum)
        .map(|(m, s)| m + s.ln() - ln_n)
        .collect();
    let shift = match weighting {
        RegionWeighting::Normalized => log_sum_exp(&log_probs),
        RegionWeighting::Unnormalized => 0.0,
    };

    let engine = SensitivityEngine::new(params);
    let region_sensitivity: Vec<f64> = patterns.iter().map(|p| engine.frobenius_sq(p)).collect();
    let value = log_probs
        .iter()
        .zip(&region_sensitivity)
        .map(|(lp, s)| (lp - shift).exp() * s)
        .sum();
    Ok(EmpiricalSensitivity {
        value,
        samples: n,
        patterns: np,
        log_probs,
        region_sensitivity,
    })
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstancyReport {
    pub trials: usize,
    /// Perturbations that kept the activation pattern of `x`.
    pub in_region: usize,
    /// In-region perturbations whose sensitivity matrix differed by more than the tolerance.
    pub violations: usize,
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub fraction_in_region: f64,
    /// False when no perturbation stayed in the region.
    pub conclusive: bool,
}

pub const CONSTANCY_TOLERANCE: f64 = 1e-12;

/// Perturbs `x` uniformly within a ball of `radius` and compares the
/// sensitivity matrix of every in-region perturbation with the one at `x`.
pub fn region_constancy_check(
    params: &Params,
    x: &[f64],
    trials: usize,
    radius: f64,
    seed: u64,
) -> Result<ConstancyReport> {
    if !(radius > 0.0) {
        return Err(Error::domain(format!("radius must be positive, got {radius}")));
    }
    let reference = tangent_sample_sensitivity(params, x)?;
    let pattern = forward(params, x)?.pattern;
    let mut r = rng(seed);
    let d = x.len();
    let mut in_region = 0;
    let mut violations = 0;
    let mut max_abs_diff: f64 = 0.0;
    let mut xp = vec![0.0; d];
    for _ in 0..trials {
        let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let u: f64 = rand::Rng::random(&mut r);
        let scale = radius * u.powf(1.0 / d as f64) / norm;
        for ((o, &xi), di) in xp.iter_mut().zip(x).zip(&dir) {
            *o = xi + scale * di;
        }
        if forward(params, &xp)?.pattern != pattern {
            continue;
        }
        in_region += 1;
        let diff = tangent_sample_sensitivity(params, &xp)?.max_abs_diff(&reference);
        max_abs_diff = max_abs_diff.max(diff);
        if diff > CONSTANCY_TOLERANCE {
            violations += 1;
        }
    }
    Ok(ConstancyReport {
        trials,
        in_region,
        violations,
        max_abs_diff,
        tolerance: CONSTANCY_TOLERANCE,
        fraction_in_region: if trials == 0 { 0.0 } else { in_region as f64 / trials as f64 },
        conclusive: in_region > 0,
    })
}

/// Smallest distance of a hidden neuron's preactivation from its switching point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeuronMargin {
    /// 1-based hidden layer.
    pub layer: usize,
    pub neuron: usize,
    /// `min_x |h_l(x)|`.
    pub rho: f64,
    /// `min_x |sigmoid(h_l(x)) - 1/2|`.
    pub rho_hat: f64,
    pub argmin_rho: usize,
    pub argmin_rho_hat: usize,
}

pub fn neuron_margins(params: &Params, inputs: Inputs<'_>) -> Result<Vec<NeuronMargin>> {
    let h = hidden_preactivations(params, inputs)?;
    let mut margins = Vec::with_capacity(h.cols());
    let mut layer = 1;
    let mut neuron = 0;
    let sizes = params.spec().hidden_sizes();
    for l in 0..h.cols() {
        let mut m = NeuronMargin {
            layer,
            neuron,
            rho: f64::INFINITY,
            rho_hat: f64::INFINITY,
            argmin_rho: 0,
            argmin_rho_hat: 0,
        };
        for r in 0..h.rows() {
            let v = h.get(r, l);
            if v.abs() < m.rho {
                m.rho = v.abs();
                m.argmin_rho = r;
            }
            let s = (sigmoid(v) - 0.5).abs();
            if s < m.rho_hat {
                m.rho_hat = s;
                m.argmin_rho_hat = r;
            }
        }
        margins.push(m);
        neuron += 1;
        if neuron == sizes[layer - 1] {
            neuron = 0;
            layer += 1;
        }
    }
    Ok(margins)
}

/// Columns: `layer,neuron,rho,rho_hat`.
pub fn write_margins_csv<W: Write>(margins: &[NeuronMargin], mut w: W) -> Result<()> {
    writeln!(w, "layer,neuron,rho,rho_hat")?;
    for m in margins {
        writeln!(w, "{},{},{:e},{:e}", m.layer, m.neuron, m.rho, m.rho_hat)?;
    }
    Ok(())
}
