//! Tangent sample sensitivity: the `N_w x d_in` matrix of mixed derivatives
//! `d^2 f / (dtheta dx)` of a ReLU network, summed over output nodes.
//!
//! Inside an activation region the gradient with respect to a weight
//! `W_m[u][v]` is `a_{m-1,u}(x) * delta_{m,v}`, where `delta` is the gated
//! backward product from node `v` to the outputs and does not depend on `x`.
//! Differentiating in `x` gives rows `delta_{m,v} * J^(m-1)_{u,.}`, which is
//! what the layerwise algorithm assembles. Two independent oracles (explicit
//! path enumeration and central differences) check it.
//!
//! Rows are ordered by layer, then source, then target. Bias rows are
//! identically zero inside a region and are left out unless requested.

use serde::Serialize;
use std::io::{Read, Write};

use crate::data::Inputs;
use crate::linalg::{gemm, Matrix, Operand};
use crate::network::{affine, forward, jacobians, ActivationPattern, Params};
use crate::{Error, Result};

/// Default cap on the number of paths the enumeration oracle will visit.
pub const DEFAULT_PATH_CAP: u128 = 10_000_000;

const SENS_MAGIC: &[u8; 8] = b"TANGSEN\0";
const SENS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowLabel {
    Weight {
        layer: usize,
        source: usize,
        target: usize,
    },
    Bias {
        layer: usize,
        target: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMatrix {
    layer_sizes: Vec<usize>,
    include_bias: bool,
    entries: Matrix,
    on_boundary: bool,
}

impl SensitivityMatrix {
    fn zeros(layer_sizes: &[usize], include_bias: bool) -> Self {
        let rows = row_count(layer_sizes, include_bias);
        Self {
            layer_sizes: layer_sizes.to_vec(),
            include_bias,
            entries: Matrix::zeros(rows, layer_sizes[0]),
            on_boundary: false,
        }
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn rows(&self) -> usize {
        self.entries.rows()
    }

    pub fn cols(&self) -> usize {
        self.entries.cols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries.get(row, col)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn includes_bias_rows(&self) -> bool {
        self.include_bias
    }

    /// True when some hidden preactivation at the evaluation point was exactly
    /// zero, so the point sits on a region boundary.
    pub fn on_boundary(&self) -> bool {
        self.on_boundary
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.layer_sizes
            .windows(2)
            .take(layer - 1)
            .map(|w| w[0] * w[1] + if self.include_bias { w[1] } else { 0 })
            .sum()
    }

    /// Row of weight `W_layer[source][target]` (`layer` is 1-based).
    pub fn weight_row(&self, layer: usize, source: usize, target: usize) -> usize {
        self.layer_offset(layer) + source * self.layer_sizes[layer] + target
    }

    pub fn row_label(&self, row: usize) -> RowLabel {
        let mut start = 0;
        for (i, w) in self.layer_sizes.windows(2).enumerate() {
            let nw = w[0] * w[1];
            if row < start + nw {
                let r = row - start;
                return RowLabel::Weight {
                    layer: i + 1,
                    source: r / w[1],
                    target: r % w[1],
                };
            }
            start += nw;
            if self.include_bias {
                if row < start + w[1] {
                    return RowLabel::Bias {
                        layer: i + 1,
                        target: row - start,
                    };
                }
                start += w[1];
            }
        }
        panic!("row {row} out of range");
    }

    pub fn frobenius_sq(&self) -> f64 {
        frobenius_sq(self)
    }

    pub fn max_abs_diff(&self, other: &SensitivityMatrix) -> f64 {
        assert_eq!(self.entries.rows(), other.entries.rows());
        assert_eq!(self.entries.cols(), other.entries.cols());
        self.entries
            .as_slice()
            .iter()
            .zip(other.entries.as_slice())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Largest entrywise `|a - b| / max(|a|, |b|, floor)`.
    pub fn max_rel_diff(&self, other: &SensitivityMatrix, floor: f64) -> f64 {
        assert_eq!(self.entries.rows(), other.entries.rows());
        assert_eq!(self.entries.cols(), other.entries.cols());
        self.entries
            .as_slice()
            .iter()
            .zip(other.entries.as_slice())
            .fold(0.0, |m, (a, b)| {
                let d = (a - b).abs();
                if d == 0.0 {
                    m
                } else {
                    m.max(d / a.abs().max(b.abs()).max(floor))
                }
            })
    }

    /// CSV with header `kind,layer,source,target,x0,..`; bias rows have kind `b`
    /// and an empty source.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "kind,layer,source,target")?;
        for i in 0..self.cols() {
            write!(w, ",x{i}")?;
        }
        writeln!(w)?;
        for r in 0..self.rows() {
            match self.row_label(r) {
                RowLabel::Weight {
                    layer,
                    source,
                    target,
                } => write!(w, "w,{layer},{source},{target}")?,
                RowLabel::Bias { layer, target } => write!(w, "b,{layer},,{target}")?,
            }
            for v in self.entries.row(r) {
                write!(w, ",{v:e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Binary layout: magic `TANGSEN\0`, version u32, flags u8 (bit 0 bias rows,
    /// bit 1 boundary), layer count u32, sizes u64, rows u64, cols u64, then
    /// row-major f64 entries; little-endian throughout.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SENS_MAGIC)?;
        w.write_all(&SENS_VERSION.to_le_bytes())?;
        let flags = u8::from(self.include_bias) | (u8::from(self.on_boundary) << 1);
        w.write_all(&[flags])?;
        w.write_all(&(self.layer_sizes.len() as u32).to_le_bytes())?;
        for &n in &self.layer_sizes {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        w.write_all(&(self.rows() as u64).to_le_bytes())?;
        w.write_all(&(self.cols() as u64).to_le_bytes())?;
        for v in self.entries.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let bad = |offset: u64, msg: &str| Error::Format {
            path: "<stream>".into(),
            offset,
            message: msg.into(),
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SENS_MAGIC {
            return Err(bad(0, "bad magic; not a sensitivity matrix"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != SENS_VERSION {
            return Err(bad(8, "unsupported version"));
        }
        let mut flags = [0u8; 1];
        r.read_exact(&mut flags)?;
        r.read_exact(&mut b4)?;
        let n_sizes = u32::from_le_bytes(b4) as usize;
        if !(2..=4096).contains(&n_sizes) {
            return Err(bad(13, "implausible layer count"));
        }
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            r.read_exact(&mut b8)?;
            sizes.push(u64::from_le_bytes(b8) as usize);
        }
        let include_bias = flags[0] & 1 != 0;
        r.read_exact(&mut b8)?;
        let rows = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let cols = u64::from_le_bytes(b8) as usize;
        if sizes.contains(&0) || rows != row_count(&sizes, include_bias) || cols != sizes[0] {
            return Err(bad(17, "dimensions do not match layer sizes"));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            r.read_exact(&mut b8)?;
            data.push(f64::from_le_bytes(b8));
        }
        Ok(Self {
            layer_sizes: sizes,
            include_bias,
            entries: Matrix::from_vec(rows, cols, data).unwrap(),
            on_boundary: flags[0] & 2 != 0,
        })
    }
}

fn row_count(layer_sizes: &[usize], include_bias: bool) -> usize {
    layer_sizes
        .windows(2)
        .map(|w| w[0] * w[1] + if include_bias { w[1] } else { 0 })
        .sum()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SensitivityOptions {
    /// Emit the (zero) bias rows so the matrix has `N_theta` rows.
    pub include_bias_rows: bool,
}

/// Gated backward products `delta_1..delta_k` seeded with `seed` at the output.
pub(crate) fn backward_deltas(params: &Params, pattern: &ActivationPattern, seed: &[f64]) -> Vec<Vec<f64>> {
    let k = params.depth();
    let mut deltas = vec![Vec::new(); k];
    deltas[k - 1] = seed.to_vec();
    for m in (0..k - 1).rev() {
        let w = &params.weights()[m + 1];
        let next = &deltas[m + 1];
        let gates = pattern.layer(m);
        let d: Vec<f64> = (0..w.rows())
            .map(|v| {
                if gates[v] > 0 {
                    w.row(v).iter().zip(next).map(|(a, b)| a * b).sum()
                } else {
                    0.0
                }
            })
            .collect();
        deltas[m] = d;
    }
    deltas
}

fn assemble(
    params: &Params,
    jac: &[Matrix],
    deltas: &[Vec<f64>],
    opts: SensitivityOptions,
    on_boundary: bool,
) -> SensitivityMatrix {
    let include_bias = opts.include_bias_rows && params.spec().use_bias();
    let mut s = SensitivityMatrix::zeros(params.spec().layer_sizes(), include_bias);
    s.on_boundary = on_boundary;
    for (m, (j, delta)) in jac.iter().zip(deltas).enumerate() {
        let layer = m + 1;
        for u in 0..j.rows() {
            let ju = j.row(u);
            for (v, &dv) in delta.iter().enumerate() {
                if dv == 0.0 {
                    continue;
                }
                let row = s.weight_row(layer, u, v);
                for (e, &jv) in s.entries.row_mut(row).iter_mut().zip(ju) {
                    *e = dv * jv;
                }
            }
        }
    }
    s
}

/// Layerwise tangent sample sensitivity at `x`, summed over outputs, weight rows only.
pub fn tangent_sample_sensitivity(params: &Params, x: &[f64]) -> Result<SensitivityMatrix> {
    tangent_sample_sensitivity_with(params, x, SensitivityOptions::default())
}

pub fn tangent_sample_sensitivity_with(
    params: &Params,
    x: &[f64],
    opts: SensitivityOptions,
) -> Result<SensitivityMatrix> {
    let trace = forward(params, x)?;
    let jac = jacobians(params, &trace.pattern).gated;
    let ones = vec![1.0; params.spec().output_dim()];
    let deltas = backward_deltas(params, &trace.pattern, &ones);
    Ok(assemble(params, &jac, &deltas, opts, trace.on_boundary()))
}

/// One sensitivity matrix per output node; they sum to the default matrix.
pub fn per_output_sensitivity(params: &Params, x: &[f64]) -> Result<Vec<SensitivityMatrix>> {
    let trace = forward(params, x)?;
    let jac = jacobians(params, &trace.pattern).gated;
    let d_out = params.spec().output_dim();
    Ok((0..d_out)
        .map(|l| {
            let mut seed = vec![0.0; d_out];
            seed[l] = 1.0;
            let deltas = backward_deltas(params, &trace.pattern, &seed);
            assemble(params, &jac, &deltas, SensitivityOptions::default(), trace.on_boundary())
        })
        .collect())
}

pub fn path_enumeration_sensitivity(params: &Params, x: &[f64]) -> Result<SensitivityMatrix> {
    path_enumeration_sensitivity_capped(params, x, DEFAULT_PATH_CAP)
}

/// Sums, for every weight, the products of the other weights along each
/// active input-to-output path through it. Refuses networks with more than
/// `cap` paths.
pub fn path_enumeration_sensitivity_capped(
    params: &Params,
    x: &[f64],
    cap: u128,
) -> Result<SensitivityMatrix> {
    let spec = params.spec();
    let count = spec.path_count();
    if count > cap {
        return Err(Error::PathCap { count, cap });
    }
    let trace = forward(params, x)?;
    let sizes = spec.layer_sizes();
    let k = spec.depth();
    let mut s = SensitivityMatrix::zeros(sizes, false);
    s.on_boundary = trace.on_boundary();

    let mut idx = vec![0usize; k + 1];
    let mut w = vec![0.0; k];
    let mut prefix = vec![1.0; k + 1];
    let mut suffix = vec![1.0; k + 1];
    'paths: loop {
        let active = (1..k).all(|m| trace.preactivations[m - 1][idx[m]] > 0.0);
        if active {
            for m in 0..k {
                w[m] = params.weights()[m].get(idx[m], idx[m + 1]);
            }
            for m in 0..k {
                prefix[m + 1] = prefix[m] * w[m];
            }
            suffix[k] = 1.0;
            for m in (0..k).rev() {
                suffix[m] = suffix[m + 1] * w[m];
            }
            for m in 0..k {
                let others = prefix[m] * suffix[m + 1];
                let row = s.weight_row(m + 1, idx[m], idx[m + 1]);
                let e = s.entries.get(row, idx[0]);
                s.entries.set(row, idx[0], e + others);
            }
        }
        // Odometer over (input, hidden..., output) indices.
        let mut pos = k;
        loop {
            idx[pos] += 1;
            if idx[pos] < sizes[pos] {
                break;
            }
            idx[pos] = 0;
            if pos == 0 {
                break 'paths;
            }
            pos -= 1;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDifferenceSensitivity {
    pub matrix: SensitivityMatrix,
    /// Euclidean distance from `x` to the nearest region boundary.
    pub min_boundary_distance: f64,
    /// Set when the boundary is within the step `h`; the differences then
    /// straddle two regions and are not comparable with the analytic matrix.
    pub near_boundary: bool,
}

/// Gradient of `sum_l f_l(x)` with respect to the weights, flat in row order.
pub fn weight_gradient(params: &Params, x: &[f64]) -> Result<Vec<f64>> {
    let trace = forward(params, x)?;
    let ones = vec![1.0; params.spec().output_dim()];
    let deltas = backward_deltas(params, &trace.pattern, &ones);
    let mut grad = Vec::with_capacity(params.spec().weight_count());
    for (m, delta) in deltas.iter().enumerate() {
        let a = if m == 0 { &trace.input } else { &trace.activations[m - 1] };
        for &au in a {
            grad.extend(delta.iter().map(|&dv| au * dv));
        }
    }
    Ok(grad)
}

/// Central differences of the weight gradient in each input coordinate.
pub fn finite_difference_sensitivity(
    params: &Params,
    x: &[f64],
    h: f64,
) -> Result<FiniteDifferenceSensitivity> {
    if !(h > 0.0) {
        return Err(Error::domain(format!("finite-difference step must be positive, got {h}")));
    }
    let trace = forward(params, x)?;
    let pre_jac = jacobians(params, &trace.pattern).pre;
    let mut min_dist = f64::INFINITY;
    for (hl, j) in trace.preactivations.iter().zip(&pre_jac) {
        for (v, &pre) in hl.iter().enumerate() {
            let norm = j.row(v).iter().map(|g| g * g).sum::<f64>().sqrt();
            let dist = if norm == 0.0 {
                if pre == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                pre.abs() / norm
            };
            min_dist = min_dist.min(dist);
        }
    }

    let d_in = x.len();
    let mut s = SensitivityMatrix::zeros(params.spec().layer_sizes(), false);
    s.on_boundary = trace.on_boundary();
    let mut xp = x.to_vec();
    for i in 0..d_in {
        xp[i] = x[i] + h;
        let gp = weight_gradient(params, &xp)?;
        xp[i] = x[i] - h;
        let gm = weight_gradient(params, &xp)?;
        xp[i] = x[i];
        for (r, (a, b)) in gp.iter().zip(&gm).enumerate() {
            s.entries.set(r, i, (a - b) / (2.0 * h));
        }
    }
    Ok(FiniteDifferenceSensitivity {
        matrix: s,
        min_boundary_distance: min_dist,
        near_boundary: min_dist <= h,
    })
}

pub fn frobenius_sq(s: &SensitivityMatrix) -> f64 {
    s.entries.sum_sq()
}

/// Frobenius-squared sensitivity without materializing the matrix.
///
/// Row `(m, u, v)` is `delta_{m,v} J^(m-1)_{u,.}`, so the squared norm is
/// `sum_m |delta_m|^2 |J^(m-1)|_F^2`. The Jacobian norms come from Gram
/// matrices `J J^T` restricted to active neurons, seeded with `W_1^T W_1`
/// which is computed once per parameter state.
#[derive(Debug, Clone)]
pub struct SensitivityEngine<'a> {
    params: &'a Params,
    first_gram: Option<Matrix>,
}

impl<'a> SensitivityEngine<'a> {
    pub fn new(params: &'a Params) -> Self {
        let first_gram = (params.depth() >= 2).then(|| {
            let w = &params.weights()[0];
            let n = w.cols();
            let mut g = Matrix::zeros(n, n);
            gemm(
                n,
                w.rows(),
                n,
                1.0,
                Operand::transposed(w.as_slice()),
                Operand::plain(w.as_slice()),
                0.0,
                g.as_mut_slice(),
            );
            g
        });
        Self { params, first_gram }
    }

    pub fn params(&self) -> &Params {
        self.params
    }

    /// Squared Frobenius norm of the sensitivity matrix shared by every input
    /// realizing `pattern`.
    pub fn frobenius_sq(&self, pattern: &ActivationPattern) -> f64 {
        let params = self.params;
        let k = params.depth();
        let d_in = params.spec().input_dim() as f64;
        let ones = vec![1.0; params.spec().output_dim()];
        let deltas = backward_deltas(params, pattern, &ones);
        let norm_sq = |d: &Vec<f64>| d.iter().map(|v| v * v).sum::<f64>();
        let mut total = norm_sq(&deltas[0]) * d_in;
        let Some(first) = &self.first_gram else {
            return total;
        };
        let active_in = |i: usize| -> Vec<usize> {
            pattern
                .layer(i)
                .iter()
                .enumerate()
                .filter(|(_, &s)| s > 0)
                .map(|(j, _)| j)
                .collect()
        };
        let mut prev_active = active_in(0);
        let mut gram = Matrix::from_fn(prev_active.len(), prev_active.len(), |r, c| {
            first.get(prev_active[r], prev_active[c])
        });
        total += norm_sq(&deltas[1]) * trace(&gram);
        for m in 1..k - 1 {
            let active = active_in(m);
            let w = &params.weights()[m];
            let sub = Matrix::from_fn(prev_active.len(), active.len(), |r, c| {
                w.get(prev_active[r], active[c])
            });
            let t = gram.matmul(&sub);
            let mut next = Matrix::zeros(active.len(), active.len());
            gemm(
                active.len(),
                prev_active.len(),
                active.len(),
                1.0,
                Operand::transposed(sub.as_slice()),
                Operand::plain(t.as_slice()),
                0.0,
                next.as_mut_slice(),
            );
            total += norm_sq(&deltas[m + 1]) * trace(&next);
            gram = next;
            prev_active = active;
        }
        total
    }

    /// Pattern at `x` together with its Frobenius-squared sensitivity.
    pub fn frobenius_sq_at(&self, x: &[f64]) -> Result<(f64, ActivationPattern)> {
        let pattern = pattern_at(self.params, x)?;
        Ok((self.frobenius_sq(&pattern), pattern))
    }
}

fn trace(m: &Matrix) -> f64 {
    (0..m.rows()).map(|i| m.get(i, i)).sum()
}

/// Activation pattern at `x` without keeping the full trace.
pub(crate) fn pattern_at(params: &Params, x: &[f64]) -> Result<ActivationPattern> {
    params.check_input(x)?;
    let k = params.depth();
    let mut pre = Vec::with_capacity(k - 1);
    let mut current = x.to_vec();
    let mut h = Vec::new();
    for (w, b) in params.weights().iter().zip(params.biases()).take(k - 1) {
        affine(w, &current, b, &mut h);
        current = h.iter().map(|&v| v.max(0.0)).collect();
        pre.push(std::mem::take(&mut h));
    }
    Ok(ActivationPattern::from_preactivations(&pre))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrobeniusSummary {
    pub mean: f64,
    /// `Sens_max,F`, the largest per-sample value.
    pub max: f64,
    pub count: usize,
}

/// Mean and maximum of the per-sample Frobenius-squared sensitivity over `inputs`.
pub fn mean_frobenius_sq(params: &Params, inputs: Inputs<'_>) -> Result<FrobeniusSummary> {
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let engine = SensitivityEngine::new(params);
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    for x in inputs.iter_f64() {
        let (v, _) = engine.frobenius_sq_at(&x)?;
        sum += v;
        max = max.max(v);
    }
    Ok(FrobeniusSummary {
        mean: sum / inputs.len() as f64,
        max,
        count: inputs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Split};
    use crate::network::NetworkSpec;
    use crate::testing::{random_input, random_params, rng};
    use proptest::prelude::*;

    /// Two inputs, two hidden nodes, one output with
    /// W_1 = [[w11, w13], [w12, w14]] and W_2 = [[w21], [w22]].
    fn worked_221(w: [f64; 6]) -> Params {
        let spec = NetworkSpec::new(vec![2, 2, 1], false).unwrap();
        let w1 = Matrix::from_vec(2, 2, vec![w[0], w[2], w[1], w[3]]).unwrap();
        let w2 = Matrix::from_vec(2, 1, vec![w[4], w[5]]).unwrap();
        Params::from_parts(spec, vec![w1, w2], vec![vec![0.0; 2], vec![0.0]]).unwrap()
    }

    #[test]
    fn single_hidden_layer_closed_form() {
        let w = [0.3, 0.5, 0.7, 0.2, 1.1, -0.4];
        let p = worked_221(w);
        let x = [0.9, 0.4];
        for s in [
            tangent_sample_sensitivity(&p, &x).unwrap(),
            path_enumeration_sensitivity(&p, &x).unwrap(),
        ] {
            // d^2 f / (dx_1 dw21) = w11 and d^2 f / (dx_1 dw22) = w13.
            assert!((s.get(s.weight_row(2, 0, 0), 0) - w[0]).abs() < 1e-15);
            assert!((s.get(s.weight_row(2, 1, 0), 0) - w[2]).abs() < 1e-15);
            // d^2 f / (dx_1 dw11) = w21, zero in the x_2 column.
            assert!((s.get(s.weight_row(1, 0, 0), 0) - w[4]).abs() < 1e-15);
            assert_eq!(s.get(s.weight_row(1, 0, 0), 1), 0.0);
        }
    }

    #[test]
    fn two_hidden_layers_closed_form() {
        // Layer 2 weights: w21 (1->1), w22 (2->1), w23 (1->2), w24 (2->2).
        let spec = NetworkSpec::new(vec![2, 2, 2, 1], false).unwrap();
        let (w11, w12, w13, w14) = (0.3, 0.5, 0.7, 0.2);
        let (w21, w22, w23, w24) = (0.6, 0.4, 0.9, 0.8);
        let (w31, w32) = (1.2, 0.7);
        let w1 = Matrix::from_vec(2, 2, vec![w11, w13, w12, w14]).unwrap();
        let w2 = Matrix::from_vec(2, 2, vec![w21, w23, w22, w24]).unwrap();
        let w3 = Matrix::from_vec(2, 1, vec![w31, w32]).unwrap();
        let p = Params::from_parts(spec, vec![w1, w2, w3], vec![vec![0.0; 2], vec![0.0; 2], vec![0.0]])
            .unwrap();
        let x = [1.0, 0.5];
        let s = tangent_sample_sensitivity(&p, &x).unwrap();
        assert!(forward(&p, &x).unwrap().pattern.signs().iter().all(|&v| v == 1));
        let expected = w21 * w11 + w22 * w13;
        assert!((s.get(s.weight_row(3, 0, 0), 0) - expected).abs() < 1e-15);
        let oracle = path_enumeration_sensitivity(&p, &x).unwrap();
        assert!(s.max_abs_diff(&oracle) < 1e-15);
    }

    #[test]
    fn single_layer_network() {
        let spec = NetworkSpec::new(vec![2, 1], true).unwrap();
        let p = random_params(&spec, 4, 1.0);
        let s = tangent_sample_sensitivity(&p, &[0.3, -0.8]).unwrap();
        assert_eq!(s.rows(), 2);
        assert_eq!(s.get(0, 0), 1.0);
        assert_eq!(s.get(0, 1), 0.0);
        assert_eq!(s.get(1, 1), 1.0);
        assert_eq!(s.get(1, 0), 0.0);
        assert_eq!(frobenius_sq(&s), 2.0);
        assert_eq!(SensitivityEngine::new(&p).frobenius_sq_at(&[0.3, -0.8]).unwrap().0, 2.0);
    }

    #[test]
    fn no_active_paths_gives_zero() {
        let spec = NetworkSpec::new(vec![3, 4, 2], true).unwrap();
        let mut p = random_params(&spec, 2, 1.0);
        p.biases_mut()[0].fill(-100.0);
        let x = [0.1, 0.2, 0.3];
        assert_eq!(path_enumeration_sensitivity(&p, &x).unwrap().entries().max_abs(), 0.0);
        assert_eq!(frobenius_sq(&SensitivityMatrix::zeros(&[3, 4, 2], false)), 0.0);
    }

    #[test]
    fn path_cap_refusal() {
        let spec = NetworkSpec::new(vec![10, 10, 10, 10], false).unwrap();
        let p = random_params(&spec, 1, 1.0);
        let err = path_enumeration_sensitivity_capped(&p, &[0.5; 10], 9_999).unwrap_err();
        assert!(matches!(err, Error::PathCap { count: 10_000, cap: 9_999 }));
    }

    #[test]
    fn bias_rows_are_zero() {
        let spec = NetworkSpec::new(vec![3, 4, 2], true).unwrap();
        let p = random_params(&spec, 8, 1.0);
        let x = [0.3, -0.2, 0.9];
        let full = tangent_sample_sensitivity_with(&p, &x, SensitivityOptions { include_bias_rows: true })
            .unwrap();
        assert_eq!(full.rows(), spec.param_count());
        let plain = tangent_sample_sensitivity(&p, &x).unwrap();
        for r in 0..full.rows() {
            match full.row_label(r) {
                RowLabel::Bias { .. } => assert!(full.entries().row(r).iter().all(|&v| v == 0.0)),
                RowLabel::Weight { layer, source, target } => {
                    assert_eq!(full.entries().row(r), plain.entries().row(plain.weight_row(layer, source, target)));
                }
            }
        }
        assert_eq!(full.frobenius_sq(), plain.frobenius_sq());
    }

    #[test]
    fn boundary_flag() {
        let spec = NetworkSpec::new(vec![2, 2, 1], false).unwrap();
        let p = random_params(&spec, 3, 1.0);
        assert!(tangent_sample_sensitivity(&p, &[0.0, 0.0]).unwrap().on_boundary());
        let fd = finite_difference_sensitivity(&p, &[0.0, 0.0], 1e-4).unwrap();
        assert!(fd.near_boundary);
        assert!(finite_difference_sensitivity(&p, &[1.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn linear_network_finite_differences_exact() {
        let spec = NetworkSpec::new(vec![3, 4, 2], true).unwrap();
        let mut p = random_params(&spec, 6, 0.5);
        p.biases_mut()[0].fill(50.0);
        let x = [0.2, -0.1, 0.4];
        let fd = finite_difference_sensitivity(&p, &x, 1e-3).unwrap();
        assert!(!fd.near_boundary);
        let s = tangent_sample_sensitivity(&p, &x).unwrap();
        assert!(fd.matrix.max_abs_diff(&s) < 1e-9);
    }

    #[test]
    fn per_output_matrices_sum_to_default() {
        let spec = NetworkSpec::new(vec![3, 5, 4, 3], true).unwrap();
        let mut r = rng(12);
        for seed in 0..20 {
            let p = random_params(&spec, seed, 1.0);
            let x = random_input(&mut r, 3, 1.0);
            let parts = per_output_sensitivity(&p, &x).unwrap();
            let total = tangent_sample_sensitivity(&p, &x).unwrap();
            let mut sum = Matrix::zeros(total.rows(), total.cols());
            for part in &parts {
                for (s, v) in sum.as_mut_slice().iter_mut().zip(part.entries().as_slice()) {
                    *s += v;
                }
            }
            let diff = sum
                .as_slice()
                .iter()
                .zip(total.entries().as_slice())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn engine_matches_materialized_norm() {
        let mut r = rng(77);
        for (i, sizes) in [vec![4, 6, 2], vec![3, 5, 4, 2], vec![5, 3, 6, 4, 3], vec![2, 1]]
            .into_iter()
            .enumerate()
        {
            let spec = NetworkSpec::new(sizes, i % 2 == 0).unwrap();
            let p = random_params(&spec, i as u64, 1.0);
            let engine = SensitivityEngine::new(&p);
            for _ in 0..30 {
                let x = random_input(&mut r, spec.input_dim(), 2.0);
                let exact = frobenius_sq(&tangent_sample_sensitivity(&p, &x).unwrap());
                let (fast, _) = engine.frobenius_sq_at(&x).unwrap();
                assert!((fast - exact).abs() <= 1e-12 * exact.max(1.0), "{fast} vs {exact}");
            }
        }
    }

    #[test]
    fn frobenius_matches_naive_loop() {
        let spec = NetworkSpec::new(vec![3, 4, 4, 2], false).unwrap();
        let p = random_params(&spec, 21, 1.0);
        let s = tangent_sample_sensitivity(&p, &[0.4, 0.1, -0.3]).unwrap();
        let mut naive = 0.0;
        for r in 0..s.rows() {
            for c in 0..s.cols() {
                naive += s.get(r, c) * s.get(r, c);
            }
        }
        assert!((frobenius_sq(&s) - naive).abs() <= 1e-14 * naive);
    }

    #[test]
    fn dataset_mean_and_max() {
        let spec = NetworkSpec::new(vec![3, 6, 4, 2], true).unwrap();
        let p = random_params(&spec, 5, 1.0);
        let mut r = rng(5);
        let rows: Vec<Vec<f64>> = (0..25).map(|_| random_input(&mut r, 3, 1.0)).collect();
        let ds = Dataset::from_rows("t", Split::Train, 1, &rows, vec![0; 25]).unwrap();
        let individual: Vec<f64> = ds
            .inputs()
            .iter_f64()
            .map(|x| frobenius_sq(&tangent_sample_sensitivity(&p, &x).unwrap()))
            .collect();
        let summary = mean_frobenius_sq(&p, ds.inputs()).unwrap();
        let mean = individual.iter().sum::<f64>() / 25.0;
        assert!((summary.mean - mean).abs() <= 1e-12 * mean);
        let max = individual.iter().copied().fold(0.0, f64::max);
        assert!((summary.max - max).abs() <= 1e-12 * max);

        let one = ds.select(&[3]);
        let single = mean_frobenius_sq(&p, one.inputs()).unwrap();
        assert!((single.mean - individual[3]).abs() <= 1e-12 * individual[3]);
        let copies = ds.select(&[3, 3, 3, 3]);
        assert_eq!(mean_frobenius_sq(&p, copies.inputs()).unwrap().mean, single.mean);

        let empty = Dataset::from_rows("e", Split::Train, 1, &[], vec![]);
        assert!(empty.is_err() || mean_frobenius_sq(&p, empty.unwrap().inputs()).is_err());
    }

    #[test]
    fn csv_and_binary_export() {
        let spec = NetworkSpec::new(vec![2, 2, 1], true).unwrap();
        let p = random_params(&spec, 1, 1.0);
        let s = tangent_sample_sensitivity_with(&p, &[0.5, 0.5], SensitivityOptions { include_bias_rows: true })
            .unwrap();
        let mut csv = Vec::new();
        s.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "kind,layer,source,target,x0,x1");
        assert!(lines[1].starts_with("w,1,0,0,"));
        assert!(lines[5].starts_with("b,1,,0,"));
        assert_eq!(lines.len(), 1 + s.rows());

        let mut bin = Vec::new();
        s.write_binary(&mut bin).unwrap();
        assert_eq!(SensitivityMatrix::read_binary(&bin[..]).unwrap(), s);
        bin[0] = 0;
        assert!(SensitivityMatrix::read_binary(&bin[..]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn layerwise_equals_path_enumeration(seed in any::<u64>()) {
            let mut r = rng(seed);
            let spec = crate::testing::random_spec(&mut r, 4, 3, 5_000, seed % 2 == 0);
            let p = random_params(&spec, seed, 1.0);
            let x = random_input(&mut r, spec.input_dim(), 1.0);
            let a = tangent_sample_sensitivity(&p, &x).unwrap();
            let b = path_enumeration_sensitivity(&p, &x).unwrap();
            let scale = b.entries().max_abs();
            prop_assert!(a.max_rel_diff(&b, 1e-4 * scale) <= 1e-10);
        }

        #[test]
        fn biasless_sensitivity_is_scale_invariant(seed in any::<u64>(), c in 0.01f64..100.0) {
            let spec = NetworkSpec::new(vec![3, 5, 4, 2], false).unwrap();
            let p = random_params(&spec, seed, 1.0);
            let mut r = rng(seed ^ 0xabc);
            let x = random_input(&mut r, 3, 1.0);
            let cx: Vec<f64> = x.iter().map(|v| v * c).collect();
            let a = tangent_sample_sensitivity(&p, &x).unwrap();
            let b = tangent_sample_sensitivity(&p, &cx).unwrap();
            if forward(&p, &x).unwrap().pattern == forward(&p, &cx).unwrap().pattern {
                prop_assert_eq!(a, b);
            }
        }
    }
}
