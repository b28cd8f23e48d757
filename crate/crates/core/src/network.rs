//! Fully-connected ReLU networks.
//!
//! Weight matrices are stored source x target: `W_i` has shape `N_{i-1} x N_i`
//! (row = source node, column = target node) and layer `i` computes
//! `h_i = W_i^T a_{i-1} + b_i`. The output layer is affine, every other layer
//! applies ReLU. Hidden neurons are indexed globally in layer-major order.
//!
//! A neuron whose preactivation is exactly zero is treated as inactive, so
//! ReLU'(0) = 0 everywhere in this crate.

use serde::{Deserialize, Serialize};

use crate::linalg::{gemm, Matrix, Operand};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct NetworkSpec {
    layer_sizes: Vec<usize>,
    use_bias: bool,
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    layer_sizes: Vec<usize>,
    use_bias: bool,
}

impl TryFrom<SpecRepr> for NetworkSpec {
    type Error = Error;

    fn try_from(r: SpecRepr) -> Result<Self> {
        NetworkSpec::new(r.layer_sizes, r.use_bias)
    }
}

impl From<NetworkSpec> for SpecRepr {
    fn from(s: NetworkSpec) -> Self {
        SpecRepr {
            layer_sizes: s.layer_sizes,
            use_bias: s.use_bias,
        }
    }
}

impl NetworkSpec {
    /// `layer_sizes` is `[d_in, N_1, ..., N_{k-1}, d_out]`.
    pub fn new(layer_sizes: Vec<usize>, use_bias: bool) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least an input and an output layer, got {} sizes",
                layer_sizes.len()
            )));
        }
        if let Some(pos) = layer_sizes.iter().position(|&n| n == 0) {
            return Err(Error::InvalidSpec(format!("layer {pos} has size 0")));
        }
        Ok(Self {
            layer_sizes,
            use_bias,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn use_bias(&self) -> bool {
        self.use_bias
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of weight matrices `k`.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.layer_sizes[1..self.layer_sizes.len() - 1]
    }

    /// Total number of hidden (ReLU) neurons `N`.
    pub fn hidden_neurons(&self) -> usize {
        self.hidden_sizes().iter().sum()
    }

    pub fn weight_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1]).sum()
    }

    pub fn bias_count(&self) -> usize {
        if self.use_bias {
            self.layer_sizes[1..].iter().sum()
        } else {
            0
        }
    }

    /// `N_theta`: weights plus biases when the network has them.
    pub fn param_count(&self) -> usize {
        self.weight_count() + self.bias_count()
    }

    /// Largest layer width over layers `1..=k` (the input layer is excluded).
    pub fn max_width(&self) -> usize {
        *self.layer_sizes[1..].iter().max().unwrap()
    }

    /// Number of input-to-output paths, saturating at `u128::MAX`.
    pub fn path_count(&self) -> u128 {
        self.layer_sizes
            .iter()
            .try_fold(1u128, |acc, &n| acc.checked_mul(n as u128))
            .unwrap_or(u128::MAX)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    spec: NetworkSpec,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

impl Params {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let sizes = spec.layer_sizes();
        let weights = sizes.windows(2).map(|w| Matrix::zeros(w[0], w[1])).collect();
        let biases = sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Self {
            spec: spec.clone(),
            weights,
            biases,
        }
    }

    pub fn from_parts(spec: NetworkSpec, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        let sizes = spec.layer_sizes();
        if weights.len() != spec.depth() || biases.len() != spec.depth() {
            return Err(Error::shape(format!(
                "expected {} weight matrices and bias vectors, got {} and {}",
                spec.depth(),
                weights.len(),
                biases.len()
            )));
        }
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.rows() != sizes[i] || w.cols() != sizes[i + 1] {
                return Err(Error::shape(format!(
                    "layer {}: weight matrix is {}x{}, expected {}x{}",
                    i + 1,
                    w.rows(),
                    w.cols(),
                    sizes[i],
                    sizes[i + 1]
                )));
            }
            if b.len() != sizes[i + 1] {
                return Err(Error::shape(format!(
                    "layer {}: bias has length {}, expected {}",
                    i + 1,
                    b.len(),
                    sizes[i + 1]
                )));
            }
            if !spec.use_bias() && b.iter().any(|&v| v != 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "layer {} has nonzero biases but the network is biasless",
                    i + 1
                )));
            }
        }
        Ok(Self {
            spec,
            weights,
            biases,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn depth(&self) -> usize {
        self.spec.depth()
    }

    /// Weight matrices `W_1..W_k` (index 0 holds `W_1`).
    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    /// Mutable biases. Callers must keep them zero on biasless networks.
    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    /// Per-layer `l_inf` norm of the weights, `w_max_i`.
    pub fn layer_max_abs(&self) -> Vec<f64> {
        self.weights.iter().map(Matrix::max_abs).collect()
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.layer_max_abs().into_iter().fold(0.0, f64::max)
    }

    pub fn scale_weights(&mut self, c: f64) {
        for w in &mut self.weights {
            for v in w.as_mut_slice() {
                *v *= c;
            }
        }
    }

    /// Length of the flat parameter vector (see [`Params::to_flat`]).
    pub fn flat_len(&self) -> usize {
        self.spec.param_count()
    }

    /// Flattens parameters layer by layer: the row-major weight block of a
    /// layer followed by its biases (biases omitted on biasless networks).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            if self.spec.use_bias() {
                out.extend_from_slice(b);
            }
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.flat_len() {
            return Err(Error::shape(format!(
                "flat parameter vector has length {}, expected {}",
                flat.len(),
                self.flat_len()
            )));
        }
        let use_bias = self.spec.use_bias();
        let mut pos = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&flat[pos..pos + n]);
            pos += n;
            if use_bias {
                let n = b.len();
                b.copy_from_slice(&flat[pos..pos + n]);
                pos += n;
            }
        }
        Ok(())
    }

    pub(crate) fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.input_dim() {
            return Err(Error::shape(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.spec.input_dim()
            )));
        }
        Ok(())
    }
}

/// Sign assignment over all hidden neurons, layer-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActivationPattern {
    signs: Vec<i8>,
    layer_sizes: Vec<usize>,
}

impl ActivationPattern {
    /// `layer_sizes` are the hidden layer widths.
    pub fn from_signs(signs: Vec<i8>, layer_sizes: Vec<usize>) -> Result<Self> {
        let n: usize = layer_sizes.iter().sum();
        if signs.len() != n {
            return Err(Error::shape(format!(
                "pattern has {} signs, hidden layers hold {} neurons",
                signs.len(),
                n
            )));
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::domain("pattern signs must be +1 or -1"));
        }
        Ok(Self { signs, layer_sizes })
    }

    pub fn from_preactivations(pre: &[Vec<f64>]) -> Self {
        let layer_sizes = pre.iter().map(Vec::len).collect();
        let signs = pre
            .iter()
            .flatten()
            .map(|&h| if h > 0.0 { 1 } else { -1 })
            .collect();
        Self { signs, layer_sizes }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    #[inline]
    pub fn is_active(&self, l: usize) -> bool {
        self.signs[l] > 0
    }

    /// Signs of hidden layer `i` (0-based over hidden layers).
    pub fn layer(&self, i: usize) -> &[i8] {
        let start: usize = self.layer_sizes[..i].iter().sum();
        &self.signs[start..start + self.layer_sizes[i]]
    }

    /// Active counts `n_i` per hidden layer.
    pub fn layer_counts(&self) -> Vec<usize> {
        (0..self.layer_sizes.len())
            .map(|i| self.layer(i).iter().filter(|&&s| s > 0).count())
            .collect()
    }

    /// `T(x)`, the total number of active hidden neurons.
    pub fn total_active(&self) -> usize {
        self.signs.iter().filter(|&&s| s > 0).count()
    }

    /// `'1'` for active and `'0'` for inactive neurons, layer-major.
    pub fn to_bitstring(&self) -> String {
        self.signs.iter().map(|&s| if s > 0 { '1' } else { '0' }).collect()
    }

    pub fn from_bitstring(bits: &str, layer_sizes: Vec<usize>) -> Result<Self> {
        let signs = bits
            .chars()
            .map(|c| match c {
                '1' => Ok(1),
                '0' => Ok(-1),
                other => Err(Error::domain(format!("invalid pattern character {other:?}"))),
            })
            .collect::<Result<Vec<i8>>>()?;
        Self::from_signs(signs, layer_sizes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    /// Hidden-layer preactivations `h_{i,.}`; the output layer is not included.
    pub preactivations: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
    pub output: Vec<f64>,
    pub pattern: ActivationPattern,
}

impl ForwardTrace {
    /// True when some hidden preactivation is exactly zero.
    pub fn on_boundary(&self) -> bool {
        self.preactivations.iter().flatten().any(|&h| h == 0.0)
    }

    /// Hidden preactivations flattened in layer-major order.
    pub fn flat_preactivations(&self) -> impl Iterator<Item = f64> + '_ {
        self.preactivations.iter().flatten().copied()
    }
}

/// `out = W^T a + b` for a source x target matrix `W`.
pub(crate) fn affine(w: &Matrix, a: &[f64], b: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(b);
    for (u, &au) in a.iter().enumerate() {
        if au == 0.0 {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(w.row(u)) {
            *o += au * wv;
        }
    }
}

pub fn forward(params: &Params, x: &[f64]) -> Result<ForwardTrace> {
    params.check_input(x)?;
    let k = params.depth();
    let mut preactivations = Vec::with_capacity(k - 1);
    let mut activations = Vec::with_capacity(k - 1);
    let mut current = x.to_vec();
    let mut h = Vec::new();
    for (i, (w, b)) in params.weights().iter().zip(params.biases()).enumerate() {
        affine(w, &current, b, &mut h);
        if i + 1 == k {
            break;
        }
        let a: Vec<f64> = h.iter().map(|&v| v.max(0.0)).collect();
        preactivations.push(h.clone());
        activations.push(a.clone());
        current = a;
    }
    let pattern = ActivationPattern::from_preactivations(&preactivations);
    Ok(ForwardTrace {
        input: x.to_vec(),
        preactivations,
        activations,
        output: h,
        pattern,
    })
}

/// Forward pass over a batch whose rows are inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTrace {
    /// Hidden preactivations, one `batch x N_i` matrix per hidden layer.
    pub preactivations: Vec<Matrix>,
    /// Hidden activations, same shapes as `preactivations`.
    pub activations: Vec<Matrix>,
    pub output: Matrix,
}

impl BatchTrace {
    pub fn len(&self) -> usize {
        self.output.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.output.rows() == 0
    }

    /// Activation pattern of row `r`.
    pub fn pattern(&self, r: usize) -> ActivationPattern {
        let pre: Vec<Vec<f64>> = self.preactivations.iter().map(|h| h.row(r).to_vec()).collect();
        ActivationPattern::from_preactivations(&pre)
    }
}

pub fn forward_batch(params: &Params, x: &Matrix) -> Result<BatchTrace> {
    let d_in = params.spec().input_dim();
    if x.cols() != d_in {
        return Err(Error::shape(format!("batch has {} columns, network expects {d_in}", x.cols())));
    }
    let n = x.rows();
    let k = params.depth();
    let mut preactivations = Vec::with_capacity(k - 1);
    let mut activations: Vec<Matrix> = Vec::with_capacity(k - 1);
    let mut output = Matrix::zeros(0, 0);
    for (i, (w, b)) in params.weights().iter().zip(params.biases()).enumerate() {
        let input = if i == 0 { x } else { &activations[i - 1] };
        let mut h = Matrix::from_fn(n, w.cols(), |_, c| b[c]);
        gemm(
            n,
            w.rows(),
            w.cols(),
            1.0,
            Operand::plain(input.as_slice()),
            Operand::plain(w.as_slice()),
            1.0,
            h.as_mut_slice(),
        );
        if i + 1 == k {
            output = h;
        } else {
            let mut a = h.clone();
            for v in a.as_mut_slice() {
                *v = v.max(0.0);
            }
            preactivations.push(h);
            activations.push(a);
        }
    }
    Ok(BatchTrace {
        preactivations,
        activations,
        output,
    })
}

/// Network output without recording intermediate quantities.
pub fn output(params: &Params, x: &[f64]) -> Result<Vec<f64>> {
    params.check_input(x)?;
    let k = params.depth();
    let mut current = x.to_vec();
    let mut h = Vec::new();
    for (i, (w, b)) in params.weights().iter().zip(params.biases()).enumerate() {
        affine(w, &current, b, &mut h);
        if i + 1 < k {
            for v in h.iter_mut() {
                *v = v.max(0.0);
            }
            std::mem::swap(&mut current, &mut h);
        }
    }
    Ok(h)
}

pub fn activation_pattern(trace: &ForwardTrace) -> ActivationPattern {
    trace.pattern.clone()
}

/// Jacobians `J^(0..k-1)` of the hidden activations with respect to the
/// input, with the activation pattern at `x` frozen. `J^(0)` is the identity.
pub fn forward_jacobian(params: &Params, x: &[f64]) -> Result<Vec<Matrix>> {
    let trace = forward(params, x)?;
    Ok(jacobians(params, &trace.pattern).gated)
}

pub(crate) struct Jacobians {
    /// `J^(0..k-1)`, gated by the pattern.
    pub gated: Vec<Matrix>,
    /// Preactivation Jacobians `W_i^T J^(i-1)` for hidden layers `1..k-1`.
    pub pre: Vec<Matrix>,
}

pub(crate) fn jacobians(params: &Params, pattern: &ActivationPattern) -> Jacobians {
    let d_in = params.spec().input_dim();
    let hidden = params.depth() - 1;
    let mut gated = Vec::with_capacity(hidden + 1);
    let mut pre = Vec::with_capacity(hidden);
    gated.push(Matrix::identity(d_in));
    for i in 0..hidden {
        let w = &params.weights()[i];
        let prev = &gated[i];
        let mut m = Matrix::zeros(w.cols(), d_in);
        gemm(
            w.cols(),
            w.rows(),
            d_in,
            1.0,
            Operand::transposed(w.as_slice()),
            Operand::plain(prev.as_slice()),
            0.0,
            m.as_mut_slice(),
        );
        let mut g = m.clone();
        for (v, &s) in pattern.layer(i).iter().enumerate() {
            if s < 0 {
                g.row_mut(v).fill(0.0);
            }
        }
        pre.push(m);
        gated.push(g);
    }
    Jacobians { gated, pre }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_forward_matches_single() {
        let spec = NetworkSpec::new(vec![3, 5, 4, 2], true).unwrap();
        let p = crate::testing::random_params(&spec, 4, 1.0);
        let mut r = crate::testing::rng(1);
        let rows: Vec<Vec<f64>> = (0..7).map(|_| crate::testing::random_input(&mut r, 3, 1.0)).collect();
        let x = Matrix::from_fn(7, 3, |i, j| rows[i][j]);
        let batch = forward_batch(&p, &x).unwrap();
        assert_eq!(batch.len(), 7);
        for (i, row) in rows.iter().enumerate() {
            let t = forward(&p, row).unwrap();
            for (a, b) in batch.output.row(i).iter().zip(&t.output) {
                assert!((a - b).abs() < 1e-12);
            }
            assert_eq!(batch.pattern(i), t.pattern);
        }
        assert!(forward_batch(&p, &Matrix::zeros(2, 4)).is_err());
    }

    fn net_221(w: [f64; 6]) -> Params {
        // W_1 = [[w11, w13], [w12, w14]], W_2 = [[w21], [w22]]
        let spec = NetworkSpec::new(vec![2, 2, 1], false).unwrap();
        let w1 = Matrix::from_vec(2, 2, vec![w[0], w[2], w[1], w[3]]).unwrap();
        let w2 = Matrix::from_vec(2, 1, vec![w[4], w[5]]).unwrap();
        Params::from_parts(spec, vec![w1, w2], vec![vec![0.0; 2], vec![0.0]]).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(NetworkSpec::new(vec![3], true).is_err());
        assert!(NetworkSpec::new(vec![3, 0, 2], true).is_err());
        let s = NetworkSpec::new(vec![3, 4, 2], true).unwrap();
        assert_eq!(s.depth(), 2);
        assert_eq!(s.weight_count(), 12 + 8);
        assert_eq!(s.param_count(), 12 + 8 + 4 + 2);
        assert_eq!(s.hidden_neurons(), 4);
        assert_eq!(s.path_count(), 24);
        let biasless = NetworkSpec::new(vec![3, 4, 2], false).unwrap();
        assert_eq!(biasless.param_count(), 20);
    }

    #[test]
    fn spec_json_is_validated() {
        let bad: std::result::Result<NetworkSpec, _> =
            serde_json::from_str(r#"{"layer_sizes":[2,0,1],"use_bias":true}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn zero_input_biasless() {
        let spec = NetworkSpec::new(vec![3, 4, 2], false).unwrap();
        let mut p = Params::zeros(&spec);
        p.weights_mut()[0].set(0, 0, 1.5);
        p.weights_mut()[1].set(0, 1, -2.0);
        let t = forward(&p, &[0.0; 3]).unwrap();
        assert!(t.flat_preactivations().all(|h| h == 0.0));
        assert_eq!(t.output, vec![0.0, 0.0]);
        assert!(t.pattern.signs().iter().all(|&s| s == -1));
        assert!(t.on_boundary());
    }

    #[test]
    fn two_two_one_closed_form() {
        let w = [0.3, 0.5, 0.7, 0.2, 1.1, -0.4];
        let p = net_221(w);
        let x = [0.9, 0.4];
        let t = forward(&p, &x).unwrap();
        assert!(t.pattern.signs().iter().all(|&s| s == 1));
        let expected = w[4] * (w[0] * x[0] + w[1] * x[1]) + w[5] * (w[2] * x[0] + w[3] * x[1]);
        assert!((t.output[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn pattern_sign_of_zero_is_inactive() {
        let p = ActivationPattern::from_preactivations(&[vec![1.2, -0.3, 0.0]]);
        assert_eq!(p.signs(), &[1, -1, -1]);
        assert_eq!(p.layer_counts(), vec![1]);
        assert_eq!(p.to_bitstring(), "100");
        let back = ActivationPattern::from_bitstring("100", vec![3]).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn all_active_jacobian_is_weight_product() {
        let w = [0.3, 0.5, 0.7, 0.2, 1.1, -0.4];
        let p = net_221(w);
        let jac = forward_jacobian(&p, &[0.9, 0.4]).unwrap();
        assert_eq!(jac.len(), 2);
        assert_eq!(jac[0], Matrix::identity(2));
        assert_eq!(jac[1], p.weights()[0].transpose());
    }

    #[test]
    fn inactive_layer_zeroes_jacobians() {
        let spec = NetworkSpec::new(vec![2, 3, 3, 1], true).unwrap();
        let mut p = Params::zeros(&spec);
        for b in p.biases_mut()[..2].iter_mut() {
            b.fill(-1.0);
        }
        p.weights_mut()[0].set(0, 0, 0.1);
        let jac = forward_jacobian(&p, &[0.5, 0.5]).unwrap();
        assert!(jac[1..].iter().all(|j| j.max_abs() == 0.0));
    }

    #[test]
    fn flat_roundtrip() {
        let spec = NetworkSpec::new(vec![2, 3, 1], true).unwrap();
        let mut p = Params::zeros(&spec);
        let flat: Vec<f64> = (0..p.flat_len()).map(|i| i as f64).collect();
        p.set_flat(&flat).unwrap();
        assert_eq!(p.to_flat(), flat);
        assert_eq!(p.biases()[0], vec![6.0, 7.0, 8.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let spec = NetworkSpec::new(vec![2, 3, 1], true).unwrap();
        let p = Params::zeros(&spec);
        assert!(matches!(forward(&p, &[1.0]), Err(Error::Shape(_))));
    }
}
