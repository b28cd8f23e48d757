//! Mini-batch training with softmax cross-entropy and L2 weight decay.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::linalg::{gemm, Matrix, Operand};
use crate::network::{forward_batch, NetworkSpec, Params};
use crate::testing::rng;
use crate::{Error, Result};

const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Sgd,
    /// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 0.05,
            weight_decay: 0.0005,
            epochs: 20,
            seed: 0,
            shuffle: true,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("train.batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "train.learning_rate must be a finite nonnegative number, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "train.weight_decay must be a finite nonnegative number, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Layer `i` weights and biases drawn from `U(-1/sqrt(N_{i-1}), 1/sqrt(N_{i-1}))`.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Params {
    let mut r = rng(seed);
    let mut p = Params::zeros(spec);
    let use_bias = spec.use_bias();
    for i in 0..spec.depth() {
        let bound = 1.0 / (spec.layer_sizes()[i] as f64).sqrt();
        for v in p.weights_mut()[i].as_mut_slice() {
            *v = r.random_range(-bound..=bound);
        }
        if use_bias {
            for v in p.biases_mut()[i].iter_mut() {
                *v = r.random_range(-bound..=bound);
            }
        }
    }
    p
}

/// `-ln softmax(output)[label]`.
pub fn cross_entropy(output: &[f64], label: usize) -> Result<f64> {
    if label >= output.len() {
        return Err(Error::InvalidLabel {
            label,
            classes: output.len(),
        });
    }
    Ok(log_sum_exp(output) - output[label])
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Inputs as rows with their labels.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub inputs: &'a Matrix,
    pub labels: &'a [usize],
}

impl<'a> Batch<'a> {
    pub fn new(inputs: &'a Matrix, labels: &'a [usize]) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::shape(format!("{} rows for {} labels", inputs.rows(), labels.len())));
        }
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { inputs, labels })
    }
}

/// Mean loss, correct predictions and the gradient of the mean loss.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    pub loss: f64,
    pub correct: usize,
    /// Same layout as the parameters.
    pub grad: Params,
}

pub fn batch_gradient(params: &Params, batch: Batch<'_>) -> Result<BatchGradient> {
    let n = batch.labels.len();
    let trace = forward_batch(params, batch.inputs)?;
    let d_out = params.spec().output_dim();
    let mut delta = trace.output.clone();
    let mut loss = 0.0;
    let mut correct = 0;
    for (r, &label) in batch.labels.iter().enumerate() {
        let z = trace.output.row(r);
        loss += cross_entropy(z, label)?;
        if argmax(z) == label {
            correct += 1;
        }
        let lse = log_sum_exp(z);
        let row = delta.row_mut(r);
        for (c, v) in row.iter_mut().enumerate() {
            *v = ((*v - lse).exp() - f64::from(u8::from(c == label))) / n as f64;
        }
    }
    debug_assert_eq!(delta.cols(), d_out);

    let k = params.depth();
    let mut grad = Params::zeros(params.spec());
    let use_bias = params.spec().use_bias();
    for i in (0..k).rev() {
        let w = &params.weights()[i];
        let a_prev = if i == 0 { batch.inputs } else { &trace.activations[i - 1] };
        gemm(
            w.rows(),
            n,
            w.cols(),
            1.0,
            Operand::transposed(a_prev.as_slice()),
            Operand::plain(delta.as_slice()),
            0.0,
            grad.weights_mut()[i].as_mut_slice(),
        );
        if use_bias {
            let gb = &mut grad.biases_mut()[i];
            for r in 0..n {
                for (g, d) in gb.iter_mut().zip(delta.row(r)) {
                    *g += d;
                }
            }
        }
        if i > 0 {
            let mut back = Matrix::zeros(n, w.rows());
            gemm(
                n,
                w.cols(),
                w.rows(),
                1.0,
                Operand::plain(delta.as_slice()),
                Operand::transposed(w.as_slice()),
                0.0,
                back.as_mut_slice(),
            );
            // ReLU'(0) = 0.
            for (b, &h) in back.as_mut_slice().iter_mut().zip(trace.preactivations[i - 1].as_slice()) {
                if h <= 0.0 {
                    *b = 0.0;
                }
            }
            delta = back;
        }
    }
    Ok(BatchGradient {
        loss: loss / n as f64,
        correct,
        grad,
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Optimizer with its running state.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: Optimizer,
    steps: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, params: &Params) -> Self {
        let n = if kind == Optimizer::Adam { params.flat_len() } else { 0 };
        Self {
            kind,
            steps: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update `theta <- theta - lr (grad + wd theta)` (Adam rescales the
    /// bracket with its moment estimates). Returns the mean batch loss.
    pub fn step(&mut self, params: &mut Params, batch: Batch<'_>, cfg: &TrainConfig) -> Result<f64> {
        let bg = batch_gradient(params, batch)?;
        let mut g = bg.grad.to_flat();
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient entry {i} at step {} (batch loss {})",
                self.steps + 1,
                bg.loss
            )));
        }
        let mut theta = params.to_flat();
        for (gi, &t) in g.iter_mut().zip(&theta) {
            *gi += cfg.weight_decay * t;
        }
        self.steps += 1;
        let lr = cfg.learning_rate;
        match self.kind {
            Optimizer::Sgd => {
                for (t, gi) in theta.iter_mut().zip(&g) {
                    *t -= lr * gi;
                }
            }
            Optimizer::Adam => {
                let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
                let c1 = 1.0 - b1.powf(self.steps as f64);
                let c2 = 1.0 - b2.powf(self.steps as f64);
                for (((t, gi), m), v) in theta.iter_mut().zip(&g).zip(&mut self.m).zip(&mut self.v) {
                    *m = b1 * *m + (1.0 - b1) * gi;
                    *v = b2 * *v + (1.0 - b2) * gi * gi;
                    *t -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
        params.set_flat(&theta)?;
        Ok(bg.loss)
    }
}

/// One plain SGD step on a copy of `params`.
pub fn sgd_step(params: &Params, batch: Batch<'_>, cfg: &TrainConfig) -> Result<Params> {
    let mut next = params.clone();
    OptimizerState::new(Optimizer::Sgd, params).step(&mut next, batch, cfg)?;
    Ok(next)
}

/// Mean cross-entropy and accuracy over a whole dataset.
pub fn evaluate(params: &Params, ds: &Dataset) -> Result<(f64, f64)> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let inputs = ds.inputs();
    let mut loss = 0.0;
    let mut correct = 0;
    for start in (0..ds.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(ds.len());
        let out = forward_batch(params, &inputs.rows_matrix(start, end))?.output;
        for (r, &label) in ds.labels()[start..end].iter().enumerate() {
            loss += cross_entropy(out.row(r), label)?;
            if argmax(out.row(r)) == label {
                correct += 1;
            }
        }
    }
    Ok((loss / ds.len() as f64, correct as f64 / ds.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

/// State handed to the per-epoch hook.
pub struct EpochContext<'a> {
    pub epoch: usize,
    pub previous: &'a Params,
    /// Parameters before the last optimizer step of the epoch.
    pub before_last_step: &'a Params,
    pub current: &'a Params,
    pub metrics: &'a EpochMetrics,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after each epoch; index 0 is the initialization.
    pub checkpoints: Vec<Params>,
    pub metrics: Vec<EpochMetrics>,
}

/// Seed of the shuffle in `epoch` (1-based).
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn train(
    spec: &NetworkSpec,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
    hook: &mut dyn FnMut(&EpochContext<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    train_from(init_params(spec, cfg.seed), train_set, test_set, cfg, hook)
}

/// Trains starting from given parameters.
pub fn train_from(
    init: Params,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
    hook: &mut dyn FnMut(&EpochContext<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let spec = init.spec().clone();
    for ds in [train_set, test_set] {
        if ds.dim() != spec.input_dim() {
            return Err(Error::shape(format!(
                "dataset {} has dimension {}, network expects {}",
                ds.name(),
                ds.dim(),
                spec.input_dim()
            )));
        }
        if ds.classes() > spec.output_dim() {
            return Err(Error::shape(format!(
                "dataset {} has {} classes, network has {} outputs",
                ds.name(),
                ds.classes(),
                spec.output_dim()
            )));
        }
    }
    let mut params = init;
    let mut state = OptimizerState::new(cfg.optimizer, &params);
    let mut checkpoints = vec![params.clone()];
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let inputs = train_set.inputs();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng(epoch_seed(cfg.seed, epoch)));
        }
        let mut before_last_step = params.clone();
        let batches = order.len().div_ceil(cfg.batch_size);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if b + 1 == batches {
                before_last_step.clone_from(&params);
            }
            let x = Matrix::from_vec(chunk.len(), spec.input_dim(), inputs.gather_f64(chunk)).unwrap();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set.labels()[i]).collect();
            state.step(&mut params, Batch::new(&x, &labels)?, cfg)?;
        }
        let (train_loss, train_acc) = evaluate(&params, train_set)?;
        let (test_loss, test_acc) = evaluate(&params, test_set)?;
        let m = EpochMetrics {
            epoch,
            train_loss,
            train_acc,
            test_loss,
            test_acc,
        };
        hook(&EpochContext {
            epoch,
            previous: checkpoints.last().unwrap(),
            before_last_step: &before_last_step,
            current: &params,
            metrics: &m,
        })?;
        metrics.push(m);
        checkpoints.push(params.clone());
    }
    Ok(TrainOutcome { checkpoints, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_gaussian_split;
    use crate::network::output;
    use crate::testing::{random_input, random_params};
    use proptest::prelude::*;

    #[test]
    fn init_is_deterministic_and_bounded() {
        let spec = NetworkSpec::new(vec![100, 50, 10], true).unwrap();
        let a = init_params(&spec, 5);
        assert_eq!(a, init_params(&spec, 5));
        assert_ne!(a, init_params(&spec, 6));
        assert!(a.weights()[0].max_abs() <= 0.1);
        assert!(a.biases()[0].iter().all(|b| b.abs() <= 0.1));
        let bound = 1.0 / 50f64.sqrt();
        assert!(a.weights()[1].max_abs() <= bound);
        let plain = init_params(&NetworkSpec::new(vec![4, 3, 2], false).unwrap(), 1);
        assert!(plain.biases().iter().flatten().all(|&b| b == 0.0));
    }

    #[test]
    fn init_variance() {
        let spec = NetworkSpec::new(vec![100, 10_000], false).unwrap();
        let p = init_params(&spec, 2);
        let v = p.weights()[0].as_slice();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        let expected = 1.0 / 3.0 / 100.0;
        assert!((var / expected - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn cross_entropy_values() {
        assert!((cross_entropy(&[0.3; 10], 4).unwrap() - 10f64.ln()).abs() < 1e-15);
        assert!(cross_entropy(&[50.0, 0.0, 0.0], 0).unwrap() < 1e-20);
        assert!(cross_entropy(&[1e4, 0.0], 1).unwrap().is_finite());
        assert!(cross_entropy(&[0.0, 1.0], 2).is_err());
        // Direct formula where it is safe.
        let z: [f64; 4] = [0.2, -1.3, 2.2, 0.7];
        let direct = -(z[2].exp() / z.iter().map(|v: &f64| v.exp()).sum::<f64>()).ln();
        assert!((cross_entropy(&z, 2).unwrap() - direct).abs() < 1e-14);
    }

    fn mean_loss(p: &Params, x: &Matrix, labels: &[usize]) -> f64 {
        labels
            .iter()
            .enumerate()
            .map(|(r, &l)| cross_entropy(&output(p, x.row(r)).unwrap(), l).unwrap())
            .sum::<f64>()
            / labels.len() as f64
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = NetworkSpec::new(vec![3, 5, 4, 3], true).unwrap();
        let mut r = rng(1);
        let p = random_params(&spec, 3, 1.0);
        let rows: Vec<f64> = (0..6).flat_map(|_| random_input(&mut r, 3, 1.0)).collect();
        let x = Matrix::from_vec(6, 3, rows).unwrap();
        let labels = [0, 1, 2, 0, 2, 1];
        let g = batch_gradient(&p, Batch::new(&x, &labels).unwrap()).unwrap();
        let analytic = g.grad.to_flat();
        let theta = p.to_flat();
        let h = 1e-6;
        for i in 0..theta.len() {
            let mut q = p.clone();
            let mut t = theta.clone();
            t[i] += h;
            q.set_flat(&t).unwrap();
            let up = mean_loss(&q, &x, &labels);
            t[i] -= 2.0 * h;
            q.set_flat(&t).unwrap();
            let down = mean_loss(&q, &x, &labels);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - analytic[i]).abs() <= 1e-5 * fd.abs().max(analytic[i].abs()).max(1e-3), "{i}: {fd} vs {}", analytic[i]);
        }
    }

    #[test]
    fn zero_gradient_cases() {
        // Zero weights and biases: uniform logits, gradient zero for the first layer.
        let spec = NetworkSpec::new(vec![2, 3, 2], false).unwrap();
        let mut p = random_params(&spec, 1, 1.0);
        let x = Matrix::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        let labels = [0];
        // Zero input with no biases: every preactivation is zero, so ReLU'(0)=0
        // kills the first layer and the hidden activations kill the second.
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let next = sgd_step(&p, Batch::new(&x, &labels).unwrap(), &cfg).unwrap();
        assert_eq!(next, p);
        let decay = TrainConfig {
            weight_decay: 0.1,
            learning_rate: 0.5,
            ..TrainConfig::default()
        };
        let shrunk = sgd_step(&p, Batch::new(&x, &labels).unwrap(), &decay).unwrap();
        p.scale_weights(1.0 - 0.05);
        let diff = shrunk
            .to_flat()
            .iter()
            .zip(p.to_flat())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let spec = NetworkSpec::new(vec![2, 2], false).unwrap();
        let p = random_params(&spec, 1, 1.0);
        let x = Matrix::from_vec(1, 2, vec![f64::NAN, 1.0]).unwrap();
        let err = sgd_step(&p, Batch::new(&x, &[0]).unwrap(), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    fn small_data() -> (Dataset, Dataset) {
        synthetic_gaussian_split(6, 3, 90, 30, 4, 1.0).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (tr, te) = small_data();
        let spec = NetworkSpec::new(vec![6, 8, 3], true).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(&spec, &tr, &te, &cfg, &mut |_| Ok(())).unwrap();
        assert_eq!(out.checkpoints.len(), 1);
        assert_eq!(out.checkpoints[0], init_params(&spec, 0));
        assert!(out.metrics.is_empty());
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let (tr, te) = small_data();
        let spec = NetworkSpec::new(vec![6, 8, 3], true).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            learning_rate: 0.0,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let out = train(&spec, &tr, &te, &cfg, &mut |_| Ok(())).unwrap();
        assert!(out.checkpoints.iter().all(|c| *c == out.checkpoints[0]));
    }

    #[test]
    fn training_is_reproducible_and_learns() {
        let (tr, te) = small_data();
        let spec = NetworkSpec::new(vec![6, 16, 3], true).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            seed: 9,
            ..TrainConfig::default()
        };
        let mut seen = Vec::new();
        let a = train(&spec, &tr, &te, &cfg, &mut |ctx| {
            seen.push((ctx.epoch, ctx.previous.clone() != *ctx.current));
            Ok(())
        })
        .unwrap();
        let b = train(&spec, &tr, &te, &cfg, &mut |_| Ok(())).unwrap();
        assert_eq!(a.checkpoints, b.checkpoints);
        assert_eq!(seen, (1..=5).map(|e| (e, true)).collect::<Vec<_>>());
        assert!(a.metrics[4].train_loss < a.metrics[0].train_loss);
        let adam = TrainConfig {
            optimizer: Optimizer::Adam,
            learning_rate: 0.01,
            ..cfg
        };
        let c = train(&spec, &tr, &te, &adam, &mut |_| Ok(())).unwrap();
        assert!(c.metrics[4].train_loss < c.metrics[0].train_loss);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..TrainConfig::default() }.validate().is_err());
        let parsed: TrainConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(parsed.batch_size, 64);
        assert_eq!(parsed.learning_rate, 0.05);
        assert_eq!(parsed.weight_decay, 0.0005);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn decay_alone_shrinks_norm(seed in any::<u64>()) {
            let spec = NetworkSpec::new(vec![2, 4, 2], true).unwrap();
            let p = random_params(&spec, seed, 1.0);
            // Huge negative first-layer biases: no active hidden unit, and the
            // output bias gradient is removed by balancing the labels.
            let mut q = p.clone();
            q.biases_mut()[0].fill(-1e3);
            q.biases_mut()[1].fill(0.0);
            let x = Matrix::from_vec(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
            let cfg = TrainConfig { weight_decay: 0.01, ..TrainConfig::default() };
            let next = sgd_step(&q, Batch::new(&x, &[0, 1]).unwrap(), &cfg).unwrap();
            let norm = |p: &Params| p.to_flat().iter().map(|v| v * v).sum::<f64>();
            prop_assert!(norm(&next) < norm(&q));
        }
    }
}
