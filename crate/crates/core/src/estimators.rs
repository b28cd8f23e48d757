//! Test-loss and test-accuracy estimates from sensitivity ratios.
//!
//! Each estimator multiplies the training loss by a ratio of sensitivity
//! measures:
//!
//! * `l1`: squared product of layer maxima, previous over current epoch;
//! * `l1_log`: log of the tight layer-maximum bound, previous over current;
//! * `l2`: the active-node moment term `psi*` of the test set over the training set;
//! * `l3`: empirical tangent sensitivity of the test set over the training set.
//!
//! None of them reads test labels; test inputs are passed as [`Inputs`].

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::ln_eq1_tight;
use crate::data::Inputs;
use crate::network::Params;
use crate::region_stats::{empirical_tangent_sensitivity, ActiveNodeStats};
use crate::specfun::kummer_1f1_ln;
use crate::{Error, Result};

pub const METRICS_HEADER: &str = "epoch,train_loss,test_loss,train_acc,test_acc,est_l1,est_l1_log,est_l2,est_l3,est_acc_l1,est_acc_l2,est_acc_l3";

fn check_same_spec(prev: &Params, cur: &Params) -> Result<()> {
    if prev.spec() != cur.spec() {
        return Err(Error::shape("parameter sets come from different networks"));
    }
    Ok(())
}

fn ln_weight_product(params: &Params) -> Result<f64> {
    let maxima = params.layer_max_abs();
    if maxima.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::domain("a layer has no nonzero weight"));
    }
    Ok(maxima.iter().map(|w| w.ln()).sum())
}

/// Loss multiplier of `l1`: `(prod w_max_i(prev))^2 / (prod w_max_i(cur))^2`.
pub fn l1_ratio(prev: &Params, cur: &Params) -> Result<f64> {
    check_same_spec(prev, cur)?;
    Ok((2.0 * (ln_weight_product(prev)? - ln_weight_product(cur)?)).exp())
}

pub fn estimate_l1(prev: &Params, cur: &Params, train_loss: f64) -> Result<f64> {
    Ok(l1_ratio(prev, cur)? * train_loss)
}

/// Loss multiplier of `l1_log`: `ln Sens(prev) / ln Sens(cur)` with the full tight bound.
pub fn l1_log_ratio(prev: &Params, cur: &Params) -> Result<f64> {
    check_same_spec(prev, cur)?;
    let (a, b) = (ln_eq1_tight(prev)?, ln_eq1_tight(cur)?);
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::domain(format!(
            "log ratio needs both bounds above 1 (ln values {a}, {b})"
        )));
    }
    Ok(a / b)
}

pub fn estimate_l1_log(prev: &Params, cur: &Params, train_loss: f64) -> Result<f64> {
    Ok(l1_log_ratio(prev, cur)? * train_loss)
}

/// `ln psi*(k, mu, sigma) = ln( sigma^{2(k-1)} 1F1(-(k-1)/2, 1/2, -mu^2/(2 sigma^2))^2 )`.
pub fn ln_psi_star(k: usize, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("active-node std must be positive, got {sigma}")));
    }
    let p = k as f64 - 1.0;
    let (ln_psi, _) = kummer_1f1_ln(-p / 2.0, 0.5, -(mu * mu) / (2.0 * sigma * sigma))?;
    Ok(2.0 * p * sigma.ln() + 2.0 * ln_psi)
}

/// Loss multiplier of `l2`: `psi*(test) / psi*(train)`.
pub fn l2_ratio(params: &Params, train: &ActiveNodeStats, test: &ActiveNodeStats) -> Result<f64> {
    let k = params.depth();
    Ok((ln_psi_star(k, test.mu(), test.sigma())? - ln_psi_star(k, train.mu(), train.sigma())?).exp())
}

pub fn estimate_l2(
    params: &Params,
    train: &ActiveNodeStats,
    test: &ActiveNodeStats,
    train_loss: f64,
) -> Result<f64> {
    Ok(l2_ratio(params, train, test)? * train_loss)
}

/// Loss multiplier of `l3`: `S(test) / S(train)` with the empirical tangent sensitivity.
pub fn l3_ratio(params: &Params, train: Inputs<'_>, test: Inputs<'_>) -> Result<f64> {
    let s_train = empirical_tangent_sensitivity(params, train)?;
    if !(s_train > 0.0) {
        return Err(Error::domain("training-set empirical sensitivity is zero"));
    }
    Ok(empirical_tangent_sensitivity(params, test)? / s_train)
}

pub fn estimate_l3(params: &Params, train: Inputs<'_>, test: Inputs<'_>, train_loss: f64) -> Result<f64> {
    Ok(l3_ratio(params, train, test)? * train_loss)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyMode {
    /// `train_acc / ratio`: a larger loss multiplier predicts lower accuracy.
    #[default]
    Inverse,
    /// `train_acc * ratio`.
    Direct,
}

/// Test-accuracy estimate from the loss multiplier `ratio`, clamped to `[0, 1]`.
pub fn estimate_accuracy(ratio: f64, train_acc: f64, mode: AccuracyMode) -> Result<f64> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::domain(format!("accuracy ratio must be positive, got {ratio}")));
    }
    if !(0.0..=1.0).contains(&train_acc) {
        return Err(Error::domain(format!("training accuracy {train_acc} outside [0, 1]")));
    }
    let v = match mode {
        AccuracyMode::Inverse => train_acc / ratio,
        AccuracyMode::Direct => train_acc * ratio,
    };
    Ok(v.clamp(0.0, 1.0))
}

pub fn mae(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::shape(format!(
            "{} estimates for {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(estimates.iter().zip(truths).map(|(e, t)| (e - t).abs()).sum::<f64>() / estimates.len() as f64)
}

/// Sensitivity quantities behind one report row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorComponents {
    pub l1_ratio: f64,
    pub l1_log_ratio: f64,
    pub l2_ratio: f64,
    pub l3_ratio: f64,
    pub ln_weight_product_prev: f64,
    pub ln_weight_product_cur: f64,
    pub ln_eq1_tight_prev: f64,
    pub ln_eq1_tight_cur: f64,
    pub mu_train: f64,
    pub sigma_train: f64,
    pub mu_test: f64,
    pub sigma_test: f64,
    pub empirical_sensitivity_train: f64,
    pub empirical_sensitivity_test: f64,
    pub patterns_train: usize,
    pub patterns_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub est_l1: f64,
    pub est_l1_log: f64,
    pub est_l2: f64,
    pub est_l3: f64,
    pub est_acc_l1: f64,
    pub est_acc_l2: f64,
    pub est_acc_l3: f64,
    pub components: EstimatorComponents,
}

impl EstimatorReport {
    /// One CSV line in [`METRICS_HEADER`] order, without the newline.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.train_loss,
            self.test_loss,
            self.train_acc,
            self.test_acc,
            self.est_l1,
            self.est_l1_log,
            self.est_l2,
            self.est_l3,
            self.est_acc_l1,
            self.est_acc_l2,
            self.est_acc_l3
        )
    }
}

pub fn write_metrics_csv<W: Write>(reports: &[EstimatorReport], mut w: W) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in reports {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Everything an epoch's estimates depend on. Test quantities enter only as
/// unlabeled inputs plus the ground-truth metrics that are reported alongside.
pub struct EpochEvaluation<'a> {
    pub epoch: usize,
    pub previous: &'a Params,
    pub current: &'a Params,
    pub train_inputs: Inputs<'a>,
    pub test_inputs: Inputs<'a>,
    pub train_stats: &'a ActiveNodeStats,
    pub test_stats: &'a ActiveNodeStats,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub accuracy_mode: AccuracyMode,
}

pub fn estimator_report(e: &EpochEvaluation<'_>) -> Result<EstimatorReport> {
    let l1 = l1_ratio(e.previous, e.current)?;
    let l1_log = l1_log_ratio(e.previous, e.current)?;
    let l2 = l2_ratio(e.current, e.train_stats, e.test_stats)?;
    let s_train = crate::region_stats::empirical_tangent_sensitivity_with(
        e.current,
        e.train_inputs,
        Default::default(),
    )?;
    let s_test = crate::region_stats::empirical_tangent_sensitivity_with(
        e.current,
        e.test_inputs,
        Default::default(),
    )?;
    if !(s_train.value > 0.0) {
        return Err(Error::domain("training-set empirical sensitivity is zero"));
    }
    let l3 = s_test.value / s_train.value;
    let acc = |ratio| estimate_accuracy(ratio, e.train_acc, e.accuracy_mode);
    Ok(EstimatorReport {
        epoch: e.epoch,
        train_loss: e.train_loss,
        test_loss: e.test_loss,
        train_acc: e.train_acc,
        test_acc: e.test_acc,
        est_l1: l1 * e.train_loss,
        est_l1_log: l1_log * e.train_loss,
        est_l2: l2 * e.train_loss,
        est_l3: l3 * e.train_loss,
        est_acc_l1: acc(l1_log)?,
        est_acc_l2: acc(l2)?,
        est_acc_l3: acc(l3)?,
        components: EstimatorComponents {
            l1_ratio: l1,
            l1_log_ratio: l1_log,
            l2_ratio: l2,
            l3_ratio: l3,
            ln_weight_product_prev: ln_weight_product(e.previous)?,
            ln_weight_product_cur: ln_weight_product(e.current)?,
            ln_eq1_tight_prev: ln_eq1_tight(e.previous)?,
            ln_eq1_tight_cur: ln_eq1_tight(e.current)?,
            mu_train: e.train_stats.mu(),
            sigma_train: e.train_stats.sigma(),
            mu_test: e.test_stats.mu(),
            sigma_test: e.test_stats.sigma(),
            empirical_sensitivity_train: s_train.value,
            empirical_sensitivity_test: s_test.value,
            patterns_train: s_train.patterns,
            patterns_test: s_test.patterns,
        },
    })
}

/// Mean absolute errors of every estimate column against the truth, plus the
/// baseline that predicts test loss (accuracy) by train loss (accuracy).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaeSummary {
    pub epochs: usize,
    pub loss_baseline: f64,
    pub loss_l1: f64,
    pub loss_l1_log: f64,
    pub loss_l2: f64,
    pub loss_l3: f64,
    pub acc_baseline: f64,
    pub acc_l1: f64,
    pub acc_l2: f64,
    pub acc_l3: f64,
}

impl MaeSummary {
    pub fn from_reports(reports: &[EstimatorReport]) -> Result<Self> {
        let col = |f: fn(&EstimatorReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
        let test_loss = col(|r| r.test_loss);
        let test_acc = col(|r| r.test_acc);
        Ok(Self {
            epochs: reports.len(),
            loss_baseline: mae(&col(|r| r.train_loss), &test_loss)?,
            loss_l1: mae(&col(|r| r.est_l1), &test_loss)?,
            loss_l1_log: mae(&col(|r| r.est_l1_log), &test_loss)?,
            loss_l2: mae(&col(|r| r.est_l2), &test_loss)?,
            loss_l3: mae(&col(|r| r.est_l3), &test_loss)?,
            acc_baseline: mae(&col(|r| r.train_acc), &test_acc)?,
            acc_l1: mae(&col(|r| r.est_acc_l1), &test_acc)?,
            acc_l2: mae(&col(|r| r.est_acc_l2), &test_acc)?,
            acc_l3: mae(&col(|r| r.est_acc_l3), &test_acc)?,
        })
    }

    /// Plain-text table: one row per estimator with loss and accuracy MAE.
    pub fn table(&self) -> String {
        let mut s = format!("{:<28} {:>14} {:>14}\n", "estimator", "loss MAE", "accuracy MAE");
        for (name, l, a) in [
            ("train metric (baseline)", self.loss_baseline, self.acc_baseline),
            ("layer max product (l1)", self.loss_l1, self.acc_l1),
            ("log layer max bound (l1_log)", self.loss_l1_log, self.acc_l1),
            ("active-node moment (l2)", self.loss_l2, self.acc_l2),
            ("empirical sensitivity (l3)", self.loss_l3, self.acc_l3),
        ] {
            s.push_str(&format!("{name:<28} {l:>14.4e} {a:>14.4e}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Split};
    use crate::network::NetworkSpec;
    use crate::region_stats::active_node_stats;
    use crate::testing::{random_input, random_params, rng};

    fn net(seed: u64) -> Params {
        random_params(&NetworkSpec::new(vec![4, 8, 6, 3], true).unwrap(), seed, 1.0)
    }

    fn data(seed: u64, n: usize) -> Dataset {
        let mut r = rng(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| random_input(&mut r, 4, 1.0)).collect();
        Dataset::from_rows("t", Split::Train, 1, &rows, vec![0; n]).unwrap()
    }

    #[test]
    fn identical_states_return_train_loss() {
        let p = net(1);
        assert_eq!(estimate_l1(&p, &p, 0.7).unwrap(), 0.7);
        assert_eq!(estimate_l1_log(&p, &p, 0.7).unwrap(), 0.7);
        let ds = data(2, 50);
        let stats = active_node_stats(&p, ds.inputs()).unwrap();
        assert_eq!(estimate_l2(&p, &stats, &stats, 0.7).unwrap(), 0.7);
        assert_eq!(estimate_l3(&p, ds.inputs(), ds.inputs(), 0.7).unwrap(), 0.7);
    }

    #[test]
    fn l1_scaling() {
        let p = net(3);
        let mut q = p.clone();
        q.scale_weights(2.0);
        let est = estimate_l1(&p, &q, 1.0).unwrap();
        assert!((est - 2f64.powi(-6)).abs() < 1e-15);
        let zero = Params::zeros(p.spec());
        assert!(estimate_l1(&p, &zero, 1.0).is_err());
        let other = random_params(&NetworkSpec::new(vec![4, 8, 3], true).unwrap(), 1, 1.0);
        assert!(estimate_l1(&p, &other, 1.0).is_err());
    }

    #[test]
    fn l1_ignores_non_maximal_weights() {
        let p = net(4);
        let mut q = p.clone();
        let w = q.weights_mut()[1].as_mut_slice();
        let imax = w
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap()
            .0;
        let j = (imax + 1) % w.len();
        w[j] *= 0.5;
        assert_eq!(estimate_l1(&p, &q, 0.3).unwrap(), 0.3);
    }

    #[test]
    fn l1_log_doubling() {
        // ln bound goes from 1 to 1 + ln 2.
        let ratio: f64 = 1.0 / (1.0 + 2f64.ln());
        // Depth 2, widths 1: the bound is 2 max(w1, w2)^2.
        let spec2 = NetworkSpec::new(vec![1, 1, 1], false).unwrap();
        let mk = |w1: f64, w2: f64| {
            let mut p = Params::zeros(&spec2);
            p.weights_mut()[0].set(0, 0, w1);
            p.weights_mut()[1].set(0, 0, w2);
            p
        };
        let e = std::f64::consts::E;
        let prev = mk((e / 2.0).sqrt(), 0.01);
        let cur = mk(e.sqrt(), 0.01);
        let est = estimate_l1_log(&prev, &cur, 1.0).unwrap();
        assert!((est - ratio).abs() < 1e-14, "{est}");
        let small = mk(0.1, 0.1);
        assert!(estimate_l1_log(&small, &cur, 1.0).is_err());
    }

    #[test]
    fn l2_single_layer_is_neutral() {
        let p = random_params(&NetworkSpec::new(vec![4, 3], true).unwrap(), 1, 1.0);
        let mk = |counts: &[usize]| {
            let pats: Vec<_> = counts
                .iter()
                .map(|&t| {
                    let s = (0..5).map(|i| if i < t { 1 } else { -1 }).collect();
                    crate::network::ActivationPattern::from_signs(s, vec![5]).unwrap()
                })
                .collect();
            ActiveNodeStats::from_patterns(&pats).unwrap()
        };
        let a = mk(&[1, 2, 3]);
        let b = mk(&[0, 4, 4, 5]);
        assert_eq!(estimate_l2(&p, &a, &b, 0.9).unwrap(), 0.9);
        let flat = mk(&[2, 2]);
        assert!(estimate_l2(&net(1), &flat, &a, 1.0).is_err());
    }

    #[test]
    fn l3_permutation_invariant() {
        let p = net(6);
        let tr = data(7, 60);
        let idx: Vec<usize> = (0..60).rev().collect();
        let est = estimate_l3(&p, tr.inputs(), tr.select(&idx).inputs(), 0.5).unwrap();
        assert!((est - 0.5).abs() < 1e-12);
    }

    #[test]
    fn accuracy_and_mae() {
        assert_eq!(estimate_accuracy(1.0, 0.8, AccuracyMode::Inverse).unwrap(), 0.8);
        assert_eq!(estimate_accuracy(2.0, 0.8, AccuracyMode::Inverse).unwrap(), 0.4);
        assert_eq!(estimate_accuracy(2.0, 0.8, AccuracyMode::Direct).unwrap(), 1.0);
        assert_eq!(estimate_accuracy(0.5, 0.9, AccuracyMode::Inverse).unwrap(), 1.0);
        assert!(estimate_accuracy(0.0, 0.8, AccuracyMode::Inverse).is_err());
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[1.5, 2.5, 0.5], &[1.0, 2.0, 0.0]).unwrap(), 0.5);
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn report_row_order() {
        let p = net(8);
        let mut q = p.clone();
        q.scale_weights(1.1);
        let tr = data(9, 80);
        let te = data(10, 40);
        let st = active_node_stats(&q, tr.inputs()).unwrap();
        let se = active_node_stats(&q, te.inputs()).unwrap();
        let r = estimator_report(&EpochEvaluation {
            epoch: 3,
            previous: &p,
            current: &q,
            train_inputs: tr.inputs(),
            test_inputs: te.inputs(),
            train_stats: &st,
            test_stats: &se,
            train_loss: 1.0,
            train_acc: 0.5,
            test_loss: 1.2,
            test_acc: 0.4,
            accuracy_mode: AccuracyMode::Inverse,
        })
        .unwrap();
        assert!(r.est_l1 > 0.0 && r.est_l1_log > 0.0 && r.est_l2 > 0.0 && r.est_l3 > 0.0);
        let row = r.csv_row();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), METRICS_HEADER.split(',').count());
        assert_eq!(fields[0], "3");
        assert_eq!(fields[2], "1.2");
        let mut out = Vec::new();
        write_metrics_csv(&[r.clone()], &mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with(METRICS_HEADER));
        let summary = MaeSummary::from_reports(&[r]).unwrap();
        assert!((summary.loss_baseline - 0.2).abs() < 1e-15);
        assert!(summary.table().contains("l3"));
    }
}
