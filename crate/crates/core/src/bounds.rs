//! Closed-form upper bounds on the Frobenius norm of tangent sensitivity.
//!
//! The layer-maximum bound needs only the weights. The active-node bound
//! additionally models the number of active hidden neurons `T(x)` as a normal
//! variable and uses its absolute moment of order `k - 1`; it is evaluated in
//! log space because the individual factors overflow for deep networks.

use std::f64::consts::{LN_10, PI};

use num_bigint::BigUint;
use serde::Serialize;

use crate::network::{NetworkSpec, Params};
use crate::region_stats::ActiveNodeStats;
use crate::specfun::{kummer_1f1_ln, ln_gamma, normal_abs_moment, MomentQuery};
use crate::{Error, Result};

/// Named quantities entering the bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundComponents {
    /// Weight count (biases are not part of the biasless bound).
    pub n_theta: usize,
    pub d_in: usize,
    pub k: usize,
    /// Widest layer among layers `1..k`; the input layer is not counted.
    pub n_max: usize,
    pub w_max: f64,
    pub layer_w_max: Vec<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub eq2: Option<Eq2Factors>,
    pub eq2_proof_variant: Option<Eq2Factors>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    /// Loose layer-maximum bound using the global maximum weight.
    pub eq1_value: f64,
    /// Tight layer-maximum bound; `None` when some layer is all zero.
    pub eq1_tight_value: Option<f64>,
    pub ln_eq1_value: f64,
    pub ln_eq1_tight_value: Option<f64>,
    pub eq2_value: Option<f64>,
    pub log10_eq2_value: Option<f64>,
    pub eq2_proof_variant_value: Option<f64>,
    pub log10_eq2_proof_variant_value: Option<f64>,
    /// Sample mean of `(T/k)^k`, the path-count proxy the active-node bound models.
    pub mean_normalized_path_mass: Option<f64>,
    pub components: BoundComponents,
}

/// Layer-maximum bound: `(tight, loose)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eq1 {
    pub tight: Option<f64>,
    pub loose: f64,
    pub ln_tight: Option<f64>,
    pub ln_loose: f64,
}

pub fn bound_eq1(params: &Params) -> Eq1 {
    let spec = params.spec();
    let k = spec.depth() as f64;
    let layer_max = params.layer_max_abs();
    let ln_base = (spec.weight_count() as f64).ln()
        + (spec.input_dim() as f64).ln()
        + 2.0 * (k - 1.0) * (spec.max_width() as f64).ln();
    let w_max = layer_max.iter().copied().fold(0.0, f64::max);
    let ln_loose = ln_base + 2.0 * (k - 1.0) * w_max.ln();
    // k = 1 leaves an empty power: (N_max w_max)^0 = 1 even for zero weights.
    let ln_loose = if k == 1.0 { ln_base } else { ln_loose };
    let ln_tight = if layer_max.iter().all(|&w| w > 0.0) {
        let ln_prod: f64 = layer_max.iter().map(|w| w.ln()).sum();
        let ln_min = layer_max.iter().copied().fold(f64::INFINITY, f64::min).ln();
        Some(ln_base + 2.0 * (ln_prod - ln_min))
    } else {
        None
    };
    Eq1 {
        tight: ln_tight.map(f64::exp),
        loose: ln_loose.exp(),
        ln_tight,
        ln_loose,
    }
}

/// `ln` of the tight layer-maximum bound; errors on an all-zero layer.
pub fn ln_eq1_tight(params: &Params) -> Result<f64> {
    bound_eq1(params)
        .ln_tight
        .ok_or_else(|| Error::domain("a layer has no nonzero weight; the tight bound is undefined"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Eq2Variant {
    /// Moment of order `k - 1`: `Gamma(k/2)` and `1F1(-(k-1)/2, ..)`.
    #[default]
    Stated,
    /// Moment of order `k`: `Gamma((k+1)/2)` and `1F1(-k/2, ..)`.
    ProofVariant,
}

/// Inputs of the active-node bound, independent of a concrete network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eq2Inputs {
    pub n_theta: f64,
    pub d_in: f64,
    pub k: usize,
    pub mu: f64,
    pub sigma: f64,
    pub layer_w_max: Vec<f64>,
}

impl Eq2Inputs {
    pub fn from_params(params: &Params, mu: f64, sigma: f64) -> Self {
        let spec = params.spec();
        Self {
            n_theta: spec.weight_count() as f64,
            d_in: spec.input_dim() as f64,
            k: spec.depth(),
            mu,
            sigma,
            layer_w_max: params.layer_max_abs(),
        }
    }
}

/// Natural-log factors of the active-node bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eq2Factors {
    pub moment_order: f64,
    pub ln_prefactor: f64,
    pub ln_sigma_power: f64,
    pub ln_two_power: f64,
    pub ln_k_power: f64,
    pub ln_gamma_sq: f64,
    pub ln_pi: f64,
    /// `ln 1F1(..)^2`.
    pub ln_psi_sq: f64,
    pub ln_weight_product_sq: f64,
    pub ln_value: f64,
}

impl Eq2Factors {
    pub fn value(&self) -> f64 {
        self.ln_value.exp()
    }

    pub fn log10_value(&self) -> f64 {
        self.ln_value / LN_10
    }
}

/// `N_theta d_in sigma^{2p} 2^p / k^{2k} Gamma((p+1)/2)^2 / pi 1F1(-p/2, 1/2, -mu^2/(2 sigma^2))^2 (prod w_max_i)^2`
/// with `p = k - 1` (stated form) or `p = k` (proof variant).
pub fn eq2_factors(inputs: &Eq2Inputs, variant: Eq2Variant) -> Result<Eq2Factors> {
    let Eq2Inputs {
        n_theta,
        d_in,
        k,
        mu,
        sigma,
        ref layer_w_max,
    } = *inputs;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!("active-node std must be positive, got {sigma}")));
    }
    if !mu.is_finite() {
        return Err(Error::domain("active-node mean is not finite"));
    }
    if k == 0 || layer_w_max.len() != k {
        return Err(Error::shape(format!("{} layer maxima for depth {k}", layer_w_max.len())));
    }
    let kf = k as f64;
    let p = match variant {
        Eq2Variant::Stated => kf - 1.0,
        Eq2Variant::ProofVariant => kf,
    };
    let ln_prefactor = n_theta.ln() + d_in.ln();
    let ln_sigma_power = 2.0 * p * sigma.ln();
    let ln_two_power = p * 2f64.ln();
    let ln_k_power = -2.0 * kf * kf.ln();
    let ln_gamma_sq = 2.0 * ln_gamma((p + 1.0) / 2.0)?;
    let ln_pi = -PI.ln();
    let (ln_psi, _) = kummer_1f1_ln(-p / 2.0, 0.5, -(mu * mu) / (2.0 * sigma * sigma))?;
    let ln_psi_sq = 2.0 * ln_psi;
    let ln_weight_product_sq = 2.0 * layer_w_max.iter().map(|w| w.abs().ln()).sum::<f64>();
    let ln_value = ln_prefactor
        + ln_sigma_power
        + ln_two_power
        + ln_k_power
        + ln_gamma_sq
        + ln_pi
        + ln_psi_sq
        + ln_weight_product_sq;
    Ok(Eq2Factors {
        moment_order: p,
        ln_prefactor,
        ln_sigma_power,
        ln_two_power,
        ln_k_power,
        ln_gamma_sq,
        ln_pi,
        ln_psi_sq,
        ln_weight_product_sq,
        ln_value,
    })
}

/// Active-node bound with `mu`, `sigma` fitted from `stats`.
pub fn bound_eq2(params: &Params, stats: &ActiveNodeStats) -> Result<f64> {
    Ok(eq2_factors(&Eq2Inputs::from_params(params, stats.mu(), stats.sigma()), Eq2Variant::Stated)?.value())
}

pub fn bound_eq2_proof_variant(params: &Params, stats: &ActiveNodeStats) -> Result<f64> {
    Ok(eq2_factors(
        &Eq2Inputs::from_params(params, stats.mu(), stats.sigma()),
        Eq2Variant::ProofVariant,
    )?
    .value())
}

/// Every bound with its components. The active-node bounds are filled in
/// when statistics with positive spread are supplied.
pub fn bound_report(params: &Params, stats: Option<&ActiveNodeStats>) -> Result<BoundReport> {
    let spec = params.spec();
    let eq1 = bound_eq1(params);
    let layer_w_max = params.layer_max_abs();
    let (eq2, proof, path_mass) = match stats {
        Some(s) if s.sigma() > 0.0 => {
            let inputs = Eq2Inputs::from_params(params, s.mu(), s.sigma());
            (
                Some(eq2_factors(&inputs, Eq2Variant::Stated)?),
                Some(eq2_factors(&inputs, Eq2Variant::ProofVariant)?),
                Some(s.mean_normalized_power(spec.depth())),
            )
        }
        Some(s) => (None, None, Some(s.mean_normalized_power(spec.depth()))),
        None => (None, None, None),
    };
    Ok(BoundReport {
        eq1_value: eq1.loose,
        eq1_tight_value: eq1.tight,
        ln_eq1_value: eq1.ln_loose,
        ln_eq1_tight_value: eq1.ln_tight,
        eq2_value: eq2.as_ref().map(Eq2Factors::value),
        log10_eq2_value: eq2.as_ref().map(Eq2Factors::log10_value),
        eq2_proof_variant_value: proof.as_ref().map(Eq2Factors::value),
        log10_eq2_proof_variant_value: proof.as_ref().map(Eq2Factors::log10_value),
        mean_normalized_path_mass: path_mass,
        components: BoundComponents {
            n_theta: spec.weight_count(),
            d_in: spec.input_dim(),
            k: spec.depth(),
            n_max: spec.max_width(),
            w_max: layer_w_max.iter().copied().fold(0.0, f64::max),
            layer_w_max,
            mu: stats.map(ActiveNodeStats::mu),
            sigma: stats.map(ActiveNodeStats::sigma),
            eq2,
            eq2_proof_variant: proof,
        },
    })
}

/// Path-count proxy `E[(T/k)^k]`: sample mean against the normal model's moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathMassDiagnostic {
    pub sample_mean: f64,
    pub normal_model: f64,
}

pub fn path_mass_diagnostic(stats: &ActiveNodeStats, k: usize) -> Result<PathMassDiagnostic> {
    let kf = k as f64;
    let normal_model = if stats.sigma() > 0.0 {
        normal_abs_moment(MomentQuery::new(kf, stats.mu(), stats.sigma())?)? / kf.powi(k as i32)
    } else {
        (stats.mu() / kf).powi(k as i32)
    };
    Ok(PathMassDiagnostic {
        sample_mean: stats.mean_normalized_power(k),
        normal_model,
    })
}

/// Concentration of the sample mean of Frobenius-squared sensitivities:
/// `exp(-eps^2 T / (2 sens_max^2))`.
pub fn hoeffding_tail(epsilon: f64, samples: usize, sens_max_f: f64) -> Result<f64> {
    if !(epsilon >= 0.0) || samples == 0 || !(sens_max_f > 0.0) {
        return Err(Error::domain(format!(
            "need epsilon >= 0, T >= 1 and sens_max > 0 (got {epsilon}, {samples}, {sens_max_f})"
        )));
    }
    Ok((-0.5 * epsilon * epsilon * samples as f64 / (sens_max_f * sens_max_f)).exp())
}

/// `prod_{hidden i} floor(n_i / d_in)^d_in`, the region-count formula for
/// single-output networks.
pub fn max_region_count(spec: &NetworkSpec) -> BigUint {
    let d_in = spec.input_dim();
    spec.hidden_sizes()
        .iter()
        .map(|&n| BigUint::from(n / d_in).pow(d_in as u32))
        .product()
}
