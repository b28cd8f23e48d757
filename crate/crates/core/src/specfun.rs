//! Gamma function, Kummer's confluent hypergeometric function `1F1` and
//! absolute moments of a normal distribution.

use std::f64::consts::{E, LN_10, PI};

use crate::{Error, Result};

const TWO_SQRT_E_OVER_PI: f64 = 1.860_382_734_205_265_7;
const LANCZOS_G: f64 = 10.900511;
const LANCZOS_DK: [f64; 11] = [
    2.485_740_891_387_535_5e-5,
    1.051_423_785_817_219_7,
    -3.456_870_972_220_162_5,
    4.512_277_094_668_948,
    -2.982_852_253_235_766_4,
    1.056_397_115_771_267,
    -1.954_287_731_916_458_7e-1,
    1.709_705_434_044_412e-2,
    -5.719_261_174_043_057e-4,
    4.633_994_733_599_057e-6,
    -2.719_949_084_886_077_2e-9,
];

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x.fract() == 0.0
}

fn lanczos_sum(x: f64) -> f64 {
    LANCZOS_DK
        .iter()
        .enumerate()
        .skip(1)
        .fold(LANCZOS_DK[0], |s, (i, &d)| s + d / (x + i as f64 - 1.0))
}

fn lanczos_gamma(x: f64) -> f64 {
    lanczos_sum(x) * TWO_SQRT_E_OVER_PI * ((x - 0.5 + LANCZOS_G) / E).powf(x - 0.5)
}

/// Gamma function.
///
/// Lanczos approximation on `[1, 2)`, upward recursion up to 60 (the bare
/// approximation loses about two digits there), reflection for negative
/// arguments.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::domain("gamma of NaN"));
    }
    if is_nonpositive_integer(x) {
        return Err(Error::domain(format!("gamma has a pole at {x}")));
    }
    if x <= 0.0 {
        return Ok(PI / ((PI * x).sin() * gamma_fn(1.0 - x)?));
    }
    if x < 1.0 {
        return Ok(gamma_fn(x + 1.0)? / x);
    }
    if x > 60.0 {
        return Ok(lanczos_gamma(x));
    }
    let mut y = x;
    let mut prod = 1.0;
    while y >= 2.0 {
        y -= 1.0;
        prod *= y;
    }
    Ok(lanczos_gamma(y) * prod)
}

/// `ln Gamma(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::domain(format!("ln_gamma needs a positive argument, got {x}")));
    }
    if x <= 60.0 {
        return Ok(gamma_fn(x)?.ln());
    }
    Ok((lanczos_sum(x) * TWO_SQRT_E_OVER_PI).ln() + (x - 0.5) * ((x - 0.5 + LANCZOS_G) / E).ln())
}

/// Neumaier's compensated summation.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    fn new(v: f64) -> Self {
        Self { sum: v, comp: 0.0 }
    }

    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }

    fn scale(&mut self, f: f64) {
        self.sum *= f;
        self.comp *= f;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesMethod {
    /// `a` is a nonpositive integer: finite polynomial.
    Polynomial,
    /// Kummer's transformation `e^z 1F1(b - a, b, -z)` made the series finite.
    TransformedPolynomial,
    /// Direct power series.
    Series,
    /// Power series of `1F1(b - a, b, -z)` scaled by `e^z`.
    TransformedSeries,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    /// Number of series terms summed (including the constant term).
    pub terms: usize,
    pub method: SeriesMethod,
}

const SERIES_BASE_CAP: usize = 10_000;
const RESCALE: f64 = 1e250;

fn polynomial(a: f64, b: f64, z: f64) -> (f64, usize) {
    let m = (-a) as usize;
    let mut term = 1.0;
    let mut sum = Compensated::new(1.0);
    for n in 0..m {
        let nf = n as f64;
        term *= (a + nf) / (b + nf) * z / (nf + 1.0);
        sum.add(term);
    }
    (sum.value(), m + 1)
}

/// Power series returned as `(mantissa, ln_scale, terms)` with value `mantissa * e^ln_scale`.
fn scaled_series(a: f64, b: f64, z: f64) -> Result<(f64, f64, usize)> {
    let cap = SERIES_BASE_CAP + (2.0 * z.abs()) as usize;
    let mut term = 1.0f64;
    let mut sum = Compensated::new(1.0);
    let mut ln_scale = 0.0;
    for n in 0..cap {
        let nf = n as f64;
        let ratio = (a + nf) / (b + nf) * z / (nf + 1.0);
        term *= ratio;
        sum.add(term);
        if term.abs() > RESCALE {
            term /= RESCALE;
            sum.scale(1.0 / RESCALE);
            ln_scale += 250.0 * LN_10;
        }
        let next = ((a + nf + 1.0) / (b + nf + 1.0) * z / (nf + 2.0)).abs();
        if next < 0.5 && term.abs() <= f64::EPSILON * 0.25 * sum.value().abs() {
            return Ok((sum.value(), ln_scale, n + 2));
        }
    }
    Err(Error::Convergence {
        terms: cap,
        achieved: (term / sum.value()).abs(),
    })
}

/// Kummer's confluent hypergeometric function of the first kind,
/// `1F1(a; b; z) = sum_n (a)_n / (b)_n z^n / n!` with rising factorials.
pub fn kummer_1f1(a: f64, b: f64, z: f64) -> Result<f64> {
    kummer_1f1_detailed(a, b, z).map(|s| s.value)
}

pub fn kummer_1f1_detailed(a: f64, b: f64, z: f64) -> Result<SeriesValue> {
    let (mantissa, ln_scale, terms, method) = kummer_scaled(a, b, z)?;
    Ok(SeriesValue {
        value: mantissa * ln_scale.exp(),
        terms,
        method,
    })
}

/// `(ln |1F1(a; b; z)|, sign)`, usable where the value itself over- or underflows.
pub fn kummer_1f1_ln(a: f64, b: f64, z: f64) -> Result<(f64, f64)> {
    let (mantissa, ln_scale, _, _) = kummer_scaled(a, b, z)?;
    if mantissa == 0.0 {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    Ok((mantissa.abs().ln() + ln_scale, mantissa.signum()))
}

fn kummer_scaled(a: f64, b: f64, z: f64) -> Result<(f64, f64, usize, SeriesMethod)> {
    if a.is_nan() || b.is_nan() || z.is_nan() {
        return Err(Error::domain("1F1 with NaN argument"));
    }
    if is_nonpositive_integer(b) {
        return Err(Error::domain(format!("1F1 undefined for b = {b}")));
    }
    if is_nonpositive_integer(a) {
        let (value, terms) = polynomial(a, b, z);
        return Ok((value, 0.0, terms, SeriesMethod::Polynomial));
    }
    if z == 0.0 {
        return Ok((1.0, 0.0, 1, SeriesMethod::Series));
    }
    if z < 0.0 {
        let c = b - a;
        if is_nonpositive_integer(c) {
            let (p, terms) = polynomial(c, b, -z);
            return Ok((p, z, terms, SeriesMethod::TransformedPolynomial));
        }
        let (mantissa, ln_scale, terms) = scaled_series(c, b, -z)?;
        return Ok((mantissa, z + ln_scale, terms, SeriesMethod::TransformedSeries));
    }
    let (mantissa, ln_scale, terms) = scaled_series(a, b, z)?;
    Ok((mantissa, ln_scale, terms, SeriesMethod::Series))
}

/// `E|X|^order` for `X ~ N(mu, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentQuery {
    order: f64,
    mu: f64,
    sigma: f64,
}

impl MomentQuery {
    pub fn new(order: f64, mu: f64, sigma: f64) -> Result<Self> {
        if !(order >= 0.0) || !order.is_finite() {
            return Err(Error::domain(format!("moment order must be >= 0, got {order}")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
            return Err(Error::domain(format!(
                "need finite mu and sigma > 0, got mu = {mu}, sigma = {sigma}"
            )));
        }
        Ok(Self { order, mu, sigma })
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// `sigma^k 2^{k/2} Gamma((k+1)/2) / sqrt(pi) * 1F1(-k/2, 1/2, -mu^2 / (2 sigma^2))`.
pub fn normal_abs_moment(q: MomentQuery) -> Result<f64> {
    let k = q.order;
    let z = -(q.mu * q.mu) / (2.0 * q.sigma * q.sigma);
    let hyp = kummer_1f1(-k / 2.0, 0.5, z)?;
    Ok(q.sigma.powf(k) * 2f64.powf(k / 2.0) * gamma_fn((k + 1.0) / 2.0)? / PI.sqrt() * hyp)
}
