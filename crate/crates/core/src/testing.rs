//! Random networks and inputs for tests, benchmarks and the acceptance suite.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::network::{NetworkSpec, Params};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Params with every weight (and bias, when present) drawn from `U(-scale, scale)`.
pub fn random_params(spec: &NetworkSpec, seed: u64, scale: f64) -> Params {
    let mut r = rng(seed);
    random_params_with(spec, &mut r, scale)
}

pub fn random_params_with<R: Rng>(spec: &NetworkSpec, r: &mut R, scale: f64) -> Params {
    let mut p = Params::zeros(spec);
    for w in p.weights_mut() {
        for v in w.as_mut_slice() {
            *v = r.random_range(-scale..=scale);
        }
    }
    if spec.use_bias() {
        for b in p.biases_mut() {
            for v in b.iter_mut() {
                *v = r.random_range(-scale..=scale);
            }
        }
    }
    p
}

pub fn random_input<R: Rng>(r: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| r.random_range(-scale..=scale)).collect()
}

/// A random architecture with `1..=max_hidden_layers` hidden layers whose
/// total path count does not exceed `max_paths`.
pub fn random_spec<R: Rng>(
    r: &mut R,
    max_width: usize,
    max_hidden_layers: usize,
    max_paths: u128,
    use_bias: bool,
) -> NetworkSpec {
    loop {
        let hidden = r.random_range(0..=max_hidden_layers);
        let mut sizes = vec![r.random_range(1..=max_width)];
        for _ in 0..hidden {
            sizes.push(r.random_range(1..=max_width));
        }
        sizes.push(r.random_range(1..=max_width.min(4)));
        let spec = NetworkSpec::new(sizes, use_bias).expect("sizes are positive");
        if spec.path_count() <= max_paths {
            return spec;
        }
    }
}
