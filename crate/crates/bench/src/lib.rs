//! Shared fixtures for the benchmarks in `benches/`.

use tangent_core::data::{synthetic_gaussian, Dataset};
use tangent_core::trainer::init_params;
use tangent_core::{NetworkSpec, Params};

/// Uniformly initialized network with the given layer sizes and `n` Gaussian inputs
/// of matching dimension (at least one per class).
pub fn fixture(layer_sizes: &[usize], n: usize, seed: u64) -> (Params, Dataset) {
    let spec = NetworkSpec::new(layer_sizes.to_vec(), true).expect("valid layer sizes");
    let params = init_params(&spec, seed);
    let classes = *layer_sizes.last().unwrap();
    let classes = classes.clamp(2, n.max(2));
    let data = synthetic_gaussian(layer_sizes[0], classes, n.max(classes), seed).expect("valid dataset");
    (params, data)
}
