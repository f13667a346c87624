use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelWeights, Tensor};
use crate::Result;

/// Seeded random initialization: uniform `±1/sqrt(fan_in)` for affine and
/// recurrent parameters, perturbed batch-norm statistics and a random
/// zero-input embedding. Used for latency and equivalence testing, where
/// trained weights are not needed.
pub fn random_weights(config: &ModelConfig, seed: u64) -> Result<ModelWeights> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = BTreeMap::new();
    for spec in config.tensor_specs() {
        let len = spec.len();
        let data: Vec<f32> = if spec.name.ends_with(".bn.scale") || spec.name.ends_with(".bn.running_var") {
            (0..len).map(|_| rng.gen_range(0.5..1.5)).collect()
        } else if spec.name.contains(".bn.") {
            (0..len).map(|_| rng.gen_range(-0.1..0.1)).collect()
        } else {
            let fan_in = if spec.name.starts_with("lstm.") {
                config.lstm_hidden
            } else if spec.shape.len() > 1 {
                spec.shape[1..].iter().product()
            } else {
                // Biases share their layer's fan-in; recovered from the weight spec below.
                0
            };
            let fan_in = if fan_in == 0 { bias_fan_in(config, &spec.name) } else { fan_in };
            let bound = 1.0 / libm::sqrtf(fan_in as f32);
            (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        tensors.insert(spec.name.clone(), Tensor { shape: spec.shape, data });
    }
    let zero_embedding = (0..config.embedding_dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
    ModelWeights::new(config.clone(), zero_embedding, tensors)
}

fn bias_fan_in(config: &ModelConfig, name: &str) -> usize {
    let layer = name.split('.').next().unwrap_or_default();
    let weight_name = alloc::format!("{layer}.weight");
    config
        .tensor_specs()
        .into_iter()
        .find(|s| s.name == weight_name)
        .map(|s| s.shape[1..].iter().product())
        .unwrap_or(1)
}
