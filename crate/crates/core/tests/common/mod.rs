#![allow(dead_code)]

use deepesn::{Activation, DeepReservoir, InitConfig};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Literal per-entry evaluation of the layer updates on dense copies of the
/// weights, with no shared code path beyond reading the matrices.
pub fn naive_run(res: &DeepReservoir, inputs: &[DVector<f64>]) -> Vec<Vec<Vec<f64>>> {
    let layers: Vec<_> = res
        .layers()
        .iter()
        .map(|l| {
            (
                l.leak_rate(),
                l.activation(),
                l.input_weights().to_dense(),
                l.recurrent_weights().to_dense(),
                l.bias().cloned(),
            )
        })
        .collect();
    let mut x: Vec<Vec<f64>> = res.layer_dims().iter().map(|&n| vec![0.0; n]).collect();
    let mut out = Vec::with_capacity(inputs.len());
    for u in inputs {
        let mut below: Vec<f64> = u.iter().copied().collect();
        for (i, (a, act, w_in, w_hat, b)) in layers.iter().enumerate() {
            let n = w_hat.nrows();
            let mut next = vec![0.0; n];
            for j in 0..n {
                let mut s = b.as_ref().map_or(0.0, |b| b[j]);
                for k in 0..w_in.ncols() {
                    s += w_in[(j, k)] * below[k];
                }
                for k in 0..n {
                    s += w_hat[(j, k)] * x[i][k];
                }
                let f = match act {
                    Activation::Tanh => s.tanh(),
                    Activation::Identity => s,
                };
                next[j] = (1.0 - a) * x[i][j] + f;
            }
            x[i] = next.clone();
            below = next;
        }
        out.push(x.clone());
    }
    out
}

pub fn noise(len: usize, dim: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-1.0..=1.0)))
        .collect()
}

/// A random but valid configuration drawn from `seed`.
pub fn random_config(seed: u64, max_layers: usize, units: std::ops::RangeInclusive<usize>) -> InitConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n_layers = rng.random_range(1..=max_layers);
    let leak: f64 = rng.random_range(0.2..=1.0);
    let activation = if rng.random_bool(0.8) {
        Activation::Tanh
    } else {
        Activation::Identity
    };
    // linear layers must stay contractive to keep states bounded
    let top = if activation == Activation::Identity { 0.95 } else { 1.2 };
    InitConfig {
        n_layers,
        units_per_layer: rng.random_range(units),
        input_dim: rng.random_range(1..=3),
        leak_rates: leak.into(),
        spectral_radius_targets: rng.random_range((1.0 - leak + 0.05)..=top).into(),
        input_scaling: rng.random_range(0.1..=1.0),
        inter_layer_scaling: rng.random_range(0.1..=1.0),
        bias: rng.random_bool(0.5),
        recurrent_density: if rng.random_bool(0.5) {
            1.0
        } else {
            rng.random_range(0.2..=0.9)
        },
        activation,
        master_seed: seed,
        ..Default::default()
    }
}
