//! Seeded construction of [`DeepReservoir`]s.
//!
//! All weights are drawn uniformly from `[-1, 1]` and then scaled. Recurrent
//! matrices are masked to the configured density and rescaled so that the
//! linearisation of each layer around the origin, `(1 - a) I + Ŵ`, has the
//! requested spectral radius.
//!
//! Each layer/stream pair gets its own ChaCha8 generator seeded through
//! [`derive_layer_seed`], so adding a layer on top never changes the layers
//! below it.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reservoir::{Activation, DeepReservoir, LayerSpec};
use crate::weights::{CsrMatrix, Weights};

/// Recurrent matrices whose spectral radius falls below this are redrawn.
pub const DEGENERATE_RADIUS: f64 = 1e-12;
/// Draw attempts per layer before giving up on a degenerate recurrent matrix.
pub const MAX_DRAW_ATTEMPTS: u32 = 8;

/// A hyperparameter that is either shared by all layers or given per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerLayer {
    Shared(f64),
    Each(Vec<f64>),
}

impl PerLayer {
    /// Value for layer `i`, assuming [`PerLayer::resolve`] already validated the length.
    pub fn get(&self, i: usize) -> f64 {
        match self {
            PerLayer::Shared(v) => *v,
            PerLayer::Each(v) => v[i],
        }
    }

    pub fn resolve(&self, n_layers: usize, name: &str) -> Result<Vec<f64>> {
        match self {
            PerLayer::Shared(v) => Ok(vec![*v; n_layers]),
            PerLayer::Each(v) if v.len() == n_layers => Ok(v.clone()),
            PerLayer::Each(v) => Err(Error::Config(format!(
                "{name}: {} values given for {n_layers} layers",
                v.len()
            ))),
        }
    }
}

impl From<f64> for PerLayer {
    fn from(v: f64) -> Self {
        PerLayer::Shared(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub n_layers: usize,
    pub units_per_layer: usize,
    pub input_dim: usize,
    pub leak_rates: PerLayer,
    pub spectral_radius_targets: PerLayer,
    /// Scale of the input-to-first-layer weights.
    pub input_scaling: f64,
    /// Scale of the layer-to-layer weights.
    pub inter_layer_scaling: f64,
    pub bias_scaling: f64,
    /// When false, layers are built without a bias vector at all.
    pub bias: bool,
    /// Fraction of nonzero recurrent entries, in `(0, 1]`.
    pub recurrent_density: f64,
    pub activation: Activation,
    pub master_seed: u64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            n_layers: 1,
            units_per_layer: 100,
            input_dim: 1,
            leak_rates: PerLayer::Shared(1.0),
            spectral_radius_targets: PerLayer::Shared(0.9),
            input_scaling: 1.0,
            inter_layer_scaling: 1.0,
            bias_scaling: 0.1,
            bias: true,
            recurrent_density: 1.0,
            activation: Activation::Tanh,
            master_seed: 0,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        let count = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::Config(format!("{name} must be at least 1")))
            } else {
                Ok(())
            }
        };
        count("n_layers", self.n_layers)?;
        count("units_per_layer", self.units_per_layer)?;
        count("input_dim", self.input_dim)?;
        if !(self.recurrent_density > 0.0 && self.recurrent_density <= 1.0) {
            return Err(Error::Config(format!(
                "recurrent_density {} outside (0, 1]",
                self.recurrent_density
            )));
        }
        for (name, v) in [
            ("input_scaling", self.input_scaling),
            ("inter_layer_scaling", self.inter_layer_scaling),
            ("bias_scaling", self.bias_scaling),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        let leaks = self.leak_rates.resolve(self.n_layers, "leak_rates")?;
        let targets = self
            .spectral_radius_targets
            .resolve(self.n_layers, "spectral_radius_targets")?;
        for (i, (&a, &rho)) in leaks.iter().zip(&targets).enumerate() {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("leak_rates[{i}] = {a} outside [0, 1]")));
            }
            if !(rho.is_finite() && rho > 0.0) {
                return Err(Error::Config(format!(
                    "spectral_radius_targets[{i}] = {rho} must be positive"
                )));
            }
            // ρ((1 - a) I + cŴ) starts at 1 - a for c = 0 and only grows past it.
            if rho <= 1.0 - a {
                return Err(Error::Config(format!(
                    "spectral_radius_targets[{i}] = {rho} is not reachable with leak rate {a}: \
                     it must exceed 1 - a = {}",
                    1.0 - a
                )));
            }
        }
        Ok(())
    }
}

/// Random streams drawn per layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeedStream {
    Input = 1,
    Recurrent = 2,
    Bias = 3,
}

/// SplitMix64 finaliser (Steele, Lea & Flood); a bijection on `u64`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_seed(master: u64, layer: usize, stream: SeedStream, attempt: u32) -> u64 {
    let tag = ((layer as u64) << 16) | ((attempt as u64) << 8) | stream as u64;
    splitmix64(splitmix64(master) ^ splitmix64(tag))
}

/// Seed for one (layer, stream) generator:
/// `splitmix64(splitmix64(master) ^ splitmix64(layer << 16 | stream))`, with
/// stream tags 1 (input), 2 (recurrent), 3 (bias) and 0-based layer indices.
///
/// For a fixed master seed distinct `(layer, stream)` pairs always map to
/// distinct seeds, since every step is a bijection.
pub fn derive_layer_seed(master: u64, layer: usize, stream: SeedStream) -> u64 {
    derive_seed(master, layer, stream, 0)
}

/// Eigenvalues of a square matrix via the real Schur decomposition.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::Dimension {
            context: "square matrix columns",
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite matrix entry".into()));
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 10_000 * m.nrows().max(1))
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Smallest `c >= 0` with `max_k |keep + c λ_k| = target`, given `keep < target`.
///
/// Each `|keep + c λ|²` is a convex quadratic in `c` that is below `target²`
/// at `c = 0`, so it crosses `target²` exactly once for `c > 0`; the first
/// eigenvalue to cross fixes the spectral radius.
fn radius_scale(eigs: &[Complex<f64>], keep: f64, target: f64) -> f64 {
    let mut best = f64::INFINITY;
    for z in eigs {
        let quad = z.norm_sqr();
        if quad == 0.0 {
            continue;
        }
        let half_lin = keep * z.re;
        let rest = target * target - keep * keep;
        let disc = (half_lin * half_lin + quad * rest).sqrt();
        let c = if half_lin > 0.0 {
            rest / (half_lin + disc)
        } else {
            (disc - half_lin) / quad
        };
        best = best.min(c);
    }
    best
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    // row-major draw order so the stream is independent of nalgebra's storage
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = scale * rng.random_range(-1.0..=1.0);
        }
    }
    m
}

fn draw_recurrent(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Result<Weights> {
    if density >= 1.0 {
        return Ok(Weights::Dense(uniform_matrix(rng, n, n, 1.0)));
    }
    let mut trip = Vec::new();
    for r in 0..n {
        for c in 0..n {
            let keep = rng.random::<f64>() < density;
            let value: f64 = rng.random_range(-1.0..=1.0);
            if keep {
                trip.push((r, c, value));
            }
        }
    }
    Ok(Weights::Sparse(CsrMatrix::from_sorted_triplets(n, n, &trip)?))
}

fn build_layer(cfg: &InitConfig, layer: usize, feed_dim: usize, leak: f64, target: f64) -> Result<LayerSpec> {
    let n = cfg.units_per_layer;
    let scale = if layer == 0 {
        cfg.input_scaling
    } else {
        cfg.inter_layer_scaling
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_layer_seed(cfg.master_seed, layer, SeedStream::Input));
    let input = uniform_matrix(&mut rng, n, feed_dim, scale);

    let bias = if cfg.bias {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_layer_seed(cfg.master_seed, layer, SeedStream::Bias));
        Some(DVector::from_fn(n, |_, _| {
            cfg.bias_scaling * rng.random_range(-1.0..=1.0)
        }))
    } else {
        None
    };

    for attempt in 0..MAX_DRAW_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, layer, SeedStream::Recurrent, attempt));
        let mut recurrent = draw_recurrent(&mut rng, n, cfg.recurrent_density)?;
        let eigs = eigenvalues(&recurrent.to_dense())?;
        let radius = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if radius < DEGENERATE_RADIUS {
            continue;
        }
        recurrent.scale(radius_scale(&eigs, 1.0 - leak, target));
        return LayerSpec::new(leak, cfg.activation, input, recurrent, bias);
    }
    Err(Error::Numerical(format!(
        "recurrent matrix of layer {layer} degenerate after {MAX_DRAW_ATTEMPTS} draws"
    )))
}

/// Builds a reservoir from `cfg`. Bitwise deterministic in the config.
pub fn build_reservoir(cfg: &InitConfig) -> Result<DeepReservoir> {
    cfg.validate()?;
    let leaks = cfg.leak_rates.resolve(cfg.n_layers, "leak_rates")?;
    let targets = cfg
        .spectral_radius_targets
        .resolve(cfg.n_layers, "spectral_radius_targets")?;
    let mut layers = Vec::with_capacity(cfg.n_layers);
    let mut feed = cfg.input_dim;
    for i in 0..cfg.n_layers {
        let layer = build_layer(cfg, i, feed, leaks[i], targets[i])?;
        feed = layer.units();
        layers.push(layer);
    }
    DeepReservoir::new(cfg.input_dim, layers)
}

/// `(1 - a) I + Ŵ` for one layer, the layer map linearised at the origin
/// (exactly the layer's Jacobian for identity activation).
pub fn linearized_layer_map(layer: &LayerSpec) -> DMatrix<f64> {
    let mut m = layer.recurrent_weights().to_dense();
    for i in 0..m.nrows() {
        m[(i, i)] += 1.0 - layer.leak_rate();
    }
    m
}

/// Rescales every layer's recurrent weights so that `ρ((1 - a) I + Ŵ)` hits
/// the given per-layer targets.
pub fn rescale_spectral_radius(res: &mut DeepReservoir, targets: &PerLayer) -> Result<()> {
    let targets = targets.resolve(res.n_layers(), "spectral radius targets")?;
    for (layer, &target) in res.layers_mut().iter_mut().zip(&targets) {
        let keep = 1.0 - layer.leak_rate();
        if target <= keep {
            return Err(Error::Config(format!("target {target} must exceed 1 - leak = {keep}")));
        }
        let eigs = eigenvalues(&layer.recurrent_weights().to_dense())?;
        if eigs.iter().all(|z| z.norm() < DEGENERATE_RADIUS) {
            return Err(Error::Numerical("cannot rescale a nilpotent recurrent matrix".into()));
        }
        let c = radius_scale(&eigs, keep, target);
        layer.recurrent_weights_mut().scale(c);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_of_simple_matrices() {
        assert!((spectral_radius(&DMatrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-15);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.9]));
        assert!((spectral_radius(&d).unwrap() - 0.9).abs() < 1e-15);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        assert!((spectral_radius(&rot).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(
            spectral_radius(&DMatrix::zeros(2, 3)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn radius_scale_hits_target_with_leak() {
        let eigs = [Complex::new(0.3, 0.4), Complex::new(-0.5, 0.0), Complex::new(0.1, -0.2)];
        for &(keep, target) in &[(0.0, 0.9), (0.5, 0.9), (0.7, 1.3), (0.2, 0.25)] {
            let c = radius_scale(&eigs, keep, target);
            let r = eigs
                .iter()
                .map(|z| (Complex::new(keep, 0.0) + z * c).norm())
                .fold(0.0, f64::max);
            assert!((r - target).abs() < 1e-14, "keep={keep} target={target} r={r}");
        }
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        let a = derive_layer_seed(42, 0, SeedStream::Input);
        assert_eq!(a, derive_layer_seed(42, 0, SeedStream::Input));
        assert_ne!(a, derive_layer_seed(42, 1, SeedStream::Input));
        assert_ne!(a, derive_layer_seed(42, 0, SeedStream::Recurrent));
        assert_ne!(a, derive_layer_seed(43, 0, SeedStream::Input));
    }

    #[test]
    fn config_validation() {
        let ok = InitConfig::default();
        assert!(ok.validate().is_ok());
        let bad = |f: &dyn Fn(&mut InitConfig)| {
            let mut c = InitConfig::default();
            f(&mut c);
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        };
        bad(&|c| c.n_layers = 0);
        bad(&|c| c.units_per_layer = 0);
        bad(&|c| c.recurrent_density = 0.0);
        bad(&|c| c.recurrent_density = 1.5);
        bad(&|c| c.input_scaling = -1.0);
        bad(&|c| c.bias_scaling = f64::NAN);
        bad(&|c| c.leak_rates = PerLayer::Shared(1.2));
        bad(&|c| c.spectral_radius_targets = PerLayer::Shared(0.0));
        bad(&|c| c.spectral_radius_targets = PerLayer::Each(vec![0.9, 0.9]));
        bad(&|c| {
            c.leak_rates = PerLayer::Shared(0.1);
            c.spectral_radius_targets = PerLayer::Shared(0.8);
        });
    }

    #[test]
    fn no_bias_when_disabled() {
        let cfg = InitConfig {
            bias: false,
            units_per_layer: 4,
            n_layers: 2,
            ..Default::default()
        };
        let res = build_reservoir(&cfg).unwrap();
        assert!(res.layers().iter().all(|l| l.bias().is_none()));
    }

    #[test]
    fn degenerate_single_unit_sparse_layer_is_redrawn_or_rejected() {
        // One unit at density 0.05: most draws are empty, some attempt should succeed.
        let mut successes = 0;
        for seed in 0..20 {
            let cfg = InitConfig {
                units_per_layer: 1,
                recurrent_density: 0.05,
                master_seed: seed,
                ..Default::default()
            };
            match build_reservoir(&cfg) {
                Ok(res) => {
                    successes += 1;
                    let r = spectral_radius(&linearized_layer_map(&res.layers()[0])).unwrap();
                    assert!((r - 0.9).abs() < 1e-12);
                }
                Err(e) => assert!(matches!(e, Error::Numerical(_))),
            }
        }
        assert!(
            successes < 20,
            "density 0.05 on one unit should sometimes exhaust the retries"
        );
    }
}
