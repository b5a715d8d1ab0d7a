//! Dynamics diagnostics for deep reservoirs.
//!
//! * [`esp_convergence_test`]: do two runs from different initial states
//!   forget where they started?
//! * [`global_jacobian`] / [`lyapunov_exponents`]: local Lyapunov spectrum by
//!   QR re-orthonormalisation along a driven trajectory.
//! * [`spectral_profile`]: per-layer averaged magnitude spectra (Hann-windowed
//!   Welch segments) and their centroids.
//! * [`state_entropy`]: per-layer Gaussian differential entropy of unit
//!   activations.
//! * [`select_depth`]: grows the stack until the top layer's spectral
//!   centroid stops moving.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::init::{build_reservoir, InitConfig, PerLayer};
use crate::reservoir::{DeepReservoir, GlobalState, StateTrajectory};

/// Floor (nats/step) applied to each per-step log stretch factor, so that
/// collapsed directions (e.g. nilpotent layers) give finite exponents.
pub const LYAPUNOV_FLOOR: f64 = -50.0;
/// Welch segment length used when none is given.
pub const DEFAULT_WINDOW: usize = 256;
/// Minimum number of post-washout samples for [`state_entropy`].
pub const MIN_ENTROPY_SAMPLES: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EspReport {
    /// Euclidean distance between the two global states after each step.
    pub distance_curve: Vec<f64>,
    pub final_distance: f64,
    pub tolerance: f64,
    pub converged: bool,
}

/// Drives the reservoir with the same input from `s1` and `s2` and records
/// how far apart the global states stay.
pub fn esp_convergence_test(
    res: &DeepReservoir,
    input: &[DVector<f64>],
    s1: &GlobalState,
    s2: &GlobalState,
    tol: f64,
) -> Result<EspReport> {
    if input.is_empty() {
        return Err(Error::Data("ESP test needs a non-empty input".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!("ESP tolerance {tol} must be positive")));
    }
    let mut a = s1.clone();
    let mut b = s2.clone();
    let mut distance_curve = Vec::with_capacity(input.len());
    for u in input {
        a = res.step(u, &a)?;
        b = res.step(u, &b)?;
        let d = a
            .layers()
            .iter()
            .zip(b.layers())
            .map(|(x, y)| (x - y).norm_squared())
            .sum::<f64>()
            .sqrt();
        distance_curve.push(d);
    }
    let final_distance = *distance_curve.last().expect("non-empty input");
    Ok(EspReport {
        converged: final_distance < tol,
        final_distance,
        tolerance: tol,
        distance_curve,
    })
}

/// Jacobian `∂x(t)/∂x(t-1)` of one pipeline step, plus the new state.
fn jacobian_and_step(res: &DeepReservoir, prev: &GlobalState, u: &DVector<f64>) -> Result<(DMatrix<f64>, GlobalState)> {
    let next = res.step(u, prev)?;
    let n = res.total_units();
    let mut jac = DMatrix::zeros(n, n);
    let mut offset = 0;
    let mut below_offset = 0;
    for (i, layer) in res.layers().iter().enumerate() {
        let units = layer.units();
        let feed = if i == 0 { u } else { next.layer(i - 1) };
        let pre = layer.pre_activation(feed, prev.layer(i))?;
        let slope = pre.map(|p| layer.activation().derivative(p));

        // A = (1 - a) I + D Ŵ
        let mut a = layer.recurrent_weights().to_dense();
        for (r, mut row) in a.row_iter_mut().enumerate() {
            row *= slope[r];
        }
        for d in 0..units {
            a[(d, d)] += 1.0 - layer.leak_rate();
        }
        jac.view_mut((offset, offset), (units, units)).copy_from(&a);

        if i > 0 {
            // B = D W, applied to the block row of the layer below.
            let mut b = layer.input_weights().to_dense();
            for (r, mut row) in b.row_iter_mut().enumerate() {
                row *= slope[r];
            }
            let below_units = res.layers()[i - 1].units();
            let below_row = jac.view((below_offset, 0), (below_units, offset)).into_owned();
            let block = b * below_row;
            jac.view_mut((offset, 0), (units, offset)).copy_from(&block);
        }
        below_offset = offset;
        offset += units;
    }
    Ok((jac, next))
}

/// Jacobian of the full within-step pipeline with respect to the previous
/// global state. Block lower-triangular by construction.
pub fn global_jacobian(res: &DeepReservoir, state_prev: &GlobalState, u: &DVector<f64>) -> Result<DMatrix<f64>> {
    Ok(jacobian_and_step(res, state_prev, u)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    /// Exponents in nats/step, sorted descending.
    pub exponents: Vec<f64>,
    /// Maximum local Lyapunov exponent (first entry of `exponents`).
    pub mlle: f64,
    pub steps_used: usize,
}

/// Local Lyapunov spectrum from the zero state. The first `warmup` inputs
/// align the orthonormal frame without contributing; the next `steps`
/// inputs are averaged.
pub fn lyapunov_exponents(
    res: &DeepReservoir,
    input: &[DVector<f64>],
    warmup: usize,
    steps: usize,
) -> Result<LyapunovReport> {
    lyapunov_exponents_from(res, input, &res.zero_state(), warmup, steps)
}

pub fn lyapunov_exponents_from(
    res: &DeepReservoir,
    input: &[DVector<f64>],
    initial: &GlobalState,
    warmup: usize,
    steps: usize,
) -> Result<LyapunovReport> {
    if steps < 100 {
        return Err(Error::Config(format!(
            "Lyapunov averaging needs at least 100 steps, got {steps}"
        )));
    }
    if input.len() < warmup + steps {
        return Err(Error::Data(format!(
            "input has {} steps, need warmup {warmup} + {steps}",
            input.len()
        )));
    }
    let n = res.total_units();
    let mut frame = DMatrix::<f64>::identity(n, n);
    let mut sums = vec![0.0; n];
    let mut state = initial.clone();
    for (t, u) in input[..warmup + steps].iter().enumerate() {
        let (jac, next) = jacobian_and_step(res, &state, u)?;
        state = next;
        // below this a diagonal entry is roundoff from an exactly zero direction
        let resolution = n as f64 * f64::EPSILON * jac.norm();
        let qr = (jac * &frame).qr();
        let r = qr.r();
        let diag: Vec<f64> = (0..n)
            .map(|i| r[(i, i)].abs())
            .map(|d| if d <= resolution { 0.0 } else { d })
            .collect();
        if diag.iter().any(|d| !d.is_finite()) || !state.is_finite() {
            return Err(Error::NonFiniteGrowth { step: t });
        }
        frame = qr.q();
        if t >= warmup {
            for (s, d) in sums.iter_mut().zip(&diag) {
                *s += d.ln().max(LYAPUNOV_FLOOR);
            }
        }
    }
    let mut exponents: Vec<f64> = sums.iter().map(|s| s / steps as f64).collect();
    exponents.sort_by(|a, b| b.total_cmp(a));
    Ok(LyapunovReport {
        mlle: exponents[0],
        exponents,
        steps_used: steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    /// Amplitude-weighted mean frequency per layer, cycles/step in `[0, 0.5]`.
    pub per_layer_centroid: Vec<f64>,
    /// Averaged magnitude spectrum per layer, bins `0..=window/2`.
    pub per_layer_spectrum: Vec<Vec<f64>>,
    pub window: usize,
    pub probe_description: String,
}

/// Welch-style magnitude spectrum estimator with a fixed segment length.
pub struct SpectrumEstimator {
    window: usize,
    taper: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl SpectrumEstimator {
    pub fn new(window: usize) -> Result<Self> {
        if window < 4 || !window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "spectral window {window} must be even and at least 4"
            )));
        }
        // periodic Hann
        let taper = (0..window)
            .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / window as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(window);
        Ok(Self { window, taper, fft })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn bins(&self) -> usize {
        self.window / 2 + 1
    }

    /// Frequency of bin `k` in cycles/step.
    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 / self.window as f64
    }

    /// Adds the segment-averaged magnitude spectrum of `series` into `acc`.
    /// Segments overlap by half a window and are mean-removed before tapering.
    fn accumulate(&self, series: &[f64], acc: &mut [f64]) {
        let hop = self.window / 2;
        let segments = (series.len() - self.window) / hop + 1;
        let mut buf = vec![Complex::new(0.0, 0.0); self.window];
        for s in 0..segments {
            let seg = &series[s * hop..s * hop + self.window];
            let mean = seg.iter().sum::<f64>() / self.window as f64;
            let spread = seg.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
            if spread <= 1e-12 * mean.abs().max(1.0) {
                // constant segment: no energy away from DC
                continue;
            }
            for ((b, v), w) in buf.iter_mut().zip(seg).zip(&self.taper) {
                *b = Complex::new((v - mean) * w, 0.0);
            }
            self.fft.process(&mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm() / segments as f64;
            }
        }
    }

    /// Averaged magnitude spectrum over a set of equally long series.
    pub fn average_spectrum<'a>(&self, series: impl IntoIterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.bins()];
        let mut count = 0usize;
        for s in series {
            if s.len() < 2 * self.window {
                return Err(Error::Config(format!(
                    "series of length {} is shorter than two windows of {}",
                    s.len(),
                    self.window
                )));
            }
            self.accumulate(s, &mut acc);
            count += 1;
        }
        if count == 0 {
            return Err(Error::Data("no series to analyse".into()));
        }
        acc.iter_mut().for_each(|a| *a /= count as f64);
        Ok(acc)
    }

    /// `Σ f |S(f)| / Σ |S(f)|` over bins `1..=window/2`; 0 when there is no
    /// energy away from DC.
    pub fn centroid(&self, spectrum: &[f64]) -> f64 {
        let (num, den) = spectrum
            .iter()
            .enumerate()
            .skip(1)
            .fold((0.0, 0.0), |(n, d), (k, &m)| (n + self.frequency(k) * m, d + m));
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}

/// Spectral centroid of a single signal (cycles/step).
pub fn signal_centroid(signal: &[f64], window: usize) -> Result<f64> {
    let est = SpectrumEstimator::new(window)?;
    let spec = est.average_spectrum([signal])?;
    Ok(est.centroid(&spec))
}

/// Per-unit time series of one layer over the post-washout part of a trajectory.
pub fn layer_series(traj: &StateTrajectory, layer: usize) -> Vec<Vec<f64>> {
    let states = traj.post_washout();
    let units = states[0].layer(layer).len();
    (0..units)
        .map(|j| states.iter().map(|s| s.layer(layer)[j]).collect())
        .collect()
}

/// Averaged spectra and centroids of every layer of a trajectory, using the
/// post-washout steps.
pub fn spectral_profile(
    traj: &StateTrajectory,
    window: usize,
    probe_description: impl Into<String>,
) -> Result<SpectralProfile> {
    let est = SpectrumEstimator::new(window)?;
    let available = traj.len() - traj.washout();
    if available < 2 * window {
        return Err(Error::Config(format!(
            "{available} post-washout steps, need at least {} for window {window}",
            2 * window
        )));
    }
    let mut per_layer_spectrum = Vec::new();
    let mut per_layer_centroid = Vec::new();
    for layer in 0..traj.layer_dims().len() {
        let series = layer_series(traj, layer);
        let spec = est.average_spectrum(series.iter().map(Vec::as_slice))?;
        per_layer_centroid.push(est.centroid(&spec));
        per_layer_spectrum.push(spec);
    }
    Ok(SpectralProfile {
        per_layer_centroid,
        per_layer_spectrum,
        window,
        probe_description: probe_description.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyEstimator {
    GaussianApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// Mean over units of `0.5 ln(2πe σ²)` (nats). `-inf` when any unit of
    /// the layer is constant.
    pub per_layer_entropy: Vec<f64>,
    pub estimator: EntropyEstimator,
}

/// Gaussian-approximation differential entropy per layer, from the
/// post-washout states.
pub fn state_entropy(traj: &StateTrajectory) -> Result<EntropyReport> {
    let states = traj.post_washout();
    if states.len() < MIN_ENTROPY_SAMPLES {
        return Err(Error::Config(format!(
            "entropy needs at least {MIN_ENTROPY_SAMPLES} post-washout steps, got {}",
            states.len()
        )));
    }
    let n = states.len() as f64;
    let log_2pie = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    let per_layer_entropy = (0..traj.layer_dims().len())
        .map(|layer| {
            let series = layer_series(traj, layer);
            let total: f64 = series
                .iter()
                .map(|s| {
                    let mean = s.iter().sum::<f64>() / n;
                    let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    if var > 0.0 {
                        0.5 * (log_2pie + var.ln())
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .sum();
            total / series.len() as f64
        })
        .collect();
    Ok(EntropyReport {
        per_layer_entropy,
        estimator: EntropyEstimator::GaussianApprox,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSelection {
    pub depth: usize,
    /// Top-layer spectral centroid for each evaluated depth, starting at 1.
    pub centroids: Vec<f64>,
}

/// `cfg` truncated or checked to exactly `depth` layers.
pub fn config_with_depth(cfg: &InitConfig, depth: usize) -> Result<InitConfig> {
    let cut = |p: &PerLayer, name: &str| match p {
        PerLayer::Shared(v) => Ok(PerLayer::Shared(*v)),
        PerLayer::Each(v) if v.len() >= depth => Ok(PerLayer::Each(v[..depth].to_vec())),
        PerLayer::Each(v) => Err(Error::Config(format!(
            "{name} lists {} layers, depth {depth} requested",
            v.len()
        ))),
    };
    Ok(InitConfig {
        n_layers: depth,
        leak_rates: cut(&cfg.leak_rates, "leak_rates")?,
        spectral_radius_targets: cut(&cfg.spectral_radius_targets, "spectral_radius_targets")?,
        ..cfg.clone()
    })
}

/// Smallest depth `L >= 2` at which adding the `L`-th layer moves the top
/// layer's spectral centroid by less than `eps` times the first layer's
/// centroid; `max_layers` if that never happens.
///
/// This is a simplified surrogate for spectrum-driven depth design: it only
/// compares successive top-layer centroids on one probe signal.
pub fn select_depth(
    cfg: &InitConfig,
    probe: &[DVector<f64>],
    max_layers: usize,
    eps: f64,
    washout: usize,
    window: usize,
) -> Result<DepthSelection> {
    if max_layers == 0 {
        return Err(Error::Config("max_layers must be at least 1".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Config(format!("epsilon {eps} must be positive")));
    }
    let mut centroids = Vec::new();
    for depth in 1..=max_layers {
        let res = build_reservoir(&config_with_depth(cfg, depth)?)?;
        check_dim("probe width", res.input_dim(), probe.first().map_or(0, |u| u.len()))?;
        let traj = res.run(probe, None, washout)?;
        let top = layer_series(&traj, depth - 1);
        let est = SpectrumEstimator::new(window)?;
        let spec = est.average_spectrum(top.iter().map(Vec::as_slice))?;
        centroids.push(est.centroid(&spec));
        if depth >= 2 && (centroids[depth - 1] - centroids[depth - 2]).abs() < eps * centroids[0] {
            return Ok(DepthSelection { depth, centroids });
        }
    }
    Ok(DepthSelection {
        depth: max_layers,
        centroids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::{Activation, LayerSpec};

    fn one_unit_trajectory(values: Vec<f64>) -> StateTrajectory {
        let steps = values
            .into_iter()
            .map(|v| GlobalState::new(vec![DVector::from_vec(vec![v])]))
            .collect();
        StateTrajectory::new(steps, 0).unwrap()
    }

    #[test]
    fn sinusoid_centroid_within_one_bin() {
        let sig: Vec<f64> = (0..4096)
            .map(|t| (2.0 * std::f64::consts::PI * 0.1 * t as f64).sin())
            .collect();
        let p = spectral_profile(&one_unit_trajectory(sig), 256, "sine 0.1").unwrap();
        assert!((p.per_layer_centroid[0] - 0.1).abs() <= 1.0 / 256.0);
    }

    #[test]
    fn constant_trajectory_has_zero_centroid() {
        let p = spectral_profile(&one_unit_trajectory(vec![0.37; 1024]), 256, "const").unwrap();
        assert_eq!(p.per_layer_centroid[0], 0.0);
        assert!(p.per_layer_spectrum[0].iter().all(|&m| m == 0.0));
    }

    #[test]
    fn short_trajectory_rejected() {
        let err = spectral_profile(&one_unit_trajectory(vec![0.0; 300]), 256, "").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(SpectrumEstimator::new(255).is_err());
    }

    #[test]
    fn entropy_of_constant_states_is_neg_infinite() {
        let r = state_entropy(&one_unit_trajectory(vec![2.0; 50])).unwrap();
        assert_eq!(r.per_layer_entropy[0], f64::NEG_INFINITY);
        assert!(state_entropy(&one_unit_trajectory(vec![2.0; 10])).is_err());
    }

    #[test]
    fn entropy_of_unit_variance_states() {
        // ±1 alternating: population variance exactly 1.
        let vals: Vec<f64> = (0..100).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let r = state_entropy(&one_unit_trajectory(vals)).unwrap();
        assert!((r.per_layer_entropy[0] - 1.4189385332046727).abs() < 1e-12);
    }

    #[test]
    fn linear_single_layer_jacobian_is_the_layer_map() {
        let w_hat = DMatrix::from_row_slice(2, 2, &[0.1, -0.4, 0.3, 0.2]);
        let layer = LayerSpec::new(
            0.3,
            Activation::Identity,
            DMatrix::from_element(2, 1, 0.5),
            w_hat.clone(),
            Some(DVector::from_vec(vec![0.1, -0.1])),
        )
        .unwrap();
        let res = DeepReservoir::new(1, vec![layer]).unwrap();
        let state = GlobalState::new(vec![DVector::from_vec(vec![0.3, -0.8])]);
        let j = global_jacobian(&res, &state, &DVector::from_vec(vec![1.0])).unwrap();
        let expected = w_hat + DMatrix::identity(2, 2) * 0.7;
        assert_eq!(j, expected);
    }

    #[test]
    fn esp_identical_starts() {
        let layer = LayerSpec::new(
            1.0,
            Activation::Tanh,
            DMatrix::from_element(3, 1, 0.5),
            DMatrix::from_element(3, 3, 0.2),
            None,
        )
        .unwrap();
        let res = DeepReservoir::new(1, vec![layer]).unwrap();
        let s = GlobalState::new(vec![DVector::from_vec(vec![0.1, 0.2, 0.3])]);
        let input = vec![DVector::from_vec(vec![0.5]); 10];
        let r = esp_convergence_test(&res, &input, &s, &s, 1e-6).unwrap();
        assert!(r.converged);
        assert!(r.distance_curve.iter().all(|&d| d == 0.0));
        assert_eq!(r.distance_curve.len(), 10);
    }

    #[test]
    fn lyapunov_preconditions() {
        let layer = LayerSpec::new(
            1.0,
            Activation::Tanh,
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 0.5),
            None,
        )
        .unwrap();
        let res = DeepReservoir::new(1, vec![layer]).unwrap();
        let input = vec![DVector::from_vec(vec![0.0]); 150];
        assert!(matches!(lyapunov_exponents(&res, &input, 0, 50), Err(Error::Config(_))));
        assert!(matches!(
            lyapunov_exponents(&res, &input, 100, 100),
            Err(Error::Data(_))
        ));
        // scalar linear map 0.5 at the origin: exponent ln 0.5
        let r = lyapunov_exponents(&res, &input, 10, 100).unwrap();
        assert!((r.mlle - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn depth_selection_edges() {
        let cfg = InitConfig {
            units_per_layer: 10,
            master_seed: 3,
            ..Default::default()
        };
        let probe: Vec<DVector<f64>> = (0..700)
            .map(|t| DVector::from_vec(vec![((t * 7919) % 101) as f64 / 50.0 - 1.0]))
            .collect();
        let one = select_depth(&cfg, &probe, 1, 0.05, 100, 128).unwrap();
        assert_eq!(one.depth, 1);
        assert_eq!(one.centroids.len(), 1);
        let sat = select_depth(&cfg, &probe, 5, 1e6, 100, 128).unwrap();
        assert_eq!(sat.depth, 2);
        assert_eq!(sat.centroids.len(), 2);
        assert!(select_depth(&cfg, &probe, 0, 0.05, 100, 128).is_err());
    }
}
