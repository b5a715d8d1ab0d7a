//! Benchmark task generators and task-specific scoring.
//!
//! Every generator is a pure function of its arguments and records them in
//! [`TaskDataset::generator_params`], which is enough to regenerate the data.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Mackey-Glass samples discarded before the emitted series starts.
pub const MACKEY_GLASS_TRANSIENT: usize = 1000;
/// Angular frequencies of the superimposed oscillators, in order of use.
pub const MSO_FREQUENCIES: [f64; 8] = [0.2, 0.311, 0.42, 0.51, 0.63, 0.74, 0.85, 0.97];
/// Class frequencies (cycles/step) of the frequency classification task.
pub const CLASS_FREQUENCIES: [f64; 8] = [0.01, 0.02, 0.04, 0.07, 0.11, 0.16, 0.23, 0.32];
/// Range of the memory-capacity input, `u ~ U[-0.8, 0.8]`.
pub const MC_INPUT_BOUND: f64 = 0.8;

/// Lengths (in time steps) of consecutive train, validation and test
/// segments. The washout is the start of the training segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub washout: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl Split {
    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }

    pub fn validate(&self, length: usize) -> Result<()> {
        if self.washout >= self.train {
            return Err(Error::Config(format!(
                "washout {} must be shorter than the training segment {}",
                self.washout, self.train
            )));
        }
        if self.test == 0 {
            return Err(Error::Config("test segment must be non-empty".into()));
        }
        if self.total() > length {
            return Err(Error::Config(format!(
                "split needs {} steps, dataset has {length}",
                self.total()
            )));
        }
        Ok(())
    }

    /// Training rows, washout excluded.
    pub fn train_range(&self) -> Range<usize> {
        self.washout..self.train
    }

    pub fn validation_range(&self) -> Range<usize> {
        self.train..self.train + self.validation
    }

    pub fn test_range(&self) -> Range<usize> {
        self.train + self.validation..self.total()
    }
}

/// Item structure of a sequence-classification dataset: the input stream is
/// the concatenation of equally long items, each with one label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemLayout {
    pub item_len: usize,
    pub n_classes: usize,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub task_name: String,
    pub inputs: Vec<DVector<f64>>,
    pub targets: Vec<DVector<f64>>,
    pub split: Split,
    pub generator_params: BTreeMap<String, String>,
    pub items: Option<ItemLayout>,
}

impl TaskDataset {
    fn new(
        task_name: &str,
        inputs: Vec<DVector<f64>>,
        targets: Vec<DVector<f64>>,
        split: Split,
        generator_params: BTreeMap<String, String>,
        items: Option<ItemLayout>,
    ) -> Result<Self> {
        check_dim("target count", inputs.len(), targets.len())?;
        split.validate(inputs.len())?;
        Ok(Self {
            task_name: task_name.to_string(),
            inputs,
            targets,
            split,
            generator_params,
            items,
        })
    }

    pub fn washout(&self) -> usize {
        self.split.washout
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.targets[0].len()
    }

    /// Targets of `range` as rows of a matrix.
    pub fn target_matrix(&self, range: Range<usize>) -> DMatrix<f64> {
        let rows = &self.targets[range];
        DMatrix::from_fn(rows.len(), self.output_dim(), |r, c| rows[r][c])
    }

    /// Writes `t,u_0..,y_0..` rows with floats in 17-significant-digit
    /// scientific notation. `comment`, if given, becomes a leading `# ` line.
    pub fn write_csv<W: Write>(&self, mut w: W, comment: Option<&str>) -> io::Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        let mut header = vec!["t".to_string()];
        header.extend((0..self.input_dim()).map(|i| format!("u_{i}")));
        header.extend((0..self.output_dim()).map(|i| format!("y_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (t, (u, y)) in self.inputs.iter().zip(&self.targets).enumerate() {
            write!(w, "{t}")?;
            for v in u.iter().chain(y.iter()) {
                write!(w, ",{}", format_float(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// 17 significant digits in scientific notation; parses back to the same f64.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn params(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn scalar_series(values: &[f64]) -> Vec<DVector<f64>> {
    values.iter().map(|&v| DVector::from_element(1, v)).collect()
}

/// Raw Mackey-Glass series of `count` samples, one per unit time, after the
/// transient. Euler integration of
/// `x' = 0.2 x(t-τ) / (1 + x(t-τ)^10) - 0.1 x(t)` with step `delta`.
pub fn mackey_glass_series(count: usize, tau: usize, delta: f64, seed: u64) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Config(format!("Euler step {delta} must lie in (0, 1]")));
    }
    let per_sample = (1.0 / delta).round() as usize;
    if (per_sample as f64 * delta - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("Euler step {delta} must divide one time unit")));
    }
    if tau == 0 {
        return Err(Error::Config("delay tau must be positive".into()));
    }
    let lag = tau * per_sample;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // ring buffer of the last `lag + 1` Euler states
    let mut hist: Vec<f64> = (0..=lag).map(|_| rng.random_range(0.2..=1.4)).collect();
    let mut head = lag; // index of x(t)
    let mut out = Vec::with_capacity(count);
    let total = MACKEY_GLASS_TRANSIENT + count;
    let mut emitted = 0;
    while emitted < total {
        for _ in 0..per_sample {
            let x = hist[head];
            let delayed = hist[(head + 1) % (lag + 1)];
            let next = x + delta * (0.2 * delayed / (1.0 + delayed.powi(10)) - 0.1 * x);
            head = (head + 1) % (lag + 1);
            hist[head] = next;
        }
        if emitted >= MACKEY_GLASS_TRANSIENT {
            out.push(hist[head]);
        }
        emitted += 1;
    }
    Ok(out)
}

/// Mackey-Glass next-step prediction: input `x(t)`, target `x(t+1)`.
pub fn gen_mackey_glass(length: usize, tau: usize, delta: f64, seed: u64, split: Split) -> Result<TaskDataset> {
    if length <= tau + split.washout {
        return Err(Error::Config(format!(
            "length {length} must exceed tau + washout = {}",
            tau + split.washout
        )));
    }
    let series = mackey_glass_series(length + 1, tau, delta, seed)?;
    TaskDataset::new(
        "mackey_glass",
        scalar_series(&series[..length]),
        scalar_series(&series[1..]),
        split,
        params(&[
            ("length", length.to_string()),
            ("tau", tau.to_string()),
            ("delta", format_float(delta)),
            ("seed", seed.to_string()),
        ]),
        None,
    )
}

/// `Σ_{k<n} sin(φ_k t)` for `t = 0..count`.
pub fn mso_series(count: usize, n_components: usize) -> Result<Vec<f64>> {
    if !(1..=MSO_FREQUENCIES.len()).contains(&n_components) {
        return Err(Error::Config(format!("MSO needs 1..=8 components, got {n_components}")));
    }
    Ok((0..count)
        .map(|t| {
            MSO_FREQUENCIES[..n_components]
                .iter()
                .map(|phi| (phi * t as f64).sin())
                .sum()
        })
        .collect())
}

/// Multiple superimposed oscillators, next-step prediction.
pub fn gen_mso(length: usize, n_components: usize, split: Split) -> Result<TaskDataset> {
    if length == 0 {
        return Err(Error::Config("length must be positive".into()));
    }
    let series = mso_series(length + 1, n_components)?;
    TaskDataset::new(
        "mso",
        scalar_series(&series[..length]),
        scalar_series(&series[1..]),
        split,
        params(&[
            ("length", length.to_string()),
            ("n_components", n_components.to_string()),
        ]),
        None,
    )
}

/// Delayed-recall task: i.i.d. `U[-0.8, 0.8]` input and `max_delay` target
/// channels, channel `k-1` holding `u(t-k)`. The inputs preceding `t = 0` are
/// drawn too (they feed the first targets) but not emitted.
pub fn gen_memory_capacity(length: usize, max_delay: usize, seed: u64, split: Split) -> Result<TaskDataset> {
    if max_delay == 0 {
        return Err(Error::Config("max_delay must be at least 1".into()));
    }
    if length <= max_delay + split.washout {
        return Err(Error::Config(format!(
            "length {length} must exceed max_delay + washout = {}",
            max_delay + split.washout
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..length + max_delay)
        .map(|_| rng.random_range(-MC_INPUT_BOUND..=MC_INPUT_BOUND))
        .collect();
    let inputs = scalar_series(&raw[max_delay..]);
    let targets = (0..length)
        .map(|t| DVector::from_fn(max_delay, |k, _| raw[max_delay + t - (k + 1)]))
        .collect();
    TaskDataset::new(
        "memory_capacity",
        inputs,
        targets,
        split,
        params(&[
            ("length", length.to_string()),
            ("max_delay", max_delay.to_string()),
            ("seed", seed.to_string()),
        ]),
        None,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryCapacityReport {
    /// Squared correlation for delays `1..=K`, clamped to `[0, 1]`.
    pub per_delay_r2: Vec<f64>,
    pub total_mc: f64,
}

/// Squared Pearson correlation between prediction and target columns, summed
/// over delays. A constant prediction or target column scores 0.
pub fn score_memory_capacity(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<MemoryCapacityReport> {
    check_dim("prediction rows", target.nrows(), pred.nrows())?;
    check_dim("prediction columns", target.ncols(), pred.ncols())?;
    if target.nrows() < 2 {
        return Err(Error::Data("memory capacity needs at least two steps".into()));
    }
    let n = target.nrows() as f64;
    let per_delay_r2: Vec<f64> = pred
        .column_iter()
        .zip(target.column_iter())
        .map(|(p, y)| {
            let pm = p.sum() / n;
            let ym = y.sum() / n;
            let (mut cov, mut vp, mut vy) = (0.0, 0.0, 0.0);
            for (a, b) in p.iter().zip(y.iter()) {
                cov += (a - pm) * (b - ym);
                vp += (a - pm) * (a - pm);
                vy += (b - ym) * (b - ym);
            }
            if vp == 0.0 || vy == 0.0 {
                0.0
            } else {
                (cov * cov / (vp * vy)).clamp(0.0, 1.0)
            }
        })
        .collect();
    let total_mc = per_delay_r2.iter().sum();
    Ok(MemoryCapacityReport { per_delay_r2, total_mc })
}

/// Class frequencies used for `n_classes` classes, spread over the table
/// from lowest to highest.
pub fn class_frequencies(n_classes: usize) -> Result<Vec<f64>> {
    if !(1..=CLASS_FREQUENCIES.len()).contains(&n_classes) {
        return Err(Error::Config(format!(
            "frequency classification supports 1..=8 classes, got {n_classes}"
        )));
    }
    if n_classes == 1 {
        return Ok(vec![CLASS_FREQUENCIES[0]]);
    }
    let last = CLASS_FREQUENCIES.len() - 1;
    Ok((0..n_classes)
        .map(|k| CLASS_FREQUENCIES[(k * last + (n_classes - 1) / 2) / (n_classes - 1)])
        .collect())
}

/// Item counts of a classification dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemSplit {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// Sequence classification: each item is `sin(2π f_c t + φ)` with a random
/// phase plus uniform noise in `[-noise, noise]`; the class `c` is uniform.
/// Targets are one-hot labels repeated over the item's steps.
pub fn gen_frequency_classification(
    length_per_item: usize,
    n_items: usize,
    n_classes: usize,
    noise: f64,
    seed: u64,
    items: ItemSplit,
) -> Result<TaskDataset> {
    let freqs = class_frequencies(n_classes)?;
    if length_per_item < 2 || n_items == 0 {
        return Err(Error::Config("need at least one item of length >= 2".into()));
    }
    if items.train + items.validation + items.test > n_items {
        return Err(Error::Config(format!(
            "item split needs {} items, only {n_items} generated",
            items.train + items.validation + items.test
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Config(format!("noise amplitude {noise} must be non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(n_items * length_per_item);
    let mut targets = Vec::with_capacity(n_items * length_per_item);
    let mut labels = Vec::with_capacity(n_items);
    for _ in 0..n_items {
        let class = rng.random_range(0..n_classes);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let onehot = DVector::from_fn(n_classes, |k, _| if k == class { 1.0 } else { 0.0 });
        for t in 0..length_per_item {
            let e: f64 = rng.random_range(-1.0..=1.0);
            let v = (std::f64::consts::TAU * freqs[class] * t as f64 + phase).sin() + noise * e;
            inputs.push(DVector::from_element(1, v));
            targets.push(onehot.clone());
        }
        labels.push(class);
    }
    let split = Split {
        washout: 0,
        train: items.train * length_per_item,
        validation: items.validation * length_per_item,
        test: items.test * length_per_item,
    };
    TaskDataset::new(
        "frequency_classification",
        inputs,
        targets,
        split,
        params(&[
            ("length_per_item", length_per_item.to_string()),
            ("n_items", n_items.to_string()),
            ("n_classes", n_classes.to_string()),
            ("noise", format_float(noise)),
            ("seed", seed.to_string()),
        ]),
        Some(ItemLayout {
            item_len: length_per_item,
            n_classes,
            labels,
        }),
    )
}
