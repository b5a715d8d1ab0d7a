//! Experiment configuration: a TOML document with dotted sections.
//!
//! ```toml
//! output_dir = "out"
//! seeds = [1, 2, 3]
//!
//! [reservoir]
//! n_layers = 5
//! units_per_layer = 100
//! leak_rates = 0.5                  # or one value per layer: [1.0, 0.5, ...]
//! spectral_radius_targets = 0.9
//!
//! [task]
//! name = "mso"                      # mackey_glass | mso | memory_capacity | frequency_classification
//! n_components = 8
//!
//! [readout]
//! lambda_grid = [1e-8, 1e-6, 1e-4]
//! intercept = true
//!
//! [analysis]
//! reports = ["spectral", "lyapunov"]
//! ```
//!
//! Every section and key is optional except `seeds` and `task.name`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use deepesn::tasks::{self, ItemSplit, Split, TaskDataset};
use deepesn::InitConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub reservoir: InitConfig,
    pub task: TaskConfig,
    #[serde(default)]
    pub readout: ReadoutConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub design: DesignConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    MackeyGlass {
        #[serde(default = "mg_length")]
        length: usize,
        #[serde(default = "mg_tau")]
        tau: usize,
        #[serde(default = "mg_delta")]
        delta: f64,
        /// Fixed data seed; the run seed is used when absent.
        seed: Option<u64>,
        #[serde(default = "mg_split")]
        split: Split,
    },
    Mso {
        #[serde(default = "mso_components")]
        n_components: usize,
        #[serde(default = "mso_split")]
        split: Split,
    },
    MemoryCapacity {
        /// Defaults to twice the total number of recurrent units.
        max_delay: Option<usize>,
        seed: Option<u64>,
        #[serde(default = "mc_split")]
        split: Split,
    },
    FrequencyClassification {
        #[serde(default = "fc_item_len")]
        length_per_item: usize,
        #[serde(default = "fc_classes")]
        n_classes: usize,
        #[serde(default = "fc_noise")]
        noise: f64,
        seed: Option<u64>,
        #[serde(default = "fc_items")]
        items: ItemSplit,
        #[serde(default)]
        features: Features,
    },
}

fn mg_length() -> usize {
    3000
}
fn mg_tau() -> usize {
    17
}
fn mg_delta() -> f64 {
    0.1
}
fn mg_split() -> Split {
    Split {
        washout: 100,
        train: 2000,
        validation: 500,
        test: 500,
    }
}
fn mso_components() -> usize {
    8
}
fn mso_split() -> Split {
    Split {
        washout: 100,
        train: 400,
        validation: 100,
        test: 300,
    }
}
fn mc_split() -> Split {
    Split {
        washout: 200,
        train: 4200,
        validation: 1000,
        test: 2000,
    }
}
fn fc_item_len() -> usize {
    100
}
fn fc_classes() -> usize {
    4
}
fn fc_noise() -> f64 {
    0.1
}
fn fc_items() -> ItemSplit {
    ItemSplit {
        train: 200,
        validation: 50,
        test: 100,
    }
}

/// State summary fed to the readout for sequence classification.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Features {
    #[default]
    Final,
    Mean,
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::MackeyGlass { .. } => "mackey_glass",
            Self::Mso { .. } => "mso",
            Self::MemoryCapacity { .. } => "memory_capacity",
            Self::FrequencyClassification { .. } => "frequency_classification",
        }
    }

    pub fn input_dim(&self) -> usize {
        1
    }

    /// Generates the dataset for `run_seed`, used unless the task pins its
    /// own data seed. `total_units` sizes the default memory horizon.
    pub fn generate(&self, run_seed: u64, total_units: usize) -> deepesn::Result<TaskDataset> {
        match *self {
            Self::MackeyGlass {
                length,
                tau,
                delta,
                seed,
                split,
            } => tasks::gen_mackey_glass(length, tau, delta, seed.unwrap_or(run_seed), split),
            Self::Mso { n_components, split } => tasks::gen_mso(split.total(), n_components, split),
            Self::MemoryCapacity { max_delay, seed, split } => tasks::gen_memory_capacity(
                split.total(),
                max_delay.unwrap_or(2 * total_units),
                seed.unwrap_or(run_seed),
                split,
            ),
            Self::FrequencyClassification {
                length_per_item,
                n_classes,
                noise,
                seed,
                items,
                ..
            } => tasks::gen_frequency_classification(
                length_per_item,
                items.train + items.validation + items.test,
                n_classes,
                noise,
                seed.unwrap_or(run_seed),
                items,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutConfig {
    pub lambda_grid: Vec<f64>,
    pub intercept: bool,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self {
            lambda_grid: default_lambda_grid(),
            intercept: true,
        }
    }
}

/// 15 log-spaced values from 1e-12 to 1e2.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..15).map(|k| 10f64.powi(k - 12)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Spectral,
    Lyapunov,
    Esp,
    Entropy,
}

impl ReportKind {
    pub const ALL: [ReportKind; 4] = [Self::Spectral, Self::Lyapunov, Self::Esp, Self::Entropy];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Spectral => "spectral",
            Self::Lyapunov => "lyapunov",
            Self::Esp => "esp",
            Self::Entropy => "entropy",
        }
    }
}

impl fmt::Display for ReportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown report `{s}` (expected spectral, lyapunov, esp or entropy)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub reports: Vec<ReportKind>,
    /// Probe signal for the diagnostics, see [`crate::probe::Probe`].
    pub probe: String,
    pub washout: usize,
    pub window: usize,
    pub esp_tolerance: f64,
    /// Seed of the random second initial state of the ESP test.
    pub esp_seed: u64,
    pub lyapunov_warmup: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            reports: Vec::new(),
            probe: "noise:3000:0".into(),
            washout: 200,
            window: deepesn::analysis::DEFAULT_WINDOW,
            esp_tolerance: 1e-6,
            esp_seed: 1,
            lyapunov_warmup: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub n_layers: usize,
    pub units_per_layer: usize,
}

impl GridPoint {
    pub fn total_units(&self) -> usize {
        self.n_layers * self.units_per_layer
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub grid: Vec<GridPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub max_layers: usize,
    pub epsilon: f64,
    pub probe_length: usize,
    pub washout: usize,
    pub window: usize,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            max_layers: 10,
            epsilon: 0.05,
            probe_length: 4096,
            washout: 200,
            window: 256,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// `key.path=value` pairs; values are parsed as TOML, falling back to a
    /// plain string.
    pub set: Vec<String>,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &Overrides) -> Result<Self, CliError> {
        let mut table: Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        for kv in &overrides.set {
            apply_set(&mut table, kv)?;
        }
        if !overrides.seeds.is_empty() {
            let seeds = overrides
                .seeds
                .iter()
                .map(|&s| seed_value(s))
                .collect::<Result<_, _>>()?;
            table.insert("seeds".into(), Value::Array(seeds));
        }
        if let Some(dir) = &overrides.output_dir {
            table.insert("output_dir".into(), Value::String(dir.display().to_string()));
        }
        let cfg: Self = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds: at least one seed is required".into()));
        }
        if let Some(dup) = self
            .seeds
            .iter()
            .enumerate()
            .find_map(|(i, s)| self.seeds[..i].contains(s).then_some(s))
        {
            return Err(CliError::Config(format!("seeds: duplicate seed {dup}")));
        }
        if self.readout.lambda_grid.is_empty() {
            return Err(CliError::Config("readout.lambda_grid must not be empty".into()));
        }
        if let Some(l) = self.readout.lambda_grid.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(CliError::Config(format!(
                "readout.lambda_grid: {l} is not a finite non-negative value"
            )));
        }
        let mut reservoir = self.reservoir.clone();
        reservoir.input_dim = self.task.input_dim();
        reservoir.validate().map_err(|e| match e.root() {
            deepesn::Error::Config(m) => CliError::Config(format!("reservoir.{m}")),
            other => CliError::Config(format!("reservoir: {other}")),
        })?;
        for point in &self.compare.grid {
            if point.n_layers == 0 || point.units_per_layer == 0 {
                return Err(CliError::Config(
                    "compare.grid: layer and unit counts must be positive".into(),
                ));
            }
            config_for(&reservoir, *point, 0).map_err(|e| CliError::Config(format!("compare.grid: {e}")))?;
        }
        Ok(())
    }

    /// Reservoir settings for one seed, with the input width taken from the
    /// task.
    pub fn reservoir_for(&self, seed: u64) -> InitConfig {
        InitConfig {
            input_dim: self.task.input_dim(),
            master_seed: seed,
            ..self.reservoir.clone()
        }
    }

    /// Canonical TOML text of the resolved configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of [`Self::canonical`] with the output directory blanked, as
    /// lowercase hex. Where results are written does not change them.
    pub fn hash(&self) -> String {
        let placed = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        Sha256::digest(placed.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Rejects compare grids whose points do not share one unit budget.
    pub fn check_budget(&self) -> Result<usize, CliError> {
        let grid = &self.compare.grid;
        let Some(first) = grid.first() else {
            return Err(CliError::Config(
                "compare.grid must list at least one configuration".into(),
            ));
        };
        let budget = first.total_units();
        if let Some(bad) = grid.iter().find(|p| p.total_units() != budget) {
            return Err(CliError::Config(format!(
                "compare.grid: {}x{} has {} total units, expected {budget} like {}x{}",
                bad.n_layers,
                bad.units_per_layer,
                bad.total_units(),
                first.n_layers,
                first.units_per_layer
            )));
        }
        Ok(budget)
    }
}

/// `base` reshaped to a grid point, truncating or extending per-layer lists
/// only when they are shared.
pub fn config_for(base: &InitConfig, point: GridPoint, seed: u64) -> deepesn::Result<InitConfig> {
    let mut cfg = if point.n_layers <= base.n_layers {
        deepesn::analysis::config_with_depth(base, point.n_layers)?
    } else {
        InitConfig {
            n_layers: point.n_layers,
            ..base.clone()
        }
    };
    cfg.units_per_layer = point.units_per_layer;
    cfg.master_seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

/// `[analysis]` settings from an optional config text plus `--set`
/// overrides, without requiring the rest of an experiment.
pub fn analysis_settings(text: Option<&str>, set: &[String]) -> Result<AnalysisConfig, CliError> {
    let mut table: Table = match text {
        Some(t) => t.parse().map_err(|e| CliError::Config(format!("{e}")))?,
        None => Table::new(),
    };
    for kv in set {
        apply_set(&mut table, kv)?;
    }
    match table.remove("analysis") {
        None => Ok(AnalysisConfig::default()),
        Some(v) => v
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("analysis: {}", e.message().trim()))),
    }
}

fn seed_value(s: u64) -> Result<Value, CliError> {
    i64::try_from(s)
        .map(Value::Integer)
        .map_err(|_| CliError::Config(format!("seed {s} does not fit a TOML integer")))
}

fn apply_set(table: &mut Table, kv: &str) -> Result<(), CliError> {
    let (key, raw) = kv
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{kv}`")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|p| !p.is_empty());
    let Some(last) = last else {
        return Err(CliError::Config(format!("--set: empty key in `{kv}`")));
    };
    let mut cur = table;
    for part in parts {
        let entry = cur.entry(part).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("--set {key}: `{part}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
