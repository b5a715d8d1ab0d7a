//! One experiment job: build, drive, train, select λ, evaluate, analyze.

use std::ops::Range;

use deepesn::analysis::{self, EntropyReport, EspReport, LyapunovReport, SpectralProfile};
use deepesn::readout::{evaluate, Metric, RegressionProblem, RidgeSolver};
use deepesn::tasks::{score_memory_capacity, MemoryCapacityReport, TaskDataset};
use deepesn::{build_reservoir, DeepReservoir, GlobalState, InitConfig, Readout, StateTrajectory};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{AnalysisConfig, ExperimentConfig, Features, ReportKind, TaskConfig};
use crate::error::{CliError, Tag};
use crate::model_file::{ModelFile, Provenance};
use crate::probe::Probe;

/// Task-specific score reported next to the regression errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskScore {
    MemoryCapacity(MemoryCapacityReport),
    Accuracy(f64),
}

impl TaskScore {
    pub fn name(&self) -> &'static str {
        match self {
            Self::MemoryCapacity(_) => "memory_capacity",
            Self::Accuracy(_) => "accuracy",
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            Self::MemoryCapacity(r) => r.total_mc,
            Self::Accuracy(a) => *a,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub task: &'static str,
    pub n_layers: usize,
    pub units: usize,
    pub lambda: f64,
    pub train_mse: f64,
    pub val_mse: f64,
    pub test_mse: f64,
    /// NaN when the test target has no variance.
    pub test_nrmse: f64,
    pub score: Option<TaskScore>,
    pub model: ModelFile,
}

impl RunOutcome {
    /// Figure compared across configurations and whether larger is better.
    pub fn headline(&self) -> (&'static str, f64, bool) {
        match &self.score {
            Some(s) => (s.name(), s.value(), true),
            None => ("test_nrmse", self.test_nrmse, false),
        }
    }
}

/// Feature/target matrices of the three splits.
struct Design {
    train: (DMatrix<f64>, DMatrix<f64>),
    validation: (DMatrix<f64>, DMatrix<f64>),
    test: (DMatrix<f64>, DMatrix<f64>),
}

fn step_design(traj: &StateTrajectory, data: &TaskDataset) -> Design {
    let s = data.split;
    let pick = |r: Range<usize>| (traj.state_matrix(r.clone()), data.target_matrix(r));
    Design {
        train: pick(s.train_range()),
        validation: pick(s.validation_range()),
        test: pick(s.test_range()),
    }
}

fn item_design(traj: &StateTrajectory, data: &TaskDataset, features: Features) -> Design {
    let items = data
        .items
        .as_ref()
        .expect("classification datasets carry an item layout");
    let len = items.item_len;
    let width: usize = traj.layer_dims().iter().sum();
    let pick = |steps: Range<usize>| {
        let (first, last) = (steps.start / len, steps.end / len);
        let mut x = DMatrix::zeros(last - first, width);
        let mut y = DMatrix::zeros(last - first, items.n_classes);
        for (row, k) in (first..last).enumerate() {
            let span = k * len..(k + 1) * len;
            let feat: DVector<f64> = match features {
                Features::Final => traj.steps()[span.end - 1].concat(),
                Features::Mean => traj.steps()[span].iter().map(GlobalState::concat).sum::<DVector<f64>>() / len as f64,
            };
            x.row_mut(row).tr_copy_from(&feat);
            y[(row, items.labels[k])] = 1.0;
        }
        (x, y)
    };
    let s = data.split;
    Design {
        train: pick(0..s.train),
        validation: pick(s.validation_range()),
        test: pick(s.test_range()),
    }
}

/// Fits the readout for every λ of the grid on the training rows and keeps
/// the one with the lowest validation MSE; ties go to the earlier grid entry.
pub fn select_readout(
    train: &(DMatrix<f64>, DMatrix<f64>),
    validation: &(DMatrix<f64>, DMatrix<f64>),
    grid: &[f64],
    intercept: bool,
) -> Result<(Readout, f64), CliError> {
    let problem = RegressionProblem::new(train.0.clone(), train.1.clone()).tag("readout")?;
    let solver = RidgeSolver::new(&problem, intercept).tag("readout")?;
    let mut best: Option<(Readout, f64)> = None;
    for &lambda in grid {
        let r = solver.solve(lambda).tag("readout")?;
        let pred = r.apply(&validation.0).tag("readout")?;
        let mse = evaluate(&pred, &validation.1, Metric::Mse).tag("readout")?;
        if best.as_ref().is_none_or(|(_, b)| mse < *b) {
            best = Some((r, mse));
        }
    }
    best.ok_or_else(|| CliError::Config("readout.lambda_grid must not be empty".into()))
}

fn mse(r: &Readout, set: &(DMatrix<f64>, DMatrix<f64>)) -> Result<f64, CliError> {
    evaluate(&r.apply(&set.0).tag("readout")?, &set.1, Metric::Mse).tag("readout")
}

/// Runs the full pipeline for one reservoir configuration.
pub fn run_job(cfg: &ExperimentConfig, init: &InitConfig, config_hash: &str) -> Result<RunOutcome, CliError> {
    let seed = init.master_seed;
    let reservoir = build_reservoir(init).tag("init")?;
    let data = cfg.task.generate(seed, reservoir.total_units()).tag("tasks")?;
    if data.split.validation == 0 {
        return Err(CliError::Config(
            "task split: validation must be non-empty for λ selection".into(),
        ));
    }
    let traj = reservoir.run(&data.inputs, None, data.washout()).tag("reservoir")?;
    let design = match &cfg.task {
        TaskConfig::FrequencyClassification { features, .. } => item_design(&traj, &data, *features),
        _ => step_design(&traj, &data),
    };
    let (readout, val_mse) = select_readout(
        &design.train,
        &design.validation,
        &cfg.readout.lambda_grid,
        cfg.readout.intercept,
    )?;
    let test_pred = readout.apply(&design.test.0).tag("readout")?;
    let test_nrmse = match evaluate(&test_pred, &design.test.1, Metric::Nrmse) {
        Ok(v) => v,
        Err(deepesn::Error::Undefined(_)) => f64::NAN,
        Err(e) => return Err(CliError::from_core("readout", e)),
    };
    let score = match cfg.task {
        TaskConfig::MemoryCapacity { .. } => Some(TaskScore::MemoryCapacity(
            score_memory_capacity(&test_pred, &design.test.1).tag("tasks")?,
        )),
        TaskConfig::FrequencyClassification { .. } => Some(TaskScore::Accuracy(
            evaluate(&test_pred, &design.test.1, Metric::Accuracy).tag("readout")?,
        )),
        _ => None,
    };
    Ok(RunOutcome {
        seed,
        task: cfg.task.name(),
        n_layers: init.n_layers,
        units: init.units_per_layer,
        lambda: readout.regularization(),
        train_mse: mse(&readout, &design.train)?,
        val_mse,
        test_mse: mse(&readout, &design.test)?,
        test_nrmse,
        score,
        model: ModelFile {
            provenance: Provenance::new(config_hash, seed),
            reservoir,
            readout: Some(readout),
        },
    })
}

/// Requested diagnostics of one reservoir under one probe signal.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AnalysisBundle {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectral: Option<SpectralProfile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub esp: Option<EspReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy: Option<EntropyReport>,
}

pub fn analyze(
    res: &DeepReservoir,
    probe: &Probe,
    reports: &[ReportKind],
    settings: &AnalysisConfig,
) -> Result<AnalysisBundle, CliError> {
    let signal = probe.signal(res.input_dim())?;
    let mut out = AnalysisBundle::default();
    let needs_traj = reports
        .iter()
        .any(|r| matches!(r, ReportKind::Spectral | ReportKind::Entropy));
    let traj = if needs_traj {
        Some(res.run(&signal, None, settings.washout).tag("reservoir")?)
    } else {
        None
    };
    for kind in reports {
        match kind {
            ReportKind::Spectral => {
                let traj = traj.as_ref().expect("trajectory computed above");
                out.spectral =
                    Some(analysis::spectral_profile(traj, settings.window, probe.to_string()).tag("analysis")?);
            }
            ReportKind::Entropy => {
                let traj = traj.as_ref().expect("trajectory computed above");
                out.entropy = Some(analysis::state_entropy(traj).tag("analysis")?);
            }
            ReportKind::Lyapunov => {
                let warmup = settings.lyapunov_warmup;
                let steps = signal.len().saturating_sub(warmup);
                out.lyapunov = Some(analysis::lyapunov_exponents(res, &signal, warmup, steps).tag("analysis")?);
            }
            ReportKind::Esp => {
                let mut rng = ChaCha8Rng::seed_from_u64(settings.esp_seed);
                let dims = res.layer_dims();
                let far = GlobalState::new(
                    dims.iter()
                        .map(|&n| DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0)))
                        .collect(),
                );
                out.esp = Some(
                    analysis::esp_convergence_test(res, &signal, &res.zero_state(), &far, settings.esp_tolerance)
                        .tag("analysis")?,
                );
            }
        }
    }
    Ok(out)
}
