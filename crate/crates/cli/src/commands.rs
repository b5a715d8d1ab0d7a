use std::path::{Path, PathBuf};

use deepesn::analysis::{select_depth, SpectrumEstimator};
use deepesn::tasks::format_float;
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{AnalyzeArgs, Common, DesignArgs};
use crate::config::{config_for, ExperimentConfig};
use crate::error::{CliError, Tag};
use crate::model_file::ModelFile;
use crate::pipeline::{analyze, run_job, AnalysisBundle, RunOutcome};
use crate::probe::Probe;
use crate::report::{self, json_with_provenance, provenance_line, summarize, write_file};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "DEEPESN_WORKERS";

fn worker_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("{WORKERS_ENV}={v} is not a positive count")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))
}

/// Runs `f` over `jobs` in the worker pool. Results keep the job order; the
/// first failing job (in that order) is reported.
fn run_parallel<J: Sync, T: Send>(
    jobs: &[J],
    f: impl Fn(&J) -> Result<T, CliError> + Sync + Send,
) -> Result<Vec<T>, CliError> {
    worker_pool()?
        .install(|| jobs.par_iter().map(&f).collect::<Vec<_>>())
        .into_iter()
        .collect()
}

fn sorted_seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds
}

fn model_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join("models").join(format!("seed_{seed}.model"))
}

fn write_config_copy(cfg: &ExperimentConfig, hash: &str) -> Result<(), CliError> {
    let text = format!("{}{}", provenance_line(hash, &cfg.seeds), cfg.canonical());
    write_file(&cfg.output_dir.join("config.toml"), &text)
}

fn spectrum_csv(hash: &str, seed: u64, bundle: &AnalysisBundle) -> Option<String> {
    let p = bundle.spectral.as_ref()?;
    let est = SpectrumEstimator::new(p.window).ok()?;
    let mut s = provenance_line(hash, &[seed]);
    let layers: Vec<String> = (0..p.per_layer_spectrum.len()).map(|l| format!("layer_{l}")).collect();
    s.push_str(&format!("bin,frequency,{}\n", layers.join(",")));
    for k in 0..est.bins() {
        s.push_str(&format!("{k},{}", format_float(est.frequency(k))));
        for spec in &p.per_layer_spectrum {
            s.push(',');
            s.push_str(&format_float(spec[k]));
        }
        s.push('\n');
    }
    Some(s)
}

fn write_bundle(dir: &Path, stem: &str, hash: &str, seed: u64, bundle: &AnalysisBundle) -> Result<(), CliError> {
    write_file(
        &dir.join(format!("{stem}.json")),
        &json_with_provenance(hash, seed, bundle)?,
    )?;
    if let Some(csv) = spectrum_csv(hash, seed, bundle) {
        write_file(&dir.join(format!("{stem}_spectrum.csv")), &csv)?;
    }
    Ok(())
}

/// Outcomes of `run`, sorted by seed.
pub fn run(args: &Common) -> Result<Vec<RunOutcome>, CliError> {
    let cfg = ExperimentConfig::load(&args.config, &args.overrides())?;
    run_config(&cfg)
}

pub fn run_config(cfg: &ExperimentConfig) -> Result<Vec<RunOutcome>, CliError> {
    let hash = cfg.hash();
    let seeds = sorted_seeds(cfg);
    let probe: Option<Probe> = if cfg.analysis.reports.is_empty() {
        None
    } else {
        Some(cfg.analysis.probe.parse()?)
    };
    let results = run_parallel(&seeds, |&seed| {
        let outcome = run_job(cfg, &cfg.reservoir_for(seed), &hash)?;
        let bundle = match &probe {
            Some(p) => Some(analyze(
                &outcome.model.reservoir,
                p,
                &cfg.analysis.reports,
                &cfg.analysis,
            )?),
            None => None,
        };
        Ok((outcome, bundle))
    })?;
    let dir = &cfg.output_dir;
    write_config_copy(cfg, &hash)?;
    for (outcome, bundle) in &results {
        let path = model_path(dir, outcome.seed);
        write_file(&path, &outcome.model.to_text())?;
        if let Some(b) = bundle {
            write_bundle(
                &dir.join("reports"),
                &format!("seed_{}", outcome.seed),
                &hash,
                outcome.seed,
                b,
            )?;
        }
    }
    let outcomes: Vec<RunOutcome> = results.into_iter().map(|(o, _)| o).collect();
    write_file(&dir.join("metrics.csv"), &report::metrics_csv(&hash, &seeds, &outcomes))?;
    if let Some(scores) = report::task_scores_csv(&hash, &seeds, &outcomes) {
        write_file(&dir.join("task_scores.csv"), &scores)?;
    }
    Ok(outcomes)
}

pub fn analyze_cmd(args: &AnalyzeArgs) -> Result<AnalysisBundle, CliError> {
    let text = match &args.config {
        Some(p) => Some(
            std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("cannot read config {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let mut settings = crate::config::analysis_settings(text.as_deref(), &args.set)?;
    if !args.reports.is_empty() {
        settings.reports = args.reports.clone();
    }
    if settings.reports.is_empty() {
        return Err(CliError::Config("analyze: no reports requested (use --reports)".into()));
    }
    let probe: Probe = args.probe.as_deref().unwrap_or(&settings.probe).parse()?;
    let model = ModelFile::load(&args.model)?;
    let bundle = analyze(&model.reservoir, &probe, &settings.reports, &settings)?;
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let p = &model.provenance;
    write_bundle(
        &dir,
        &format!("analysis_seed_{}", p.seed),
        &p.config_hash,
        p.seed,
        &bundle,
    )?;
    Ok(bundle)
}

/// Per-configuration summary of the headline figure.
#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub n_layers: usize,
    pub units_per_layer: usize,
    pub metric: &'static str,
    pub summary: report::Summary,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    /// Outcomes by seed, then grid point.
    pub outcomes: Vec<RunOutcome>,
}

pub fn compare(args: &Common) -> Result<Comparison, CliError> {
    let cfg = ExperimentConfig::load(&args.config, &args.overrides())?;
    compare_config(&cfg)
}

pub fn compare_config(cfg: &ExperimentConfig) -> Result<Comparison, CliError> {
    cfg.check_budget()?;
    let hash = cfg.hash();
    let seeds = sorted_seeds(cfg);
    let grid = &cfg.compare.grid;
    let base = cfg.reservoir_for(0);
    let jobs: Vec<(u64, usize)> = seeds
        .iter()
        .flat_map(|&s| (0..grid.len()).map(move |g| (s, g)))
        .collect();
    let outcomes = run_parallel(&jobs, |&(seed, g)| {
        let init = config_for(&base, grid[g], seed).map_err(|e| CliError::Config(format!("compare.grid: {e}")))?;
        run_job(cfg, &init, &hash)
    })?;

    let width = grid.len();
    let metric = outcomes[0].headline().0;
    let rows: Vec<CompareRow> = grid
        .iter()
        .enumerate()
        .map(|(g, point)| {
            let values: Vec<f64> = outcomes.iter().skip(g).step_by(width).map(|o| o.headline().1).collect();
            CompareRow {
                n_layers: point.n_layers,
                units_per_layer: point.units_per_layer,
                metric,
                summary: summarize(&values),
            }
        })
        .collect();

    let dir = &cfg.output_dir;
    write_config_copy(cfg, &hash)?;
    write_file(
        &dir.join("compare_runs.csv"),
        &report::metrics_csv(&hash, &seeds, &outcomes),
    )?;

    let mut summary = provenance_line(&hash, &seeds);
    summary.push_str("n_layers,units_per_layer,metric,median,q1,q3,iqr\n");
    for r in &rows {
        let s = r.summary;
        summary.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.n_layers,
            r.units_per_layer,
            r.metric,
            format_float(s.median),
            format_float(s.q1),
            format_float(s.q3),
            format_float(s.iqr)
        ));
    }
    write_file(&dir.join("compare_summary.csv"), &summary)?;

    let mut pairs = provenance_line(&hash, &seeds);
    let cols: Vec<String> = grid
        .iter()
        .map(|p| format!("{}x{}", p.n_layers, p.units_per_layer))
        .collect();
    pairs.push_str(&format!("seed,{}\n", cols.join(",")));
    for chunk in outcomes.chunks(width) {
        let vals: Vec<String> = chunk.iter().map(|o| format_float(o.headline().1)).collect();
        pairs.push_str(&format!("{},{}\n", chunk[0].seed, vals.join(",")));
    }
    write_file(&dir.join("compare_pairs.csv"), &pairs)?;
    Ok(Comparison { rows, outcomes })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignOutcome {
    pub seed: u64,
    pub depth: usize,
    pub centroids: Vec<f64>,
}

pub fn design(args: &DesignArgs) -> Result<Vec<DesignOutcome>, CliError> {
    let mut cfg = ExperimentConfig::load(&args.common.config, &args.common.overrides())?;
    if let Some(e) = args.epsilon {
        cfg.design.epsilon = e;
    }
    if let Some(m) = args.max_layers {
        cfg.design.max_layers = m;
    }
    design_config(&cfg)
}

pub fn design_config(cfg: &ExperimentConfig) -> Result<Vec<DesignOutcome>, CliError> {
    let hash = cfg.hash();
    let seeds = sorted_seeds(cfg);
    let d = &cfg.design;
    let outcomes = run_parallel(&seeds, |&seed| {
        let init = cfg.reservoir_for(seed);
        let probe = Probe::Noise {
            length: d.probe_length,
            seed,
        }
        .signal(init.input_dim)?;
        let sel = select_depth(&init, &probe, d.max_layers, d.epsilon, d.washout, d.window).tag("analysis")?;
        Ok(DesignOutcome {
            seed,
            depth: sel.depth,
            centroids: sel.centroids,
        })
    })?;
    let mut trace = provenance_line(&hash, &seeds);
    trace.push_str("seed,depth,top_layer_centroid\n");
    let mut chosen = provenance_line(&hash, &seeds);
    chosen.push_str("seed,chosen_depth\n");
    for o in &outcomes {
        for (k, c) in o.centroids.iter().enumerate() {
            trace.push_str(&format!("{},{},{}\n", o.seed, k + 1, format_float(*c)));
        }
        chosen.push_str(&format!("{},{}\n", o.seed, o.depth));
    }
    write_config_copy(cfg, &hash)?;
    write_file(&cfg.output_dir.join("design_trace.csv"), &trace)?;
    write_file(&cfg.output_dir.join("design.csv"), &chosen)?;
    Ok(outcomes)
}

/// Writes one dataset CSV per seed and returns the paths.
pub fn gen(args: &Common) -> Result<Vec<PathBuf>, CliError> {
    let cfg = ExperimentConfig::load(&args.config, &args.overrides())?;
    let hash = cfg.hash();
    let total_units = cfg.reservoir.n_layers * cfg.reservoir.units_per_layer;
    let mut paths = Vec::new();
    for seed in sorted_seeds(&cfg) {
        let data = cfg.task.generate(seed, total_units).tag("tasks")?;
        let params: Vec<String> = data.generator_params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let comment = format!(
            "config_hash={hash} seed={seed} task={} {}",
            data.task_name,
            params.join(" ")
        );
        let mut buf = Vec::new();
        data.write_csv(&mut buf, Some(&comment))?;
        let path = cfg.output_dir.join(format!("{}_seed_{seed}.csv", data.task_name));
        write_file(&path, &String::from_utf8(buf).expect("CSV is ASCII"))?;
        paths.push(path);
    }
    Ok(paths)
}
