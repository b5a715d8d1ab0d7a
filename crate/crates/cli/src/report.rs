//! CSV and JSON writers. Every file starts with (or contains) the config
//! hash and the seeds it covers.

use std::fmt::Write as _;
use std::path::Path;

use deepesn::tasks::format_float;
use serde::Serialize;

use crate::error::CliError;
use crate::pipeline::RunOutcome;

pub fn provenance_line(config_hash: &str, seeds: &[u64]) -> String {
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    format!("# config_hash={config_hash} seeds={}\n", seeds.join(","))
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// `metrics.csv`: one row per job in the given order.
pub fn metrics_csv(config_hash: &str, seeds: &[u64], rows: &[RunOutcome]) -> String {
    let mut s = provenance_line(config_hash, seeds);
    s.push_str("seed,task,n_layers,units,lambda,train_mse,val_mse,test_mse,test_nrmse\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.task,
            r.n_layers,
            r.units,
            format_float(r.lambda),
            format_float(r.train_mse),
            format_float(r.val_mse),
            format_float(r.test_mse),
            format_float(r.test_nrmse)
        );
    }
    s
}

/// `task_scores.csv`: memory capacity or accuracy per job, when the task has
/// such a score.
pub fn task_scores_csv(config_hash: &str, seeds: &[u64], rows: &[RunOutcome]) -> Option<String> {
    let scored: Vec<_> = rows.iter().filter_map(|r| r.score.as_ref().map(|s| (r, s))).collect();
    if scored.is_empty() {
        return None;
    }
    let mut s = provenance_line(config_hash, seeds);
    s.push_str("seed,task,n_layers,units,score,value\n");
    for (r, score) in scored {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.seed,
            r.task,
            r.n_layers,
            r.units,
            score.name(),
            format_float(score.value())
        );
    }
    Some(s)
}

/// JSON document wrapping `body` with its provenance.
pub fn json_with_provenance<T: Serialize>(config_hash: &str, seed: u64, body: &T) -> Result<String, CliError> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        config_hash: &'a str,
        seed: u64,
        #[serde(flatten)]
        body: &'a T,
    }
    let mut text = serde_json::to_string_pretty(&Doc {
        config_hash,
        seed,
        body,
    })
    .map_err(|e| CliError::Io(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Median and quartiles with linear interpolation between order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Summary of `values`; NaN entries sort last.
pub fn summarize(values: &[f64]) -> Summary {
    assert!(!values.is_empty(), "summary of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&v, 0.25), quantile(&v, 0.75));
    Summary {
        median: quantile(&v, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
    }
}
