//! Input signals used to drive a reservoir during analysis.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;

/// `noise:LEN:SEED` (i.i.d. uniform on `[-1, 1]`), `sine:FREQ:LEN` (frequency
/// in cycles per step) or `csv:PATH` (numeric rows; a header selects the
/// `u_*` columns when present).
#[derive(Debug, Clone, PartialEq)]
pub enum Probe {
    Noise { length: usize, seed: u64 },
    Sine { frequency: f64, length: usize },
    Csv(PathBuf),
}

impl FromStr for Probe {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = |why: &str| CliError::Config(format!("probe `{s}`: {why}"));
        let (kind, rest) = s.split_once(':').ok_or_else(|| bad("expected KIND:ARGS"))?;
        match kind {
            "noise" => {
                let (len, seed) = rest.split_once(':').ok_or_else(|| bad("expected noise:LEN:SEED"))?;
                Ok(Self::Noise {
                    length: len.parse().map_err(|_| bad("length is not a count"))?,
                    seed: seed.parse().map_err(|_| bad("seed is not an integer"))?,
                })
            }
            "sine" => {
                let (f, len) = rest.split_once(':').ok_or_else(|| bad("expected sine:FREQ:LEN"))?;
                Ok(Self::Sine {
                    frequency: f.parse().map_err(|_| bad("frequency is not a number"))?,
                    length: len.parse().map_err(|_| bad("length is not a count"))?,
                })
            }
            "csv" if !rest.is_empty() => Ok(Self::Csv(PathBuf::from(rest))),
            _ => Err(bad("kind must be noise, sine or csv")),
        }
    }
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Noise { length, seed } => write!(f, "noise:{length}:{seed}"),
            Self::Sine { frequency, length } => write!(f, "sine:{frequency}:{length}"),
            Self::Csv(p) => write!(f, "csv:{}", p.display()),
        }
    }
}

impl Probe {
    /// Materializes the probe for a reservoir with `input_dim` inputs. Noise
    /// and sine probes drive every input channel with the same construction.
    pub fn signal(&self, input_dim: usize) -> Result<Vec<DVector<f64>>, CliError> {
        match *self {
            Self::Noise { length, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok((0..length)
                    .map(|_| DVector::from_fn(input_dim, |_, _| rng.random_range(-1.0..=1.0)))
                    .collect())
            }
            Self::Sine { frequency, length } => Ok((0..length)
                .map(|t| {
                    let v = (std::f64::consts::TAU * frequency * t as f64).sin();
                    DVector::from_element(input_dim, v)
                })
                .collect()),
            Self::Csv(ref path) => read_csv(path, input_dim),
        }
    }
}

fn read_csv(path: &PathBuf, input_dim: usize) -> Result<Vec<DVector<f64>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read probe {}: {e}", path.display())))?;
    let mut columns: Option<Vec<usize>> = None;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if out.is_empty() && columns.is_none() && fields.iter().any(|f| f.parse::<f64>().is_err()) {
            let picked: Vec<usize> = (0..fields.len()).filter(|&k| fields[k].starts_with("u_")).collect();
            columns = Some(if picked.is_empty() {
                (0..fields.len()).collect()
            } else {
                picked
            });
            continue;
        }
        let cols = columns.get_or_insert_with(|| (0..fields.len()).collect());
        if cols.len() != input_dim {
            return Err(CliError::Config(format!(
                "probe {}: {} input columns, model expects {input_dim}",
                path.display(),
                cols.len()
            )));
        }
        let row = cols
            .iter()
            .map(|&k| {
                fields.get(k).and_then(|f| f.parse::<f64>().ok()).ok_or_else(|| {
                    CliError::Config(format!(
                        "probe {} line {}: bad value in column {k}",
                        path.display(),
                        i + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        out.push(DVector::from_vec(row));
    }
    if out.is_empty() {
        return Err(CliError::Config(format!("probe {} has no data rows", path.display())));
    }
    Ok(out)
}
