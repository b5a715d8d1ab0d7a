//! Line-oriented text persistence of a reservoir and its readout.
//!
//! ```text
//! deepesn-model 1
//! config_hash <hex>
//! seed <u64>
//! library_version <semver>
//! input_dim <n>
//! layers <count>
//! layer <units> <input_dim> <leak> <activation>
//! input dense <rows> <cols>          one line of values per row
//! recurrent sparse <rows> <cols> <nnz>  one `row col value` line per entry
//! bias <len> | bias none             values on one line
//! readout <outputs> <states> <lambda> | readout none
//! ...                                 one line of weights per output
//! intercept <values...> | intercept none
//! end
//! ```
//!
//! Floats use 17 significant digits, so loading and saving again reproduces
//! the file byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use deepesn::tasks::format_float;
use deepesn::weights::CsrMatrix;
use deepesn::{Activation, DeepReservoir, LayerSpec, Readout, Weights};
use nalgebra::{DMatrix, DVector};

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "deepesn-model";

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub library_version: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            config_hash: config_hash.into(),
            seed,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub provenance: Provenance,
    pub reservoir: DeepReservoir,
    pub readout: Option<Readout>,
}

impl ModelFile {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.provenance;
        let _ = writeln!(s, "{MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(s, "config_hash {}", p.config_hash);
        let _ = writeln!(s, "seed {}", p.seed);
        let _ = writeln!(s, "library_version {}", p.library_version);
        let _ = writeln!(s, "input_dim {}", self.reservoir.input_dim());
        let _ = writeln!(s, "layers {}", self.reservoir.n_layers());
        for layer in self.reservoir.layers() {
            let _ = writeln!(
                s,
                "layer {} {} {} {}",
                layer.units(),
                layer.input_dim(),
                format_float(layer.leak_rate()),
                layer.activation()
            );
            write_weights(&mut s, "input", layer.input_weights());
            write_weights(&mut s, "recurrent", layer.recurrent_weights());
            match layer.bias() {
                Some(b) => {
                    let _ = writeln!(s, "bias {}", b.len());
                    write_row(&mut s, b.iter());
                }
                None => s.push_str("bias none\n"),
            }
        }
        match &self.readout {
            Some(r) => {
                let _ = writeln!(
                    s,
                    "readout {} {} {}",
                    r.output_dim(),
                    r.state_dim(),
                    format_float(r.regularization())
                );
                for row in r.weights().row_iter() {
                    write_row(&mut s, row.iter());
                }
                match r.intercept() {
                    Some(b) => {
                        s.push_str("intercept");
                        b.iter().for_each(|v| {
                            let _ = write!(s, " {}", format_float(*v));
                        });
                        s.push('\n');
                    }
                    None => s.push_str("intercept none\n"),
                }
            }
            None => s.push_str("readout none\n"),
        }
        s.push_str("end\n");
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_text()).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut r = Reader {
            lines: text.lines().enumerate(),
            line_no: 0,
        };
        let head = r.fields(MAGIC, 1)?;
        let version: u32 = r.num(head[0])?;
        if version != FORMAT_VERSION {
            return Err(CliError::Model(format!(
                "format version {version} is not supported (this build reads version {FORMAT_VERSION})"
            )));
        }
        let config_hash = r.fields("config_hash", 1)?[0].to_string();
        let seed = r.value("seed")?;
        let library_version = r.fields("library_version", 1)?[0].to_string();
        let input_dim: usize = r.value("input_dim")?;
        let n_layers: usize = r.value("layers")?;
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let f = r.fields("layer", 4)?;
            let (units, in_dim): (usize, usize) = (r.num(f[0])?, r.num(f[1])?);
            let leak: f64 = r.num(f[2])?;
            let activation: Activation = f[3].parse().map_err(|e| r.err(format!("{e}")))?;
            let input = r.weights("input", units, in_dim)?;
            let recurrent = r.weights("recurrent", units, units)?;
            let f = r.fields("bias", 1)?;
            let bias = if f[0] == "none" {
                None
            } else {
                let len: usize = r.num(f[0])?;
                Some(DVector::from_vec(r.row(len)?))
            };
            let layer = LayerSpec::new(leak, activation, input, recurrent, bias)
                .map_err(|e| r.err(format!("layer {i}: {e}")))?;
            layers.push(layer);
        }
        let reservoir = DeepReservoir::new(input_dim, layers).map_err(|e| r.err(e.to_string()))?;
        let f = r.fields("readout", 0)?;
        let readout = match f.as_slice() {
            ["none"] => None,
            [outputs, states, lambda] => {
                let (outputs, states): (usize, usize) = (r.num(outputs)?, r.num(states)?);
                let lambda: f64 = r.num(lambda)?;
                let mut w = DMatrix::zeros(outputs, states);
                for i in 0..outputs {
                    w.row_mut(i).copy_from_slice(&r.row(states)?);
                }
                let f = r.fields("intercept", 0)?;
                let intercept = match f.as_slice() {
                    ["none"] => None,
                    vals => Some(DVector::from_vec(
                        vals.iter().map(|v| r.num(v)).collect::<Result<Vec<f64>, _>>()?,
                    )),
                };
                let readout = Readout::new(w, intercept, lambda).map_err(|e| r.err(e.to_string()))?;
                if readout.state_dim() != reservoir.total_units() {
                    return Err(r.err(format!(
                        "readout expects {} state features, reservoir has {} units",
                        readout.state_dim(),
                        reservoir.total_units()
                    )));
                }
                Some(readout)
            }
            _ => return Err(r.err("readout line expects `none` or three fields".into())),
        };
        r.fields("end", 0)?;
        Ok(Self {
            provenance: Provenance {
                config_hash,
                seed,
                library_version,
            },
            reservoir,
            readout,
        })
    }
}

fn write_row<'a>(s: &mut String, values: impl Iterator<Item = &'a f64>) {
    let mut first = true;
    for v in values {
        if !first {
            s.push(' ');
        }
        first = false;
        s.push_str(&format_float(*v));
    }
    s.push('\n');
}

fn write_weights(s: &mut String, name: &str, w: &Weights) {
    match w {
        Weights::Dense(m) => {
            let _ = writeln!(s, "{name} dense {} {}", m.nrows(), m.ncols());
            for row in m.row_iter() {
                write_row(s, row.iter());
            }
        }
        Weights::Sparse(m) => {
            let _ = writeln!(s, "{name} sparse {} {} {}", w.nrows(), w.ncols(), m.nnz());
            for (r, c, v) in m.triplets() {
                let _ = writeln!(s, "{r} {c} {}", format_float(v));
            }
        }
    }
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line_no: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: String) -> CliError {
        CliError::Model(format!("line {}: {msg}", self.line_no))
    }

    fn next_line(&mut self) -> Result<&'a str, CliError> {
        match self.lines.next() {
            Some((i, line)) => {
                self.line_no = i + 1;
                Ok(line)
            }
            None => Err(CliError::Model("unexpected end of file".into())),
        }
    }

    /// Next line, which must start with `key`; returns the remaining fields.
    /// `count` > 0 requires exactly that many.
    fn fields(&mut self, key: &str, count: usize) -> Result<Vec<&'a str>, CliError> {
        let line = self.next_line()?;
        let mut parts = line.split_ascii_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        let rest: Vec<&str> = parts.collect();
        if count > 0 && rest.len() != count {
            return Err(self.err(format!("`{key}` takes {count} fields, found {}", rest.len())));
        }
        Ok(rest)
    }

    /// Parses the single field of a `key value` line.
    fn value<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, CliError> {
        let f = self.fields(key, 1)?;
        self.num(f[0])
    }

    fn num<T: std::str::FromStr>(&self, s: &str) -> Result<T, CliError> {
        s.parse().map_err(|_| self.err(format!("cannot parse `{s}`")))
    }

    fn row(&mut self, len: usize) -> Result<Vec<f64>, CliError> {
        let line = self.next_line()?;
        let values = line
            .split_ascii_whitespace()
            .map(|v| self.num(v))
            .collect::<Result<Vec<f64>, _>>()?;
        if values.len() != len {
            return Err(self.err(format!("expected {len} values, found {}", values.len())));
        }
        Ok(values)
    }

    fn weights(&mut self, name: &str, rows: usize, cols: usize) -> Result<Weights, CliError> {
        let f = self.fields(name, 0)?;
        let (kind, r, c) = match f.as_slice() {
            [kind, r, c, ..] => (*kind, self.num::<usize>(r)?, self.num::<usize>(c)?),
            _ => return Err(self.err(format!("`{name}` needs a layout and a shape"))),
        };
        if (r, c) != (rows, cols) {
            return Err(self.err(format!("{name} weights are {r}x{c}, expected {rows}x{cols}")));
        }
        match (kind, f.len()) {
            ("dense", 3) => {
                let mut m = DMatrix::zeros(rows, cols);
                for i in 0..rows {
                    m.row_mut(i).copy_from_slice(&self.row(cols)?);
                }
                Ok(Weights::Dense(m))
            }
            ("sparse", 4) => {
                let nnz: usize = self.num(f[3])?;
                let mut triplets = Vec::with_capacity(nnz);
                for _ in 0..nnz {
                    let line = self.next_line()?;
                    let p: Vec<&str> = line.split_ascii_whitespace().collect();
                    let [i, j, v] = p.as_slice() else {
                        return Err(self.err("sparse entry needs `row col value`".into()));
                    };
                    triplets.push((self.num(i)?, self.num(j)?, self.num(v)?));
                }
                CsrMatrix::from_sorted_triplets(rows, cols, &triplets)
                    .map(Weights::Sparse)
                    .map_err(|e| self.err(e.to_string()))
            }
            _ => Err(self.err(format!("unknown layout `{kind}` for {name} weights"))),
        }
    }
}
