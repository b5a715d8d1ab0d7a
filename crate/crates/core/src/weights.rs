//! Weight matrices in dense or compressed-sparse-row form.
//!
//! Reservoir layers hold their input and recurrent couplings as [`Weights`];
//! the stepping code only needs `y += W x`, so both layouts share that
//! entry point and everything else goes through [`Weights::to_dense`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Row-major compressed sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets, which must be sorted row-major
    /// with no duplicate positions.
    pub fn from_sorted_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut row_offsets = vec![0usize; nrows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::Data(format!("sparse entry ({r}, {c}) outside {nrows}x{ncols}")));
            }
            if let Some(prev) = last {
                if (r, c) <= prev {
                    return Err(Error::Data("sparse triplets must be strictly row-major ordered".into()));
                }
            }
            last = Some((r, c));
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
        }
        for r in 0..nrows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Ok(Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Row-major `(row, col, value)` view of the stored entries.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let span = self.row_offsets[r]..self.row_offsets[r + 1];
            span.map(move |k| (r, self.col_indices[k], self.values[k]))
        })
    }

    fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

impl Weights {
    pub fn nrows(&self) -> usize {
        match self {
            Weights::Dense(m) => m.nrows(),
            Weights::Sparse(m) => m.nrows,
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Weights::Dense(m) => m.ncols(),
            Weights::Sparse(m) => m.ncols,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Weights::Sparse(_))
    }

    /// Number of structurally stored entries.
    pub fn stored_entries(&self) -> usize {
        match self {
            Weights::Dense(m) => m.len(),
            Weights::Sparse(m) => m.nnz(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Weights::Dense(m) => m.iter().all(|v| v.is_finite()),
            Weights::Sparse(m) => m.values.iter().all(|v| v.is_finite()),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Weights::Dense(m) => m.clone(),
            Weights::Sparse(m) => {
                let mut out = DMatrix::zeros(m.nrows, m.ncols);
                for (r, c, v) in m.triplets() {
                    out[(r, c)] = v;
                }
                out
            }
        }
    }

    /// `out += self * x`. Dimensions are the caller's responsibility.
    pub(crate) fn mul_add_to(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        match self {
            Weights::Dense(m) => out.gemv(1.0, m, x, 1.0),
            Weights::Sparse(m) => {
                for r in 0..m.nrows {
                    let mut acc = 0.0;
                    for k in m.row_offsets[r]..m.row_offsets[r + 1] {
                        acc += m.values[k] * x[m.col_indices[k]];
                    }
                    out[r] += acc;
                }
            }
        }
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        match self {
            Weights::Dense(m) => *m *= factor,
            Weights::Sparse(m) => m.scale(factor),
        }
    }
}

impl From<DMatrix<f64>> for Weights {
    fn from(m: DMatrix<f64>) -> Self {
        Weights::Dense(m)
    }
}
