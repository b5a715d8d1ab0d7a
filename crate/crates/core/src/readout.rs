//! Linear readout over the concatenated states of all layers, trained in
//! closed form.
//!
//! Ridge regression is solved through a thin SVD of the (optionally centred)
//! state matrix, `Wᵀ = V diag(σ / (σ² + λ)) Uᵀ Y`. This is the solution of
//! `(SᵀS + λI) Wᵀ = SᵀY`; at `λ = 0` singular values below the rank
//! tolerance are dropped, which yields the minimum-norm (pseudo-inverse)
//! solution. One factorisation serves any number of λ values.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::reservoir::StateTrajectory;

/// Post-washout states (one row per step) and aligned targets.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    states: DMatrix<f64>,
    targets: DMatrix<f64>,
}

impl RegressionProblem {
    pub fn new(states: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        check_dim("target rows", states.nrows(), targets.nrows())?;
        if states.nrows() == 0 || states.ncols() == 0 || targets.ncols() == 0 {
            return Err(Error::Data("regression problem must be non-empty".into()));
        }
        if states.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite entry in regression problem".into()));
        }
        Ok(Self { states, targets })
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }
}

/// Trained output map `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    weights: DMatrix<f64>,
    intercept: Option<DVector<f64>>,
    regularization: f64,
}

impl Readout {
    pub fn new(weights: DMatrix<f64>, intercept: Option<DVector<f64>>, regularization: f64) -> Result<Self> {
        if !(regularization >= 0.0) {
            return Err(Error::Config(format!(
                "regularization {regularization} must be non-negative"
            )));
        }
        if let Some(b) = &intercept {
            check_dim("intercept length", weights.nrows(), b.len())?;
        }
        let finite = weights
            .iter()
            .chain(intercept.iter().flat_map(|b| b.iter()))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Data("non-finite readout weight".into()));
        }
        Ok(Self {
            weights,
            intercept,
            regularization,
        })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn intercept(&self) -> Option<&DVector<f64>> {
        self.intercept.as_ref()
    }

    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    /// State width the readout was trained on.
    pub fn state_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Outputs for a matrix of states, one row per step.
    pub fn apply(&self, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("readout state width", self.state_dim(), states.ncols())?;
        let mut out = states * self.weights.transpose();
        if let Some(b) = &self.intercept {
            for mut row in out.row_iter_mut() {
                row += b.transpose();
            }
        }
        Ok(out)
    }

    pub fn apply_one(&self, state: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("readout state width", self.state_dim(), state.len())?;
        let mut y = &self.weights * state;
        if let Some(b) = &self.intercept {
            y += b;
        }
        Ok(y)
    }
}

/// SVD of a regression problem, reusable across regularisation strengths.
#[derive(Debug, Clone)]
pub struct RidgeSolver {
    u_t_y: DMatrix<f64>,
    singular: DVector<f64>,
    v: DMatrix<f64>,
    rank_tol: f64,
    centering: Option<(DVector<f64>, DVector<f64>)>,
}

impl RidgeSolver {
    pub fn new(problem: &RegressionProblem, fit_intercept: bool) -> Result<Self> {
        let mut s = problem.states.clone();
        let mut y = problem.targets.clone();
        let centering = if fit_intercept {
            let s_mean = column_means(&s);
            let y_mean = column_means(&y);
            for mut row in s.row_iter_mut() {
                row -= s_mean.transpose();
            }
            for mut row in y.row_iter_mut() {
                row -= y_mean.transpose();
            }
            Some((s_mean, y_mean))
        } else {
            None
        };
        let (rows, cols) = s.shape();
        let svd = SVD::try_new(s, true, true, f64::EPSILON, 0)
            .ok_or_else(|| Error::Numerical("SVD of state matrix did not converge".into()))?;
        let u = svd.u.expect("requested U");
        let v_t = svd.v_t.expect("requested Vᵀ");
        let singular = svd.singular_values;
        let max_sv = singular.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            u_t_y: u.transpose() * y,
            singular,
            v: v_t.transpose(),
            rank_tol: rows.max(cols) as f64 * f64::EPSILON * max_sv,
            centering,
        })
    }

    pub fn solve(&self, lambda: f64) -> Result<Readout> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!(
                "ridge parameter {lambda} must be finite and non-negative"
            )));
        }
        let gains = self.singular.map(|s| {
            if lambda == 0.0 {
                if s > self.rank_tol {
                    1.0 / s
                } else {
                    0.0
                }
            } else {
                s / (s * s + lambda)
            }
        });
        let mut scaled = self.u_t_y.clone();
        for (mut row, g) in scaled.row_iter_mut().zip(gains.iter()) {
            row *= *g;
        }
        let weights = (&self.v * scaled).transpose();
        let intercept = self
            .centering
            .as_ref()
            .map(|(s_mean, y_mean)| y_mean - &weights * s_mean);
        Readout::new(weights, intercept, lambda)
    }
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

/// Closed-form ridge regression. The intercept, when fitted, is not penalised.
pub fn train_ridge(p: &RegressionProblem, lambda: f64, fit_intercept: bool) -> Result<Readout> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("ridge parameter {lambda} must be non-negative")));
    }
    RidgeSolver::new(p, fit_intercept)?.solve(lambda)
}

/// Readout outputs for every step of a trajectory, washout included.
pub fn predict(r: &Readout, trajectory: &StateTrajectory) -> Result<DMatrix<f64>> {
    r.apply(&trajectory.state_matrix(0..trajectory.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Nrmse,
    Accuracy,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Mse => "mse",
            Metric::Nrmse => "nrmse",
            Metric::Accuracy => "accuracy",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(Metric::Mse),
            "nrmse" => Ok(Metric::Nrmse),
            "accuracy" => Ok(Metric::Accuracy),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

fn argmax(row: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in row.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Scores predictions against targets (rows are time steps).
///
/// MSE averages over all entries. NRMSE is `sqrt(MSE / var)` where `var` is
/// the population variance of the targets, averaged over output channels.
/// Accuracy compares row-wise argmax.
pub fn evaluate(pred: &DMatrix<f64>, target: &DMatrix<f64>, metric: Metric) -> Result<f64> {
    check_dim("prediction rows", target.nrows(), pred.nrows())?;
    check_dim("prediction columns", target.ncols(), pred.ncols())?;
    if target.is_empty() {
        return Err(Error::Data("cannot evaluate empty sequences".into()));
    }
    let mse = || (pred - target).map(|e| e * e).mean();
    match metric {
        Metric::Mse => Ok(mse()),
        Metric::Nrmse => {
            let n = target.nrows() as f64;
            let var = target
                .column_iter()
                .map(|c| {
                    let m = c.sum() / n;
                    c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
                })
                .sum::<f64>()
                / target.ncols() as f64;
            if var == 0.0 {
                return Err(Error::Undefined("NRMSE of a zero-variance target".into()));
            }
            Ok((mse() / var).sqrt())
        }
        Metric::Accuracy => {
            let hits = pred
                .row_iter()
                .zip(target.row_iter())
                .filter(|(p, t)| argmax(p.iter().copied()) == argmax(t.iter().copied()))
                .count();
            Ok(hits as f64 / target.nrows() as f64)
        }
    }
}
