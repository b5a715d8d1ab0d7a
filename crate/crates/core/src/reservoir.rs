//! Stacked leaky-integrator reservoir layers.
//!
//! Layer 1 is driven by the external input, every higher layer by the state
//! the layer directly below reached in the *same* time step:
//!
//! ```text
//! x1(t) = (1 - a1) x1(t-1) + f(W1 u(t)    + Ŵ1 x1(t-1) + b1)
//! xi(t) = (1 - ai) xi(t-1) + f(Wi x{i-1}(t) + Ŵi xi(t-1) + bi)
//! ```
//!
//! The nonlinear term is not multiplied by the leak rate. There is no coupling
//! from the input to layers above the first, from a layer to any layer below
//! it, or from a layer to anything but its immediate successor: a
//! [`DeepReservoir`] has nowhere to store such weights.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::weights::Weights;

/// Element-wise unit nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// One reservoir layer: its feed-in weights (from the external input for the
/// first layer, from the layer below otherwise), recurrent weights, leak rate,
/// activation and optional bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    leak_rate: f64,
    activation: Activation,
    input_weights: Weights,
    recurrent_weights: Weights,
    bias: Option<DVector<f64>>,
}

impl LayerSpec {
    pub fn new(
        leak_rate: f64,
        activation: Activation,
        input_weights: impl Into<Weights>,
        recurrent_weights: impl Into<Weights>,
        bias: Option<DVector<f64>>,
    ) -> Result<Self> {
        let input_weights = input_weights.into();
        let recurrent_weights = recurrent_weights.into();
        if !(0.0..=1.0).contains(&leak_rate) {
            return Err(Error::Config(format!("leak rate {leak_rate} outside [0, 1]")));
        }
        let units = recurrent_weights.nrows();
        if units == 0 {
            return Err(Error::Config("layer must have at least one unit".into()));
        }
        check_dim("recurrent weight columns", units, recurrent_weights.ncols())?;
        check_dim("input weight rows", units, input_weights.nrows())?;
        if input_weights.ncols() == 0 {
            return Err(Error::Config("layer input width must be positive".into()));
        }
        if let Some(b) = &bias {
            check_dim("bias length", units, b.len())?;
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data("non-finite bias entry".into()));
            }
        }
        if !input_weights.is_finite() || !recurrent_weights.is_finite() {
            return Err(Error::Data("non-finite weight entry".into()));
        }
        Ok(Self {
            leak_rate,
            activation,
            input_weights,
            recurrent_weights,
            bias,
        })
    }

    pub fn units(&self) -> usize {
        self.recurrent_weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.ncols()
    }

    pub fn leak_rate(&self) -> f64 {
        self.leak_rate
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_weights(&self) -> &Weights {
        &self.input_weights
    }

    pub fn recurrent_weights(&self) -> &Weights {
        &self.recurrent_weights
    }

    pub fn bias(&self) -> Option<&DVector<f64>> {
        self.bias.as_ref()
    }

    pub(crate) fn recurrent_weights_mut(&mut self) -> &mut Weights {
        &mut self.recurrent_weights
    }

    /// `W·input + Ŵ·x_prev + b`, the argument of the activation.
    pub fn pre_activation(&self, input: &DVector<f64>, x_prev: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("layer input", self.input_dim(), input.len())?;
        check_dim("layer state", self.units(), x_prev.len())?;
        let mut pre = match &self.bias {
            Some(b) => b.clone(),
            None => DVector::zeros(self.units()),
        };
        self.input_weights.mul_add_to(input, &mut pre);
        self.recurrent_weights.mul_add_to(x_prev, &mut pre);
        Ok(pre)
    }

    fn advance(&self, input: &DVector<f64>, x_prev: &DVector<f64>) -> Result<DVector<f64>> {
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite layer input".into()));
        }
        let pre = self.pre_activation(input, x_prev)?;
        let keep = 1.0 - self.leak_rate;
        let f = self.activation;
        Ok(x_prev.zip_map(&pre, |x, p| keep * x + f.apply(p)))
    }
}

/// Updates the input-driven first layer.
pub fn step_first_layer(spec: &LayerSpec, u: &DVector<f64>, x_prev: &DVector<f64>) -> Result<DVector<f64>> {
    spec.advance(u, x_prev)
}

/// Updates a layer above the first from the current-step state of the layer
/// below.
pub fn step_higher_layer(spec: &LayerSpec, x_below_now: &DVector<f64>, x_prev: &DVector<f64>) -> Result<DVector<f64>> {
    spec.advance(x_below_now, x_prev)
}

/// Per-layer states at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    layers: Vec<DVector<f64>>,
}

impl GlobalState {
    pub fn new(layers: Vec<DVector<f64>>) -> Self {
        Self { layers }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::new(dims.iter().map(|&d| DVector::zeros(d)).collect())
    }

    /// Splits a flat vector back into layers of the given widths.
    pub fn split(flat: &DVector<f64>, dims: &[usize]) -> Result<Self> {
        check_dim("flat state length", dims.iter().sum(), flat.len())?;
        let mut offset = 0;
        let layers = dims
            .iter()
            .map(|&d| {
                let part = flat.rows(offset, d).into_owned();
                offset += d;
                part
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DVector<f64>] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &DVector<f64> {
        &self.layers[i]
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut DVector<f64> {
        &mut self.layers[i]
    }

    pub fn dims(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.len()).collect()
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Layer states concatenated bottom-up.
    pub fn concat(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        let mut offset = 0;
        for l in &self.layers {
            out.rows_mut(offset, l.len()).copy_from(l);
            offset += l.len();
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.iter().all(|v| v.is_finite()))
    }
}

/// Concatenates layer states, first layer first.
pub fn concat_state(s: &GlobalState) -> DVector<f64> {
    s.concat()
}

/// A run of global states with the washout length recorded (not removed).
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    steps: Vec<GlobalState>,
    washout: usize,
}

impl StateTrajectory {
    pub fn new(steps: Vec<GlobalState>, washout: usize) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Data("empty trajectory".into()));
        }
        if washout >= steps.len() {
            return Err(Error::Config(format!(
                "washout {washout} must be shorter than trajectory length {}",
                steps.len()
            )));
        }
        let dims = steps[0].dims();
        if steps.iter().any(|s| s.dims() != dims) {
            return Err(Error::Data("trajectory states have inconsistent layout".into()));
        }
        Ok(Self { steps, washout })
    }

    pub fn steps(&self) -> &[GlobalState] {
        &self.steps
    }

    pub fn washout(&self) -> usize {
        self.washout
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last(&self) -> &GlobalState {
        self.steps.last().expect("trajectory is never empty")
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        self.steps[0].dims()
    }

    pub fn post_washout(&self) -> &[GlobalState] {
        &self.steps[self.washout..]
    }

    /// Concatenated states of steps `range` as rows of a matrix.
    pub fn state_matrix(&self, range: std::ops::Range<usize>) -> nalgebra::DMatrix<f64> {
        let width = self.steps[0].len();
        let rows = &self.steps[range];
        let mut m = nalgebra::DMatrix::zeros(rows.len(), width);
        for (r, s) in rows.iter().enumerate() {
            let mut c = 0;
            for l in s.layers() {
                for &v in l.iter() {
                    m[(r, c)] = v;
                    c += 1;
                }
            }
        }
        m
    }
}

/// A stack of reservoir layers wired as a strict bottom-up pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepReservoir {
    layers: Vec<LayerSpec>,
    input_dim: usize,
}

impl DeepReservoir {
    pub fn new(input_dim: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a reservoir needs at least one layer".into()));
        }
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        let mut feed = input_dim;
        for (i, l) in layers.iter().enumerate() {
            check_dim("layer input width", feed, l.input_dim()).map_err(|e| e.in_layer(i))?;
            feed = l.units();
        }
        Ok(Self { layers, input_dim })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerSpec] {
        &mut self.layers
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        self.layers.iter().map(LayerSpec::units).collect()
    }

    pub fn total_units(&self) -> usize {
        self.layers.iter().map(LayerSpec::units).sum()
    }

    pub fn zero_state(&self) -> GlobalState {
        GlobalState::zeros(&self.layer_dims())
    }

    fn check_state(&self, s: &GlobalState) -> Result<()> {
        check_dim("state layer count", self.n_layers(), s.layers().len())?;
        for (i, (l, x)) in self.layers.iter().zip(s.layers()).enumerate() {
            check_dim("layer state", l.units(), x.len()).map_err(|e| e.in_layer(i))?;
        }
        Ok(())
    }

    /// Advances every layer by one time step, bottom-up, each higher layer
    /// seeing its predecessor's freshly updated state.
    pub fn step(&self, u: &DVector<f64>, prev: &GlobalState) -> Result<GlobalState> {
        check_dim("input vector", self.input_dim, u.len())?;
        self.check_state(prev)?;
        let mut next: Vec<DVector<f64>> = Vec::with_capacity(self.n_layers());
        for (i, (spec, x_prev)) in self.layers.iter().zip(prev.layers()).enumerate() {
            let x = match next.last() {
                None => step_first_layer(spec, u, x_prev),
                Some(below) => step_higher_layer(spec, below, x_prev),
            }
            .map_err(|e| e.in_layer(i))?;
            next.push(x);
        }
        Ok(GlobalState::new(next))
    }

    /// Drives the reservoir with `inputs` from `initial` (zero state when
    /// `None`). The trajectory holds the state after each input.
    pub fn run(
        &self,
        inputs: &[DVector<f64>],
        initial: Option<&GlobalState>,
        washout: usize,
    ) -> Result<StateTrajectory> {
        if inputs.is_empty() {
            return Err(Error::Data("empty input sequence".into()));
        }
        if washout >= inputs.len() {
            return Err(Error::Config(format!(
                "washout {washout} must be shorter than input length {}",
                inputs.len()
            )));
        }
        let mut state = match initial {
            Some(s) => {
                self.check_state(s)?;
                s.clone()
            }
            None => self.zero_state(),
        };
        let mut steps = Vec::with_capacity(inputs.len());
        for u in inputs {
            state = self.step(u, &state)?;
            steps.push(state.clone());
        }
        StateTrajectory::new(steps, washout)
    }
}

/// Functional alias for [`DeepReservoir::step`].
pub fn step_global(res: &DeepReservoir, u: &DVector<f64>, state_prev: &GlobalState) -> Result<GlobalState> {
    res.step(u, state_prev)
}
