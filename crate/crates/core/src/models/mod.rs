//! Differentiable wind-power forecasters.
//!
//! Both models predict an `H`-step power horizon from a power history and an
//! exogenous wind-speed input. The exogenous input is the only tensor an
//! attacker may perturb, so every forward pass accepts it as a [`Var`] and
//! gradients with respect to it come from the same code path as training.

mod cnn;
mod lstm;
mod weights;

use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cnn::{MapConfig, MapForecaster};
pub use lstm::{lstm_cell_step, LstmCell, LstmState, SeriesConfig, SeriesForecaster};
pub use weights::{WEIGHTS_FORMAT, WEIGHTS_VERSION};

use crate::autodiff::{AutodiffError, BoundParams, Graph, ParameterSet, Tensor, Var};

/// Negative-side slope of the leaky-ReLU output unit.
pub const OUTPUT_SLOPE: f64 = 0.01;
/// Negative-side slope of hidden CNN activations.
pub const HIDDEN_SLOPE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("history has length {got}, expected {expected}")]
    HistoryLength { expected: usize, got: usize },
    #[error("exogenous input has shape {got:?}, expected {expected:?}")]
    ExoShape {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("map context has {got} channels, expected {expected}")]
    ChannelCount { expected: usize, got: usize },
    #[error("{0}")]
    Shape(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: malformed weight file: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: unsupported weight file version {found} (expected {expected})")]
    Version {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: weight file holds a {found} model, expected {expected}")]
    KindMismatch {
        path: PathBuf,
        expected: ModelKind,
        found: ModelKind,
    },
    #[error("{path}: parameter {name:?}: {reason}")]
    Parameter {
        path: PathBuf,
        name: String,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Series,
    Maps,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Series => "series",
            ModelKind::Maps => "maps",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "series" => Ok(ModelKind::Series),
            "maps" => Ok(ModelKind::Maps),
            other => Err(format!(
                "unknown model kind {other:?} (expected series or maps)"
            )),
        }
    }
}

/// One evaluation unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSample {
    /// Normalized power over the history window.
    pub history: Vec<f64>,
    /// Standardized wind speeds: `[H]` for series models, `[H, C, Hm, Wm]`
    /// for map models. The attack surface.
    pub exo: Tensor,
    /// Normalized power over the forecast horizon, in `[0, 1]`.
    pub truth: Vec<f64>,
}

impl ForecastSample {
    pub fn horizon(&self) -> usize {
        self.truth.len()
    }

    /// Same sample with a replacement exogenous input.
    pub fn with_exo(&self, exo: Tensor) -> Self {
        Self {
            history: self.history.clone(),
            exo,
            truth: self.truth.clone(),
        }
    }
}

/// Architecture description, enough to rebuild an untrained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    Series(SeriesConfig),
    Maps(MapConfig),
}

impl Architecture {
    pub fn kind(&self) -> ModelKind {
        match self {
            Architecture::Series(_) => ModelKind::Series,
            Architecture::Maps(_) => ModelKind::Maps,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Architecture::Series(c) => c.horizon,
            Architecture::Maps(c) => c.horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Series(SeriesForecaster),
    Maps(MapForecaster),
}

/// Uniform `±1/sqrt(fan_in)` initialization.
pub(crate) fn uniform_init(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("finite init")
}

impl Model {
    pub fn random(arch: Architecture, rng: &mut impl Rng) -> Self {
        match arch {
            Architecture::Series(c) => Model::Series(SeriesForecaster::random(c, rng)),
            Architecture::Maps(c) => Model::Maps(MapForecaster::random(c, rng)),
        }
    }

    pub fn zeros(arch: Architecture) -> Self {
        match arch {
            Architecture::Series(c) => Model::Series(SeriesForecaster::zeros(c)),
            Architecture::Maps(c) => Model::Maps(MapForecaster::zeros(c)),
        }
    }

    pub(crate) fn from_parts(arch: Architecture, params: ParameterSet) -> Self {
        match arch {
            Architecture::Series(c) => Model::Series(SeriesForecaster::from_parts(c, params)),
            Architecture::Maps(c) => Model::Maps(MapForecaster::from_parts(c, params)),
        }
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            Model::Series(m) => Architecture::Series(*m.config()),
            Model::Maps(m) => Architecture::Maps(*m.config()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.architecture().kind()
    }

    pub fn horizon(&self) -> usize {
        match self {
            Model::Series(m) => m.config().horizon,
            Model::Maps(m) => m.config().horizon,
        }
    }

    /// Expected shape of a sample's exogenous input.
    pub fn exo_shape(&self) -> Vec<usize> {
        match self {
            Model::Series(m) => vec![m.config().horizon],
            Model::Maps(m) => {
                let c = m.config();
                vec![c.horizon, c.context, c.height, c.width]
            }
        }
    }

    pub fn params(&self) -> &ParameterSet {
        match self {
            Model::Series(m) => m.params(),
            Model::Maps(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        match self {
            Model::Series(m) => m.params_mut(),
            Model::Maps(m) => m.params_mut(),
        }
    }

    /// Recorded forecast with caller-bound parameters; returns `[H]`.
    pub fn forward<'g>(
        &self,
        params: &BoundParams<'g>,
        history: &[f64],
        exo: Var<'g>,
    ) -> Result<Var<'g>, ModelError> {
        match self {
            Model::Series(m) => m.forward(params, history, exo),
            Model::Maps(m) => m.forward(params, exo),
        }
    }

    /// Unrecorded forecast for `sample`.
    pub fn predict(&self, sample: &ForecastSample) -> Result<Vec<f64>, ModelError> {
        match self {
            Model::Series(m) => m.predict_series(sample),
            Model::Maps(m) => m.predict_maps(sample),
        }
    }

    /// MSE against `truth` and its gradient for every parameter, in set order.
    pub fn parameter_gradients(
        &self,
        history: &[f64],
        exo: &Tensor,
        truth: &[f64],
    ) -> Result<(f64, Vec<Tensor>), ModelError> {
        let graph = Graph::new();
        let params = self.params().bind(&graph, true);
        let exo = graph.constant(exo.clone());
        let target = graph.constant(Tensor::vector(truth.to_vec())?);
        let loss = self.forward(&params, history, exo)?.mse(target)?;
        let value = loss.value().data()[0];
        let grads = graph.backward(loss)?;
        Ok((value, params.collect(&grads)))
    }
}
