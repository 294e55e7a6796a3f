//! Encoder-decoder LSTM over a power history, with the exogenous wind-speed
//! forecast fed to the decoder one step at a time.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{uniform_init, ForecastSample, ModelError, OUTPUT_SLOPE};
use crate::autodiff::{BoundParams, Graph, ParameterSet, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesConfig {
    pub hidden: usize,
    pub history: usize,
    pub horizon: usize,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            history: 12,
            horizon: 8,
        }
    }
}

/// Weights of one LSTM cell bound into a graph.
///
/// Gates are stacked in the order input, forget, candidate, output, so the
/// pre-activation has `4 * hidden` rows.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell<'g> {
    pub w_input: Var<'g>,
    pub w_hidden: Var<'g>,
    pub bias: Var<'g>,
}

/// Hidden and cell state, each `[hidden, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmState<'g> {
    pub h: Var<'g>,
    pub c: Var<'g>,
}

impl<'g> LstmState<'g> {
    pub fn zeros(graph: &'g Graph, hidden: usize) -> Self {
        Self {
            h: graph.constant(Tensor::zeros(&[hidden, 1])),
            c: graph.constant(Tensor::zeros(&[hidden, 1])),
        }
    }
}

/// One LSTM step: `x` is `[input, 1]`.
pub fn lstm_cell_step<'g>(
    cell: &LstmCell<'g>,
    x: Var<'g>,
    state: LstmState<'g>,
) -> Result<LstmState<'g>, ModelError> {
    let hidden = state.h.shape()[0];
    let pre = cell
        .w_input
        .matmul(x)?
        .add(cell.w_hidden.matmul(state.h)?)?
        .add(cell.bias)?;
    if pre.shape()[0] != 4 * hidden {
        return Err(ModelError::Shape(format!(
            "lstm gates have {} rows, expected {}",
            pre.shape()[0],
            4 * hidden
        )));
    }
    let input_gate = pre.slice(0, hidden)?.sigmoid()?;
    let forget_gate = pre.slice(hidden, 2 * hidden)?.sigmoid()?;
    let candidate = pre.slice(2 * hidden, 3 * hidden)?.tanh()?;
    let output_gate = pre.slice(3 * hidden, 4 * hidden)?.sigmoid()?;
    let c = forget_gate.mul(state.c)?.add(input_gate.mul(candidate)?)?;
    let h = output_gate.mul(c.tanh()?)?;
    Ok(LstmState { h, c })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesForecaster {
    config: SeriesConfig,
    params: ParameterSet,
}

const ENC_W_IN: usize = 0;
const ENC_W_HID: usize = 1;
const ENC_BIAS: usize = 2;
const DEC_W_IN: usize = 3;
const DEC_W_HID: usize = 4;
const DEC_BIAS: usize = 5;
const OUT_W: usize = 6;
const OUT_BIAS: usize = 7;

impl SeriesForecaster {
    /// Parameter names and shapes in storage order.
    pub fn layout(config: &SeriesConfig) -> Vec<(String, Vec<usize>)> {
        let h = config.hidden;
        vec![
            ("encoder.w_input".into(), vec![4 * h, 1]),
            ("encoder.w_hidden".into(), vec![4 * h, h]),
            ("encoder.bias".into(), vec![4 * h, 1]),
            ("decoder.w_input".into(), vec![4 * h, 2]),
            ("decoder.w_hidden".into(), vec![4 * h, h]),
            ("decoder.bias".into(), vec![4 * h, 1]),
            ("head.weight".into(), vec![1, h]),
            ("head.bias".into(), vec![1, 1]),
        ]
    }

    pub fn zeros(config: SeriesConfig) -> Self {
        let mut params = ParameterSet::new();
        for (name, shape) in Self::layout(&config) {
            params
                .insert(name, Tensor::zeros(&shape))
                .expect("layout names are unique");
        }
        Self { config, params }
    }

    /// Uniform `±1/sqrt(fan_in)` initialization; fan-in of LSTM weights is
    /// the hidden width.
    pub fn random(config: SeriesConfig, rng: &mut impl Rng) -> Self {
        let mut params = ParameterSet::new();
        for (name, shape) in Self::layout(&config) {
            params
                .insert(name, uniform_init(&shape, config.hidden, rng))
                .expect("layout names are unique");
        }
        Self { config, params }
    }

    pub(super) fn from_parts(config: SeriesConfig, params: ParameterSet) -> Self {
        Self { config, params }
    }

    pub fn config(&self) -> &SeriesConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    /// Autoregressive forecast: decoder step `t` consumes `exo[t]` and the
    /// previous prediction (the last observed power at `t = 0`).
    pub fn forward<'g>(
        &self,
        params: &BoundParams<'g>,
        history: &[f64],
        exo: Var<'g>,
    ) -> Result<Var<'g>, ModelError> {
        let SeriesConfig {
            hidden,
            history: hist_len,
            horizon,
        } = self.config;
        if history.len() != hist_len {
            return Err(ModelError::HistoryLength {
                expected: hist_len,
                got: history.len(),
            });
        }
        if exo.shape() != [horizon] {
            return Err(ModelError::ExoShape {
                expected: vec![horizon],
                got: exo.shape(),
            });
        }
        let graph = exo.graph();
        let encoder = LstmCell {
            w_input: params.get(ENC_W_IN),
            w_hidden: params.get(ENC_W_HID),
            bias: params.get(ENC_BIAS),
        };
        let decoder = LstmCell {
            w_input: params.get(DEC_W_IN),
            w_hidden: params.get(DEC_W_HID),
            bias: params.get(DEC_BIAS),
        };

        let mut state = LstmState::zeros(graph, hidden);
        for &p in history {
            let x = graph.constant(Tensor::new(vec![1, 1], vec![p])?);
            state = lstm_cell_step(&encoder, x, state)?;
        }

        let mut previous = graph.constant(Tensor::new(vec![1, 1], vec![history[hist_len - 1]])?);
        let mut outputs = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let speed = exo.slice(t, t + 1)?.reshape(vec![1, 1])?;
            let x = Var::concat(&[speed, previous])?;
            state = lstm_cell_step(&decoder, x, state)?;
            let y = params
                .get(OUT_W)
                .matmul(state.h)?
                .add(params.get(OUT_BIAS))?
                .leaky_relu(OUTPUT_SLOPE)?;
            outputs.push(y);
            previous = y;
        }
        Ok(Var::concat(&outputs)?.reshape(vec![horizon])?)
    }

    /// Unrecorded forecast for one sample.
    pub fn predict_series(&self, sample: &ForecastSample) -> Result<Vec<f64>, ModelError> {
        let graph = Graph::new();
        let params = self.params.bind(&graph, false);
        let exo = graph.constant(sample.exo.clone());
        let out = self.forward(&params, &sample.history, exo)?;
        Ok(out.value().data().to_vec())
    }
}
