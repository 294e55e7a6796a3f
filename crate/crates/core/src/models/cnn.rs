//! Residual CNN that maps a stack of wind-speed maps to one power value.
//!
//! The same network is applied independently to each forecast step's
//! context, so step `t` of the forecast only sees context `t`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{uniform_init, ForecastSample, ModelError, HIDDEN_SLOPE, OUTPUT_SLOPE};
use crate::autodiff::{BoundParams, Graph, ParameterSet, Tensor, Var};

const KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapConfig {
    /// Maps per context; each one is an input channel.
    pub context: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub blocks: usize,
    pub horizon: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            context: 5,
            height: 20,
            width: 17,
            channels: 16,
            blocks: 3,
            horizon: 8,
        }
    }
}

impl MapConfig {
    pub fn context_shape(&self) -> [usize; 3] {
        [self.context, self.height, self.width]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapForecaster {
    config: MapConfig,
    params: ParameterSet,
}

impl MapForecaster {
    /// Parameter names, shapes and fan-ins in storage order.
    fn layout_with_fan_in(config: &MapConfig) -> Vec<(String, Vec<usize>, usize)> {
        let ch = config.channels;
        let conv_fan = ch * KERNEL * KERNEL;
        let mut layout = vec![
            (
                "stem.weight".to_string(),
                vec![ch, config.context, KERNEL, KERNEL],
                config.context * KERNEL * KERNEL,
            ),
            (
                "stem.bias".to_string(),
                vec![ch],
                config.context * KERNEL * KERNEL,
            ),
        ];
        for b in 0..config.blocks {
            for conv in ["conv1", "conv2"] {
                layout.push((
                    format!("block{b}.{conv}.weight"),
                    vec![ch, ch, KERNEL, KERNEL],
                    conv_fan,
                ));
                layout.push((format!("block{b}.{conv}.bias"), vec![ch], conv_fan));
            }
        }
        layout.push(("head.weight".to_string(), vec![1, ch], ch));
        layout.push(("head.bias".to_string(), vec![1, 1], ch));
        layout
    }

    pub fn layout(config: &MapConfig) -> Vec<(String, Vec<usize>)> {
        Self::layout_with_fan_in(config)
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .collect()
    }

    pub fn zeros(config: MapConfig) -> Self {
        let mut params = ParameterSet::new();
        for (name, shape) in Self::layout(&config) {
            params
                .insert(name, Tensor::zeros(&shape))
                .expect("layout names are unique");
        }
        Self { config, params }
    }

    pub fn random(config: MapConfig, rng: &mut impl Rng) -> Self {
        let mut params = ParameterSet::new();
        for (name, shape, fan_in) in Self::layout_with_fan_in(&config) {
            params
                .insert(name, uniform_init(&shape, fan_in, rng))
                .expect("layout names are unique");
        }
        Self { config, params }
    }

    pub(super) fn from_parts(config: MapConfig, params: ParameterSet) -> Self {
        Self { config, params }
    }

    pub fn config(&self) -> &MapConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    /// Power estimate for a single `[C, H, W]` context, as a `[1, 1]` tensor.
    pub fn forward_context<'g>(
        &self,
        params: &BoundParams<'g>,
        context: Var<'g>,
    ) -> Result<Var<'g>, ModelError> {
        let mut h = context
            .conv2d(params.get(0), params.get(1))?
            .leaky_relu(HIDDEN_SLOPE)?;
        for b in 0..self.config.blocks {
            let base = 2 + 4 * b;
            let r = h
                .conv2d(params.get(base), params.get(base + 1))?
                .leaky_relu(HIDDEN_SLOPE)?
                .conv2d(params.get(base + 2), params.get(base + 3))?;
            h = h.add(r)?.leaky_relu(HIDDEN_SLOPE)?;
        }
        let head = 2 + 4 * self.config.blocks;
        let pooled = h.spatial_mean()?.reshape(vec![self.config.channels, 1])?;
        Ok(params
            .get(head)
            .matmul(pooled)?
            .add(params.get(head + 1))?
            .leaky_relu(OUTPUT_SLOPE)?)
    }

    /// Forecast from `exo` of shape `[H, C, Hm, Wm]`.
    pub fn forward<'g>(
        &self,
        params: &BoundParams<'g>,
        exo: Var<'g>,
    ) -> Result<Var<'g>, ModelError> {
        let [c, hm, wm] = self.config.context_shape();
        let horizon = self.config.horizon;
        let shape = exo.shape();
        if shape.len() == 4 && shape[0] == horizon && shape[1] != c && shape[2..] == [hm, wm] {
            return Err(ModelError::ChannelCount {
                expected: c,
                got: shape[1],
            });
        }
        if shape != [horizon, c, hm, wm] {
            return Err(ModelError::ExoShape {
                expected: vec![horizon, c, hm, wm],
                got: shape,
            });
        }
        let outputs = (0..horizon)
            .map(|t| {
                let context = exo.slice(t, t + 1)?.reshape(vec![c, hm, wm])?;
                self.forward_context(params, context)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Var::concat(&outputs)?.reshape(vec![horizon])?)
    }

    /// Unrecorded forecast for one sample.
    pub fn predict_maps(&self, sample: &ForecastSample) -> Result<Vec<f64>, ModelError> {
        let graph = Graph::new();
        let params = self.params.bind(&graph, false);
        let exo = graph.constant(sample.exo.clone());
        let out = self.forward(&params, exo)?;
        Ok(out.value().data().to_vec())
    }
}
