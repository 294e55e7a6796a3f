use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::autodiff::Tensor;
use crate::models::ForecastSample;

/// z-score transform fitted on a training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    /// Population standard deviation of the training values.
    pub std: f64,
}

impl Standardizer {
    pub fn fit(train: &[f64]) -> Result<Self, ScenarioError> {
        if train.is_empty() {
            return Err(ScenarioError::ZeroVariance);
        }
        let n = train.len() as f64;
        let mean = train.iter().sum::<f64>() / n;
        let std = (train.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if !(std > 1e-12) {
            return Err(ScenarioError::ZeroVariance);
        }
        Ok(Self { mean, std })
    }

    pub fn transform(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| (v - self.mean) / self.std).collect()
    }

    pub fn inverse(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| v * self.std + self.mean).collect()
    }
}

/// Exogenous wind input aligned with a power series.
#[derive(Debug, Clone, Copy)]
pub enum ExoSource<'a> {
    /// One standardized speed per time step.
    Series(&'a [f64]),
    /// One standardized `height x width` field per time step; forecast step
    /// `t` sees the `context` fields ending at `t`.
    Maps {
        fields: &'a [Vec<f64>],
        height: usize,
        width: usize,
        context: usize,
    },
}

impl ExoSource<'_> {
    fn len(&self) -> usize {
        match self {
            ExoSource::Series(s) => s.len(),
            ExoSource::Maps { fields, .. } => fields.len(),
        }
    }
}

/// One-step sliding windows: sample `k` has history `power[k..k+history]`
/// and truth `power[k+history..k+history+horizon]`.
pub fn make_windows(
    power: &[f64],
    exo: ExoSource<'_>,
    history: usize,
    horizon: usize,
) -> Result<Vec<ForecastSample>, ScenarioError> {
    if exo.len() != power.len() {
        return Err(ScenarioError::Config(format!(
            "power has {} steps but exogenous input has {}",
            power.len(),
            exo.len()
        )));
    }
    if history == 0 || horizon == 0 || power.len() < history + horizon {
        return Err(ScenarioError::TooShort {
            length: power.len(),
            needed: history + horizon,
        });
    }
    if let ExoSource::Maps { context, .. } = exo {
        if context == 0 || context > history + 1 {
            return Err(ScenarioError::Config(format!(
                "map context {context} must be between 1 and history + 1 = {}",
                history + 1
            )));
        }
    }
    let count = power.len() - history - horizon + 1;
    let mut samples = Vec::with_capacity(count);
    for k in 0..count {
        let start = k + history;
        let exo_tensor = match exo {
            ExoSource::Series(speeds) => Tensor::vector(speeds[start..start + horizon].to_vec()),
            ExoSource::Maps {
                fields,
                height,
                width,
                context,
            } => {
                let mut data = Vec::with_capacity(horizon * context * height * width);
                for t in start..start + horizon {
                    for field in &fields[t + 1 - context..=t] {
                        data.extend_from_slice(field);
                    }
                }
                Tensor::new(vec![horizon, context, height, width], data)
            }
        }
        .map_err(|e| ScenarioError::Config(e.to_string()))?;
        samples.push(ForecastSample {
            history: power[k..start].to_vec(),
            exo: exo_tensor,
            truth: power[start..start + horizon].to_vec(),
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / n as f64).collect()
    }

    #[test]
    fn window_counts() {
        let p = ramp(20);
        assert_eq!(
            make_windows(&p, ExoSource::Series(&p), 12, 8)
                .unwrap()
                .len(),
            1
        );
        let p = ramp(21);
        let w = make_windows(&p, ExoSource::Series(&p), 12, 8).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].truth[1..], w[1].truth[..7]);
        assert!(make_windows(&ramp(19), ExoSource::Series(&ramp(19)), 12, 8).is_err());
    }

    #[test]
    fn truth_and_exo_alignment() {
        let p = ramp(30);
        let speeds: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let w = make_windows(&p, ExoSource::Series(&speeds), 12, 8).unwrap();
        for (k, s) in w.iter().enumerate() {
            assert_eq!(s.truth, p[k + 12..k + 20]);
            assert_eq!(s.history, p[k..k + 12]);
            assert_eq!(s.exo.data(), &speeds[k + 12..k + 20]);
        }
    }

    #[test]
    fn map_contexts_end_at_forecast_step() {
        let n = 22;
        let p = ramp(n);
        let fields: Vec<Vec<f64>> = (0..n).map(|t| vec![t as f64; 2]).collect();
        let exo = ExoSource::Maps {
            fields: &fields,
            height: 1,
            width: 2,
            context: 5,
        };
        let w = make_windows(&p, exo, 12, 8).unwrap();
        let s = &w[1];
        assert_eq!(s.exo.shape(), &[8, 5, 1, 2]);
        // step 0 of sample 1 is time 13; its context covers times 9..=13
        let ctx0: Vec<f64> = s.exo.data()[..10].iter().step_by(2).copied().collect();
        assert_eq!(ctx0, vec![9.0, 10.0, 11.0, 12.0, 13.0]);
    }

    #[test]
    fn constant_series_rejected() {
        assert_eq!(
            Standardizer::fit(&[2.0; 10]),
            Err(ScenarioError::ZeroVariance)
        );
    }

    #[test]
    fn training_split_is_centered() {
        let x: Vec<f64> = (0..100)
            .map(|i| ((i * 37) % 11) as f64 * 0.7 + 3.0)
            .collect();
        let s = Standardizer::fit(&x).unwrap();
        let z = s.transform(&x);
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64;
        assert!(mean.abs() < 1e-9);
        assert!((var.sqrt() - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn destandardize_inverts(values in proptest::collection::vec(-50.0f64..50.0, 2..40)) {
            prop_assume!(values.iter().any(|v| (v - values[0]).abs() > 1e-3));
            let s = Standardizer::fit(&values).unwrap();
            let back = s.inverse(&s.transform(&values));
            for (a, b) in back.iter().zip(&values) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
