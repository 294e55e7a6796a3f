use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::attacks::{pgd_untargeted, AttackKind, AttackSpec};
use crate::autodiff::Tensor;
use crate::models::{Architecture, ForecastSample, Model, ModelKind};
use crate::scenarios::Dataset;

/// Adam with plateau decay and early stopping on validation MSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Defaults per model kind when absent.
    pub learning_rate: Option<f64>,
    pub decay_factor: f64,
    pub decay_patience: usize,
    pub early_stop_patience: usize,
    /// Train on every `sample_stride`-th window.
    pub sample_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            batch_size: 32,
            learning_rate: None,
            decay_factor: 0.1,
            decay_patience: 10,
            early_stop_patience: 15,
            sample_stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.sample_stride == 0 {
            return bad("sample_stride must be at least 1".into());
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("learning_rate must be positive, got {lr}"));
            }
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad(format!(
                "decay_factor must be in (0, 1], got {}",
                self.decay_factor
            ));
        }
        Ok(())
    }
}

pub fn default_learning_rate(kind: ModelKind) -> f64 {
    match kind {
        ModelKind::Series => 0.01,
        ModelKind::Maps => 0.001,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean minibatch loss; absent for epoch 0 (initial weights).
    pub train_loss: Option<f64>,
    pub val_mse: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights of the best validation epoch.
    pub model: Model,
    pub curve: Vec<EpochStats>,
    pub best_epoch: usize,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &Model) -> Self {
        let zeros: Vec<Vec<f64>> = model
            .params()
            .iter()
            .map(|(_, t)| vec![0.0; t.len()])
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut Model, grads: &[Vec<f64>], lr: f64) -> Result<(), HarnessError> {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let params = model.params_mut();
        for (i, g) in grads.iter().enumerate() {
            let mut data = params.tensor(i).data().to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..data.len() {
                m[j] = Self::BETA1 * m[j] + (1.0 - Self::BETA1) * g[j];
                v[j] = Self::BETA2 * v[j] + (1.0 - Self::BETA2) * g[j] * g[j];
                data[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + Self::EPS);
            }
            params
                .set_data(i, data)
                .map_err(|e| HarnessError::Model(e.into()))?;
        }
        Ok(())
    }
}

fn pooled(
    datasets: &[Dataset],
    split: fn(&Dataset) -> &Vec<ForecastSample>,
    stride: usize,
) -> Vec<&ForecastSample> {
    datasets
        .iter()
        .flat_map(|d| split(d).iter().step_by(stride))
        .collect()
}

fn sample_mse(model: &Model, sample: &ForecastSample) -> Result<f64, HarnessError> {
    let pred = model.predict(sample)?;
    Ok(pred
        .iter()
        .zip(&sample.truth)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / pred.len() as f64)
}

/// Mean per-sample MSE, reduced in sample order.
fn mean_mse(model: &Model, samples: &[&ForecastSample]) -> Result<f64, HarnessError> {
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| sample_mse(model, s))
        .collect::<Result<_, _>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Mean loss and mean parameter gradient over a minibatch. With an inner
/// attack every sample is replaced by its PGD example against `model`.
fn batch_gradient(
    model: &Model,
    batch: &[&ForecastSample],
    inner: Option<&AttackSpec>,
) -> Result<(f64, Vec<Vec<f64>>), HarnessError> {
    let per_sample: Vec<(f64, Vec<Tensor>)> = batch
        .par_iter()
        .map(|s| {
            let exo = match inner {
                Some(spec) => pgd_untargeted(model, s, spec)?.x_adv,
                None => s.exo.clone(),
            };
            Ok(model.parameter_gradients(&s.history, &exo, &s.truth)?)
        })
        .collect::<Result<_, HarnessError>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut sum: Vec<Vec<f64>> = model
        .params()
        .iter()
        .map(|(_, t)| vec![0.0; t.len()])
        .collect();
    for (l, grads) in &per_sample {
        loss += l * scale;
        for (acc, g) in sum.iter_mut().zip(grads) {
            for (a, v) in acc.iter_mut().zip(g.data()) {
                *a += v * scale;
            }
        }
    }
    Ok((loss, sum))
}

fn train(
    arch: Architecture,
    datasets: &[Dataset],
    config: &TrainConfig,
    inner: Option<&AttackSpec>,
    seed: u64,
) -> Result<TrainOutcome, HarnessError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::random(arch, &mut rng);
    let mut train_set = pooled(datasets, |d| &d.train, config.sample_stride);
    let val_set = pooled(datasets, |d| &d.val, 1);
    if train_set.is_empty() {
        return Err(HarnessError::EmptySplit("train"));
    }
    if val_set.is_empty() {
        return Err(HarnessError::EmptySplit("validation"));
    }

    let mut lr = config
        .learning_rate
        .unwrap_or_else(|| default_learning_rate(model.kind()));
    let initial = mean_mse(&model, &val_set)?;
    if !initial.is_finite() {
        return Err(HarnessError::Diverged { epoch: 0 });
    }
    let mut curve = vec![EpochStats {
        epoch: 0,
        train_loss: None,
        val_mse: initial,
        learning_rate: lr,
    }];
    let mut best = (initial, 0, model.clone());
    let mut adam = Adam::new(&model);
    let mut plateau = 0;

    for epoch in 1..=config.max_epochs {
        let diverged = |e: HarnessError| {
            if e.is_non_finite() {
                HarnessError::Diverged { epoch }
            } else {
                e
            }
        };
        train_set.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in train_set.chunks(config.batch_size) {
            let (loss, grads) = batch_gradient(&model, batch, inner).map_err(diverged)?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(HarnessError::Diverged { epoch });
            }
            total += loss * batch.len() as f64;
            adam.step(&mut model, &grads, lr).map_err(diverged)?;
        }
        let val = mean_mse(&model, &val_set).map_err(diverged)?;
        if !val.is_finite() {
            return Err(HarnessError::Diverged { epoch });
        }
        curve.push(EpochStats {
            epoch,
            train_loss: Some(total / train_set.len() as f64),
            val_mse: val,
            learning_rate: lr,
        });
        if val < best.0 {
            best = (val, epoch, model.clone());
            plateau = 0;
        } else {
            plateau += 1;
            if plateau % config.decay_patience.max(1) == 0 {
                lr *= config.decay_factor;
            }
            if plateau >= config.early_stop_patience {
                break;
            }
        }
    }
    let (_, best_epoch, model) = best;
    Ok(TrainOutcome {
        model,
        curve,
        best_epoch,
    })
}

/// Minibatch training on the pooled training windows of `datasets`, with
/// early stopping on their pooled validation windows.
pub fn train_ordinary(
    arch: Architecture,
    datasets: &[Dataset],
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, HarnessError> {
    train(arch, datasets, config, None, seed)
}

/// Like [`train_ordinary`], but every minibatch is replaced by fresh
/// untargeted PGD examples against the current weights. Validation stays
/// on clean windows.
pub fn train_adversarial(
    arch: Architecture,
    datasets: &[Dataset],
    config: &TrainConfig,
    inner: &AttackSpec,
    seed: u64,
) -> Result<TrainOutcome, HarnessError> {
    if inner.kind != AttackKind::PgdUntargeted {
        return Err(HarnessError::Config(format!(
            "adversarial training needs a pgd-untargeted inner attack, got {}",
            inner.kind.tag()
        )));
    }
    inner.validate(arch.horizon())?;
    train(arch, datasets, config, Some(inner), seed)
}
