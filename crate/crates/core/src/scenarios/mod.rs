//! Seeded synthetic wind-power scenarios and their preprocessing.
//!
//! A scenario is a set of independently seeded datasets. Each dataset is
//! split contiguously in time into train / validation / test parts before
//! windowing, and its wind input is z-scored with training statistics.

mod catalog;
mod csv_io;
mod generate;
mod preprocess;

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{catalog_bands, catalog_targets, NamedBand, NamedTarget};
pub use csv_io::{horizontal_speed, load_csv, write_maps_csv, write_series_csv, SeriesData};
pub use generate::{forecast_errors, gen_speed_maps, gen_speed_series, regional_power, PowerCurve};
pub use preprocess::{make_windows, ExoSource, Standardizer};

use crate::models::{ForecastSample, MapConfig, ModelKind, SeriesConfig};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("zero-variance feature cannot be standardized")]
    ZeroVariance,
    #[error("series of length {length} is shorter than history + horizon = {needed}")]
    TooShort { length: usize, needed: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: missing column {column:?}")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: line {line}: {reason}")]
    Csv {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl PartialEq for ScenarioError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

/// Every knob of a synthetic scenario. Serialized as a flat JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Time steps per dataset.
    pub length: usize,
    /// Long-run mean wind speed (m/s).
    pub mean_speed: f64,
    /// Fraction of the gap to the mean closed per step.
    pub reversion: f64,
    /// Per-step shock standard deviation (m/s).
    pub volatility: f64,
    /// Standard deviation of the additive error on the wind input the model
    /// sees (m/s); zero gives noiseless data.
    pub forecast_noise: f64,
    pub map_height: usize,
    pub map_width: usize,
    /// Gaussian smoothing length of spatial anomalies, in cells.
    pub smoothing: f64,
    /// Standard deviation of spatial anomalies (m/s).
    pub spatial_std: f64,
    /// AR(1) coefficient of spatial anomalies between steps.
    pub map_persistence: f64,
    pub context: usize,
    pub history: usize,
    pub horizon: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub datasets: usize,
    pub cut_in: f64,
    pub rated: f64,
    pub cut_out: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            length: 800,
            mean_speed: 8.0,
            reversion: 0.05,
            volatility: 0.7,
            forecast_noise: 0.5,
            map_height: 20,
            map_width: 17,
            smoothing: 4.0,
            spatial_std: 1.5,
            map_persistence: 0.9,
            context: 5,
            history: 12,
            horizon: 8,
            train_fraction: 0.6,
            val_fraction: 0.2,
            datasets: 3,
            cut_in: 3.0,
            rated: 12.0,
            cut_out: 25.0,
        }
    }
}

impl ScenarioConfig {
    pub fn power_curve(&self) -> Result<PowerCurve, ScenarioError> {
        PowerCurve::new(self.cut_in, self.rated, self.cut_out)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.power_curve()?;
        let bad = |msg: String| Err(ScenarioError::Config(msg));
        if self.datasets == 0 {
            return bad("at least one dataset is required".into());
        }
        if self.history == 0 || self.horizon == 0 {
            return bad("history and horizon must be positive".into());
        }
        if self.context == 0 || self.context > self.history + 1 {
            return bad(format!(
                "context {} must be in 1..={}",
                self.context,
                self.history + 1
            ));
        }
        if self.map_height == 0 || self.map_width == 0 {
            return bad("map dimensions must be positive".into());
        }
        if !(self.forecast_noise >= 0.0 && self.spatial_std >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        let (tr, va) = (self.train_fraction, self.val_fraction);
        if !(tr > 0.0 && va > 0.0 && tr + va < 1.0) {
            return bad(format!(
                "split fractions train={tr} val={va} must be positive and leave a test split"
            ));
        }
        let window = self.history + self.horizon;
        for (name, len) in [
            ("train", self.split_lengths().0),
            ("val", self.split_lengths().1),
            ("test", self.split_lengths().2),
        ] {
            if len < window {
                return bad(format!(
                    "{name} split has {len} steps, fewer than history + horizon = {window}"
                ));
            }
        }
        Ok(())
    }

    /// Time steps in the train, validation and test splits.
    pub fn split_lengths(&self) -> (usize, usize, usize) {
        let train = (self.length as f64 * self.train_fraction).floor() as usize;
        let val = (self.length as f64 * self.val_fraction).floor() as usize;
        (train, val, self.length.saturating_sub(train + val))
    }

    /// Seed of dataset `index`.
    pub fn dataset_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }

    pub fn series_model_config(&self) -> SeriesConfig {
        SeriesConfig {
            history: self.history,
            horizon: self.horizon,
            ..SeriesConfig::default()
        }
    }

    /// Map-model geometry matching this scenario, with default width/depth.
    pub fn map_model_config(&self) -> MapConfig {
        MapConfig {
            context: self.context,
            height: self.map_height,
            width: self.map_width,
            horizon: self.horizon,
            ..MapConfig::default()
        }
    }
}

/// Raw generated series before splitting and standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawScenario {
    pub id: String,
    /// Normalized power truth.
    pub power: Vec<f64>,
    /// Wind input seen by the model (m/s): per-step speeds for series.
    pub speed: Vec<f64>,
    /// Wind input maps seen by the model (m/s), one field per step.
    pub maps: Option<Vec<Vec<f64>>>,
}

impl RawScenario {
    pub fn generate(
        config: &ScenarioConfig,
        kind: ModelKind,
        index: usize,
    ) -> Result<Self, ScenarioError> {
        config.validate()?;
        let curve = config.power_curve()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.dataset_seed(index));
        let id = format!("dataset_{index}");
        match kind {
            ModelKind::Series => {
                let speed = gen_speed_series(config, &mut rng)?;
                let power = curve.apply(&speed);
                let errors = forecast_errors(speed.len(), config.forecast_noise, &mut rng);
                let observed = speed.iter().zip(errors).map(|(s, e)| s + e).collect();
                Ok(Self {
                    id,
                    power,
                    speed: observed,
                    maps: None,
                })
            }
            ModelKind::Maps => {
                let fields = gen_speed_maps(config, &mut rng)?;
                let power = regional_power(&fields, &curve);
                let errors = forecast_errors(fields.len(), config.forecast_noise, &mut rng);
                let observed: Vec<Vec<f64>> = fields
                    .into_iter()
                    .zip(errors)
                    .map(|(f, e)| f.into_iter().map(|v| v + e).collect())
                    .collect();
                let speed = observed
                    .iter()
                    .map(|f| f.iter().sum::<f64>() / f.len() as f64)
                    .collect();
                Ok(Self {
                    id,
                    power,
                    speed,
                    maps: Some(observed),
                })
            }
        }
    }

    pub fn kind(&self) -> ModelKind {
        if self.maps.is_some() {
            ModelKind::Maps
        } else {
            ModelKind::Series
        }
    }
}

/// Windowed, standardized splits of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub id: String,
    pub train: Vec<ForecastSample>,
    pub val: Vec<ForecastSample>,
    pub test: Vec<ForecastSample>,
    pub standardizer: Standardizer,
    /// Min and max of the standardized training wind input.
    pub input_bounds: (f64, f64),
}

impl Dataset {
    pub fn from_raw(raw: &RawScenario, config: &ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let n = raw.power.len();
        if n != config.length {
            return Err(ScenarioError::Config(format!(
                "{} has {n} steps, config expects {}",
                raw.id, config.length
            )));
        }
        let (n_train, n_val, _) = config.split_lengths();
        let ranges = [0..n_train, n_train..n_train + n_val, n_train + n_val..n];

        let (standardizer, train_values) = match &raw.maps {
            Some(maps) => {
                let train: Vec<f64> = maps[..n_train].iter().flatten().copied().collect();
                (Standardizer::fit(&train)?, train)
            }
            None => {
                let train = raw.speed[..n_train].to_vec();
                (Standardizer::fit(&train)?, train)
            }
        };
        let input_bounds = standardizer
            .transform(&train_values)
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let z_maps: Option<Vec<Vec<f64>>> = raw
            .maps
            .as_ref()
            .map(|maps| maps.iter().map(|f| standardizer.transform(f)).collect());
        let z_speed = standardizer.transform(&raw.speed);

        let mut splits = Vec::with_capacity(3);
        for range in ranges {
            let power = &raw.power[range.clone()];
            let exo = match &z_maps {
                Some(z) => ExoSource::Maps {
                    fields: &z[range.clone()],
                    height: config.map_height,
                    width: config.map_width,
                    context: config.context,
                },
                None => ExoSource::Series(&z_speed[range.clone()]),
            };
            splits.push(make_windows(power, exo, config.history, config.horizon)?);
        }
        let test = splits.pop().expect("three splits");
        let val = splits.pop().expect("three splits");
        let train = splits.pop().expect("three splits");
        Ok(Self {
            id: raw.id.clone(),
            train,
            val,
            test,
            standardizer,
            input_bounds,
        })
    }
}

/// Generates and preprocesses every dataset of a scenario.
pub fn generate_datasets(
    config: &ScenarioConfig,
    kind: ModelKind,
) -> Result<Vec<Dataset>, ScenarioError> {
    (0..config.datasets)
        .map(|i| Dataset::from_raw(&RawScenario::generate(config, kind, i)?, config))
        .collect()
}
