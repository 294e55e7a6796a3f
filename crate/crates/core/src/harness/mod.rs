//! Training loops, robustness evaluation and report files.

mod evaluate;
mod report;
mod train;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use evaluate::{
    attack_catalog, evaluate_robustness, resolve_attack, resolve_attacks, sample_rng,
    spec_for_dataset, AttackSection, AttackSettings, DatasetRmse, EvalOptions, NamedAttack,
    ReportMetadata, RobustnessReport,
};
pub use report::{read_report, render_table, write_report, REPORT_FILE, SCORES_FILE};
pub use train::{
    default_learning_rate, train_adversarial, train_ordinary, EpochStats, TrainConfig, TrainOutcome,
};

use crate::attacks::{AttackError, AttackKind, AttackSpec};
use crate::autodiff::AutodiffError;
use crate::models::{Architecture, ModelError, ModelKind};
use crate::scenarios::{ScenarioConfig, ScenarioError};
use crate::scores::ScoreError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("unknown attack {0:?}")]
    UnknownAttack(String),
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Scores { path: PathBuf, source: ScoreError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

impl HarnessError {
    /// Whether the error stems from a non-finite value in the computation.
    fn is_non_finite(&self) -> bool {
        let autodiff = match self {
            HarnessError::Model(ModelError::Autodiff(e)) => e,
            HarnessError::Attack(AttackError::Autodiff(e)) => e,
            HarnessError::Attack(AttackError::Model(ModelError::Autodiff(e))) => e,
            _ => return false,
        };
        matches!(autodiff, AutodiffError::NonFinite { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    #[default]
    Ordinary,
    Adversarial,
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainMode::Ordinary => "ordinary",
            TrainMode::Adversarial => "adversarial",
        })
    }
}

impl std::str::FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ordinary" => Ok(TrainMode::Ordinary),
            "adversarial" => Ok(TrainMode::Adversarial),
            other => Err(format!(
                "unknown training mode {other:?} (expected ordinary or adversarial)"
            )),
        }
    }
}

/// Optional width/depth overrides; geometry always follows the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSize {
    pub hidden: Option<usize>,
    pub channels: Option<usize>,
    pub blocks: Option<usize>,
}

/// One experiment: scenario, model, training and the attacks to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; overrides `scenario.seed`.
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub model: ModelKind,
    pub model_size: ModelSize,
    pub train_mode: TrainMode,
    pub training: TrainConfig,
    /// Untargeted PGD used inside adversarial training.
    pub inner_attack: AttackSpec,
    /// Attack names, or `"all"` for the full catalog.
    pub attacks: Vec<String>,
    pub attack_settings: AttackSettings,
    pub beta: f64,
    /// Evaluate every `eval_stride`-th test sample.
    pub eval_stride: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenario: ScenarioConfig::default(),
            model: ModelKind::Series,
            model_size: ModelSize::default(),
            train_mode: TrainMode::Ordinary,
            training: TrainConfig::default(),
            inner_attack: AttackSpec::pgd_untargeted(0.15, 10),
            attacks: vec!["all".into()],
            attack_settings: AttackSettings::default(),
            beta: 1.0,
            eval_stride: 1,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// The scenario with the master seed applied.
    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            seed: self.seed,
            ..self.scenario.clone()
        }
    }

    pub fn architecture(&self) -> Architecture {
        match self.model {
            ModelKind::Series => {
                let mut c = self.scenario.series_model_config();
                c.hidden = self.model_size.hidden.unwrap_or(c.hidden);
                Architecture::Series(c)
            }
            ModelKind::Maps => {
                let mut c = self.scenario.map_model_config();
                c.channels = self.model_size.channels.unwrap_or(c.channels);
                c.blocks = self.model_size.blocks.unwrap_or(c.blocks);
                Architecture::Maps(c)
            }
        }
    }

    pub fn attack_list(&self) -> Result<Vec<NamedAttack>, HarnessError> {
        resolve_attacks(&self.attacks, self.scenario.horizon, &self.attack_settings)
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            beta: self.beta,
            seed: self.seed,
            sample_stride: self.eval_stride,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.scenario().validate()?;
        self.training.validate()?;
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(HarnessError::Config(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.eval_stride == 0 {
            return Err(HarnessError::Config(
                "eval_stride must be at least 1".into(),
            ));
        }
        if self.train_mode == TrainMode::Adversarial
            && self.inner_attack.kind != AttackKind::PgdUntargeted
        {
            return Err(HarnessError::Config(format!(
                "adversarial training needs a pgd-untargeted inner attack, got {}",
                self.inner_attack.kind.tag()
            )));
        }
        self.inner_attack.validate(self.scenario.horizon)?;
        if self.model_size.hidden == Some(0) || self.model_size.channels == Some(0) {
            return Err(HarnessError::Config("model widths must be positive".into()));
        }
        self.attack_list()?;
        Ok(())
    }
}
