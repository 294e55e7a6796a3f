use std::collections::BTreeSet;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError};
use crate::attacks::{run_attack, AttackKind, AttackSpec, DEFAULT_LAMBDA};
use crate::models::{ForecastSample, Model, ModelError};
use crate::scenarios::{catalog_bands, catalog_targets, Dataset};
use crate::scores::{self, aggregate, AggregateScores, ScoreRecord};

/// Budget and iteration counts shared by every evaluated attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSettings {
    pub epsilon: f64,
    pub steps: usize,
    pub noise_repetitions: usize,
    pub lambda: f64,
}

impl Default for AttackSettings {
    fn default() -> Self {
        Self {
            epsilon: 0.15,
            steps: 100,
            noise_repetitions: 100,
            lambda: DEFAULT_LAMBDA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedAttack {
    pub name: String,
    pub spec: AttackSpec,
}

/// Resolves `noise`, `pgd-untargeted`, `pgd-targeted:<target>` or
/// `pgd-semi-targeted:<band>` against the target and band catalogs.
pub fn resolve_attack(
    name: &str,
    horizon: usize,
    settings: &AttackSettings,
) -> Result<NamedAttack, HarnessError> {
    let AttackSettings {
        epsilon,
        steps,
        noise_repetitions,
        lambda,
    } = *settings;
    let unknown = || HarnessError::UnknownAttack(name.to_string());
    let spec = match name.split_once(':') {
        None if name == "noise" => AttackSpec::noise(epsilon, noise_repetitions),
        None if name == "pgd-untargeted" => AttackSpec::pgd_untargeted(epsilon, steps),
        Some(("pgd-targeted", target)) => {
            let t = catalog_targets(horizon)?
                .into_iter()
                .find(|t| t.name == target)
                .ok_or_else(unknown)?;
            AttackSpec::pgd_targeted(epsilon, steps, t.values)
        }
        Some(("pgd-semi-targeted", band)) => {
            let b = catalog_bands(horizon)?
                .into_iter()
                .find(|b| b.name == band)
                .ok_or_else(unknown)?;
            AttackSpec::pgd_semi_targeted(epsilon, steps, b.lower, b.upper)
        }
        _ => return Err(unknown()),
    };
    let spec = spec.with_lambda(lambda);
    spec.validate(horizon)?;
    Ok(NamedAttack {
        name: name.to_string(),
        spec,
    })
}

/// Noise, untargeted PGD, then every catalog target and band.
pub fn attack_catalog(
    horizon: usize,
    settings: &AttackSettings,
) -> Result<Vec<NamedAttack>, HarnessError> {
    let mut names = vec!["noise".to_string(), "pgd-untargeted".to_string()];
    names.extend(
        catalog_targets(horizon)?
            .into_iter()
            .map(|t| format!("pgd-targeted:{}", t.name)),
    );
    names.extend(
        catalog_bands(horizon)?
            .into_iter()
            .map(|b| format!("pgd-semi-targeted:{}", b.name)),
    );
    names
        .iter()
        .map(|n| resolve_attack(n, horizon, settings))
        .collect()
}

/// Resolves a name list; `"all"` expands to the full catalog. Duplicates
/// are rejected.
pub fn resolve_attacks(
    names: &[String],
    horizon: usize,
    settings: &AttackSettings,
) -> Result<Vec<NamedAttack>, HarnessError> {
    let mut out = Vec::new();
    for name in names {
        if name == "all" {
            out.extend(attack_catalog(horizon, settings)?);
        } else {
            out.push(resolve_attack(name, horizon, settings)?);
        }
    }
    if out.is_empty() {
        return Err(HarnessError::Config("no attacks configured".into()));
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = out.iter().find(|a| !seen.insert(a.name.clone())) {
        return Err(HarnessError::Config(format!(
            "attack {:?} listed twice",
            dup.name
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub beta: f64,
    /// Seeds the noise attack; sample `i` always draws from stream `i`.
    pub seed: u64,
    pub sample_stride: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            beta: 1.0,
            seed: 0,
            sample_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSection {
    pub name: String,
    pub spec: AttackSpec,
    /// Largest `‖x_adv - x‖∞` over every attacked sample.
    pub max_perturbation: f64,
    pub scores: AggregateScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRmse {
    pub dataset_id: String,
    pub samples: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub version: String,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub config: Option<ExperimentConfig>,
    pub beta: f64,
    pub clean_rmse: Vec<DatasetRmse>,
    pub attacks: Vec<AttackSection>,
    pub metadata: ReportMetadata,
    /// Per-sample records, in attack, dataset and sample order.
    #[serde(skip)]
    pub records: Vec<ScoreRecord>,
}

impl RobustnessReport {
    pub fn section(&self, name: &str) -> Option<&AttackSection> {
        self.attacks.iter().find(|a| a.name == name)
    }
}

/// Noise-attack RNG of one test sample: seeded per dataset, stream = sample index.
pub fn sample_rng(seed: u64, dataset_index: usize, sample_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(dataset_index as u64));
    rng.set_stream(sample_id as u64);
    rng
}

/// The spec as run on `dataset`: an unbounded noise attack gets the
/// dataset's input bounds.
pub fn spec_for_dataset(spec: &AttackSpec, dataset: &Dataset) -> AttackSpec {
    match (&spec.kind, spec.input_bounds) {
        (AttackKind::Noise, None) => spec.clone().with_bounds(Some(dataset.input_bounds)),
        _ => spec.clone(),
    }
}

struct Evaluated<'a> {
    id: usize,
    sample: &'a ForecastSample,
    clean: Vec<f64>,
}

fn score_sample(
    model: &Model,
    item: &Evaluated<'_>,
    dataset_id: &str,
    attack: &NamedAttack,
    spec: &AttackSpec,
    beta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(ScoreRecord, f64), HarnessError> {
    let result = run_attack(model, item.sample, spec, rng)?;
    let budget_used = result.delta.max_abs();
    let attacked = model.predict(&item.sample.with_exo(result.x_adv))?;
    let truth = &item.sample.truth;
    let prs = scores::prs(&item.clean, &attacked, truth)?;
    let drs = match &spec.kind {
        AttackKind::Noise | AttackKind::PgdUntargeted => None,
        AttackKind::PgdTargeted { target } => {
            Some(scores::drs_targeted(&item.clean, &attacked, target)?)
        }
        AttackKind::PgdSemiTargeted { lower, upper } => Some(scores::drs_semi_targeted(
            &item.clean,
            &attacked,
            lower,
            upper,
        )?),
    };
    let tars = drs.map(|d| scores::tars(prs, d, beta)).transpose()?;
    let record = ScoreRecord {
        sample_id: item.id,
        dataset_id: dataset_id.to_string(),
        attack: attack.name.clone(),
        clean_rmse: scores::rmse(&item.clean, truth)?,
        attacked_rmse: scores::rmse(&attacked, truth)?,
        prs,
        drs,
        tars,
    };
    Ok((record, budget_used))
}

/// Attacks every (strided) test sample of every dataset with every attack,
/// scores sample-wise and aggregates per dataset, then across datasets.
/// The noise attack is clipped to each dataset's input bounds unless its
/// spec already carries bounds.
pub fn evaluate_robustness(
    model: &Model,
    datasets: &[Dataset],
    attacks: &[NamedAttack],
    options: &EvalOptions,
) -> Result<RobustnessReport, HarnessError> {
    let started = Instant::now();
    if datasets.is_empty() {
        return Err(HarnessError::Config("no datasets to evaluate".into()));
    }
    if attacks.is_empty() {
        return Err(HarnessError::Config("no attacks to evaluate".into()));
    }
    if options.sample_stride == 0 {
        return Err(HarnessError::Config(
            "sample stride must be at least 1".into(),
        ));
    }
    if !(options.beta > 0.0 && options.beta.is_finite()) {
        return Err(HarnessError::Config(format!(
            "beta must be positive, got {}",
            options.beta
        )));
    }
    for attack in attacks {
        attack.spec.validate(model.horizon())?;
    }
    let expected = model.exo_shape();
    for d in datasets {
        if d.test.is_empty() {
            return Err(HarnessError::EmptySplit("test"));
        }
        if d.test[0].exo.shape() != expected.as_slice() {
            return Err(ModelError::ExoShape {
                expected,
                got: d.test[0].exo.shape().to_vec(),
            }
            .into());
        }
    }

    let mut evaluated = Vec::with_capacity(datasets.len());
    let mut clean_rmse = Vec::with_capacity(datasets.len());
    for d in datasets {
        let items: Vec<Evaluated<'_>> = d
            .test
            .par_iter()
            .enumerate()
            .filter(|(i, _)| i % options.sample_stride == 0)
            .map(|(id, sample)| {
                Ok(Evaluated {
                    id,
                    sample,
                    clean: model.predict(sample)?,
                })
            })
            .collect::<Result<_, HarnessError>>()?;
        let rmses: Vec<f64> = items
            .iter()
            .map(|e| scores::rmse(&e.clean, &e.sample.truth))
            .collect::<Result<_, _>>()?;
        clean_rmse.push(DatasetRmse {
            dataset_id: d.id.clone(),
            samples: items.len(),
            rmse: rmses.iter().sum::<f64>() / rmses.len() as f64,
        });
        evaluated.push(items);
    }

    let mut sections = Vec::with_capacity(attacks.len());
    let mut all_records = Vec::new();
    for attack in attacks {
        let mut groups = Vec::with_capacity(datasets.len());
        let mut max_perturbation = 0.0_f64;
        for (di, (d, items)) in datasets.iter().zip(&evaluated).enumerate() {
            let spec = spec_for_dataset(&attack.spec, d);
            let mut scored: Vec<(ScoreRecord, f64)> = items
                .par_iter()
                .map(|item| {
                    let mut rng = sample_rng(options.seed, di, item.id);
                    score_sample(model, item, &d.id, attack, &spec, options.beta, &mut rng)
                })
                .collect::<Result<_, HarnessError>>()?;
            scored.sort_by_key(|(r, _)| r.sample_id);
            let records: Vec<ScoreRecord> = scored
                .into_iter()
                .map(|(r, used)| {
                    max_perturbation = max_perturbation.max(used);
                    r
                })
                .collect();
            groups.push((d.id.clone(), records));
        }
        let scores = aggregate(&groups)?;
        all_records.extend(groups.into_iter().flat_map(|(_, r)| r));
        sections.push(AttackSection {
            name: attack.name.clone(),
            spec: attack.spec.clone(),
            max_perturbation,
            scores,
        });
    }

    Ok(RobustnessReport {
        config: None,
        beta: options.beta,
        clean_rmse,
        attacks: sections,
        metadata: ReportMetadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            elapsed_seconds: started.elapsed().as_secs_f64(),
        },
        records: all_records,
    })
}
