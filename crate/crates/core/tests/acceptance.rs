//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.
//!
//! Set `BLESS_GOLDEN=1` to rewrite the golden report files.

use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robustcast::attacks::{pgd_targeted, AttackSpec};
use robustcast::autodiff::{check_gradients_at, scalar_fn, AutodiffError, Tensor, Var};
use robustcast::harness::{
    evaluate_robustness, render_table, resolve_attacks, train_adversarial, train_ordinary,
    write_report, AttackSettings, EvalOptions, ExperimentConfig, ModelSize, RobustnessReport,
    TrainConfig, SCORES_FILE,
};
use robustcast::models::{Architecture, ForecastSample, MapConfig, Model, ModelError, ModelKind};
use robustcast::scenarios::{catalog_targets, generate_datasets, Dataset, ScenarioConfig};
use robustcast::scores::{self, aggregate, read_scores_csv, ScoreRecord};

type Check = Result<(bool, String), Box<dyn Error>>;

const EPSILON: f64 = 0.15;
const SEEDS: [u64; 3] = [0, 10, 20];

/// Largest `‖δ‖∞ − ε` seen over every attack this binary runs.
#[derive(Default)]
struct Budget {
    runs: usize,
    violations: usize,
    worst: f64,
}

impl Budget {
    fn record(&mut self, epsilon: f64, used: f64) {
        self.runs += 1;
        if used > epsilon + 1e-12 {
            self.violations += 1;
        }
        self.worst = self.worst.max(used - epsilon);
    }

    fn report(&mut self, report: &RobustnessReport) {
        for section in &report.attacks {
            let per_section = report
                .records
                .iter()
                .filter(|r| r.attack == section.name)
                .count();
            self.runs += per_section.saturating_sub(1);
            self.record(section.spec.epsilon, section.max_perturbation);
        }
    }
}

fn scenario(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        length: 500,
        map_height: 10,
        map_width: 8,
        ..ScenarioConfig::default()
    }
}

fn map_arch(scenario: &ScenarioConfig) -> Architecture {
    Architecture::Maps(MapConfig {
        channels: 6,
        blocks: 1,
        ..scenario.map_model_config()
    })
}

fn training() -> TrainConfig {
    TrainConfig {
        max_epochs: 30,
        learning_rate: Some(0.01),
        sample_stride: 2,
        ..TrainConfig::default()
    }
}

fn untargeted_prs(
    model: &Model,
    data: &[Dataset],
    stride: usize,
    budget: &mut Budget,
) -> Result<RobustnessReport, Box<dyn Error>> {
    let attacks = resolve_attacks(
        &["pgd-untargeted".into()],
        model.horizon(),
        &AttackSettings::default(),
    )?;
    let options = EvalOptions {
        sample_stride: stride,
        ..EvalOptions::default()
    };
    let report = evaluate_robustness(model, data, &attacks, &options)?;
    budget.report(&report);
    Ok(report)
}

/// Ordinarily trained series and map models on one matched scenario.
struct Matched {
    seed: u64,
    series_data: Vec<Dataset>,
    series: Model,
    map_data: Vec<Dataset>,
    maps: Model,
}

impl Matched {
    fn train(seed: u64) -> Result<Self, Box<dyn Error>> {
        let sc = scenario(seed);
        let series_data = generate_datasets(&sc, ModelKind::Series)?;
        let series = train_ordinary(
            Architecture::Series(sc.series_model_config()),
            &series_data,
            &training(),
            seed,
        )?
        .model;
        let map_data = generate_datasets(&sc, ModelKind::Maps)?;
        let maps = train_ordinary(map_arch(&sc), &map_data, &training(), seed)?.model;
        Ok(Self {
            seed,
            series_data,
            series,
            map_data,
            maps,
        })
    }
}

fn random_sample(model: &Model, rng: &mut ChaCha8Rng) -> ForecastSample {
    let history = match model.architecture() {
        Architecture::Series(c) => c.history,
        Architecture::Maps(_) => 0,
    };
    let shape = model.exo_shape();
    let n = shape.iter().product();
    ForecastSample {
        history: (0..history).map(|_| rng.random_range(0.0..1.0)).collect(),
        exo: Tensor::new(shape, (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap(),
        truth: (0..model.horizon())
            .map(|_| rng.random_range(0.0..1.0))
            .collect(),
    }
}

fn autodiff(e: ModelError) -> AutodiffError {
    match e {
        ModelError::Autodiff(a) => a,
        other => panic!("unexpected model error: {other}"),
    }
}

fn gradients() -> Check {
    let started = Instant::now();
    let sc = scenario(0);
    let mut worst = 0.0f64;
    for arch in [
        Architecture::Series(sc.series_model_config()),
        map_arch(&sc),
    ] {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = Model::random(arch, &mut rng);
            let sample = random_sample(&model, &mut rng);
            let coords: Vec<usize> = (0..20)
                .map(|_| rng.random_range(0..sample.exo.len()))
                .collect();
            let f = scalar_fn(|x: Var<'_>| {
                let g = x.graph();
                let params = model.params().bind(g, false);
                let pred = model
                    .forward(&params, &sample.history, x)
                    .map_err(autodiff)?;
                pred.mse(g.constant(Tensor::vector(sample.truth.clone())?))
            });
            worst = worst.max(check_gradients_at(&f, &sample.exo, 1e-6, &coords)?);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    Ok((
        worst < 1e-4 && secs < 120.0,
        format!(
            "max relative error {worst:.2e} over 2 models x 10 seeds x 20 coords in {secs:.1}s"
        ),
    ))
}

fn score_oracles() -> Check {
    let e_inv = (-1.0f64).exp();
    let record = |prs: f64, drs: f64| ScoreRecord {
        sample_id: 0,
        dataset_id: "d".into(),
        attack: "a".into(),
        clean_rmse: 0.1,
        attacked_rmse: 0.1,
        prs,
        drs: Some(drs),
        tars: Some(scores::tars(prs, drs, 1.0).unwrap()),
    };
    let mean_of_tars = aggregate(&[("d".into(), vec![record(1.0, 1.0), record(1.0, 0.0)])])?
        .tars
        .map_or(f64::NAN, |t| t.mean);
    let oracles = [
        (scores::rmse(&[1.0, 1.0], &[0.0, 0.0])?, 1.0),
        (scores::rmse(&[0.2, 0.4], &[0.0, 0.0])?, 0.1f64.sqrt()),
        (
            scores::brmse(&[0.6, 0.3], &[0.25; 2], &[0.5; 2])?,
            0.005f64.sqrt(),
        ),
        (scores::prs(&[0.1], &[0.2], &[0.0])?, e_inv),
        (scores::prs(&[0.2], &[0.1], &[0.0])?, 1.0),
        (scores::drs_targeted(&[0.4], &[0.2], &[0.0])?, e_inv),
        (
            scores::drs_semi_targeted(&[0.7], &[0.6], &[0.0], &[0.5])?,
            e_inv,
        ),
        (
            scores::drs_semi_targeted(&[0.7], &[0.3], &[0.0], &[0.5])?,
            0.0,
        ),
        (scores::tars(0.25, 0.75, 2.0)?, 0.9375 / 1.75),
        (scores::tars(0.5, 0.5, 1.0)?, 0.5),
        (scores::tars(1.0, 0.0, 1.0)?, 0.0),
        (mean_of_tars, 0.5),
    ];
    let oracle_err = oracles
        .iter()
        .map(|(got, want)| (got - want).abs())
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut symmetry_err = 0.0f64;
    for _ in 0..1000 {
        let (p, d) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0));
        let beta: f64 = rng.random_range(0.1..10.0);
        symmetry_err =
            symmetry_err.max((scores::tars(p, d, beta)? - scores::tars(d, p, 1.0 / beta)?).abs());
    }
    Ok((
        oracle_err < 1e-9 && symmetry_err < 1e-12,
        format!(
            "{} oracles, max error {oracle_err:.1e}; TARS symmetry max error {symmetry_err:.1e} over 1000 triples",
            oracles.len()
        ),
    ))
}

fn pgd_efficacy(m: &Matched, budget: &mut Budget) -> Check {
    let report = untargeted_prs(&m.series, &m.series_data, 1, budget)?;
    let raised = report
        .records
        .iter()
        .filter(|r| r.attacked_rmse >= r.clean_rmse)
        .count();
    let total = report.records.len();
    let prs = report.attacks[0].scores.prs.mean;
    Ok((
        raised * 100 >= total * 95 && prs < 0.95,
        format!("error raised on {raised}/{total} test samples, mean PRS {prs:.4}"),
    ))
}

fn target_convergence(m: &Matched, budget: &mut Budget) -> Check {
    let targets = catalog_targets(m.series.horizon())?;
    let epsilons = [0.15, 1.0, 2.0, 3.0];
    let mut means = Vec::new();
    for &epsilon in &epsilons {
        let mut errors = Vec::new();
        for target in &targets {
            let spec = AttackSpec::pgd_targeted(epsilon, 100, target.values.clone());
            for d in &m.series_data {
                for sample in d.test.iter().step_by(4) {
                    let r = pgd_targeted(&m.series, sample, &spec)?;
                    budget.record(epsilon, r.delta.max_abs());
                    let attacked = m.series.predict(&sample.with_exo(r.x_adv))?;
                    errors.push(scores::rmse(&attacked, &target.values)?);
                }
            }
        }
        means.push(errors.iter().sum::<f64>() / errors.len() as f64);
    }
    let ok = means.windows(2).all(|w| w[1] <= w[0] * 1.05);
    let shown: Vec<String> = epsilons
        .iter()
        .zip(&means)
        .map(|(e, m)| format!("{e}: {m:.4}"))
        .collect();
    Ok((
        ok,
        format!("mean target RMSE by epsilon {}", shown.join(", ")),
    ))
}

fn dimensionality(lab: &[Matched], budget: &mut Budget) -> Check {
    let mut wins = 0;
    let mut shown = Vec::new();
    for m in lab {
        let series = untargeted_prs(&m.series, &m.series_data, 4, budget)?.attacks[0]
            .scores
            .prs
            .mean;
        let maps = untargeted_prs(&m.maps, &m.map_data, 4, budget)?.attacks[0]
            .scores
            .prs
            .mean;
        if series - maps >= 0.1 {
            wins += 1;
        }
        shown.push(format!(
            "seed {}: series {series:.4} maps {maps:.4}",
            m.seed
        ));
    }
    Ok((
        wins * 2 > lab.len(),
        format!(
            "{wins}/{} seeds with gap >= 0.1 ({})",
            lab.len(),
            shown.join("; ")
        ),
    ))
}

fn adversarial_benefit(m: &Matched, budget: &mut Budget) -> Check {
    let sc = scenario(m.seed);
    let inner = AttackSpec::pgd_untargeted(EPSILON, 10);
    let robust = train_adversarial(map_arch(&sc), &m.map_data, &training(), &inner, m.seed)?.model;
    let ordinary = untargeted_prs(&m.maps, &m.map_data, 4, budget)?;
    let adversarial = untargeted_prs(&robust, &m.map_data, 4, budget)?;
    let (o, a) = (&ordinary.attacks[0].scores, &adversarial.attacks[0].scores);
    let gain = a.prs.mean - o.prs.mean;
    Ok((
        gain >= 0.1 && a.clean_rmse.mean >= o.clean_rmse.mean,
        format!(
            "PRS {:.4} -> {:.4} (gain {gain:.4}); clean RMSE {:.4} -> {:.4}",
            o.prs.mean, a.prs.mean, o.clean_rmse.mean, a.clean_rmse.mean
        ),
    ))
}

fn golden_config() -> ExperimentConfig {
    ExperimentConfig {
        seed: 3,
        scenario: ScenarioConfig {
            length: 160,
            ..ScenarioConfig::default()
        },
        model_size: ModelSize {
            hidden: Some(8),
            ..ModelSize::default()
        },
        training: TrainConfig {
            max_epochs: 3,
            batch_size: 16,
            ..TrainConfig::default()
        },
        attack_settings: AttackSettings {
            steps: 5,
            noise_repetitions: 4,
            ..AttackSettings::default()
        },
        eval_stride: 7,
        ..ExperimentConfig::default()
    }
}

fn small_map_config() -> ExperimentConfig {
    ExperimentConfig {
        seed: 4,
        model: ModelKind::Maps,
        scenario: ScenarioConfig {
            length: 120,
            map_height: 4,
            map_width: 3,
            ..ScenarioConfig::default()
        },
        model_size: ModelSize {
            channels: Some(2),
            blocks: Some(1),
            ..ModelSize::default()
        },
        training: TrainConfig {
            max_epochs: 2,
            batch_size: 16,
            ..TrainConfig::default()
        },
        attack_settings: AttackSettings {
            steps: 3,
            noise_repetitions: 3,
            ..AttackSettings::default()
        },
        eval_stride: 5,
        ..ExperimentConfig::default()
    }
}

/// Generate, train, evaluate and write the report into `dir`.
fn pipeline(
    config: &ExperimentConfig,
    dir: &Path,
    budget: &mut Budget,
) -> Result<RobustnessReport, Box<dyn Error>> {
    let datasets = generate_datasets(&config.scenario(), config.model)?;
    let model = train_ordinary(
        config.architecture(),
        &datasets,
        &config.training,
        config.seed,
    )?
    .model;
    let attacks = config.attack_list()?;
    let mut report = evaluate_robustness(&model, &datasets, &attacks, &config.eval_options())?;
    report.config = Some(config.clone());
    budget.report(&report);
    write_report(&report, dir)?;
    Ok(report)
}

fn group_by_dataset(records: &[ScoreRecord], attack: &str) -> Vec<(String, Vec<ScoreRecord>)> {
    let mut groups: Vec<(String, Vec<ScoreRecord>)> = Vec::new();
    for r in records.iter().filter(|r| r.attack == attack) {
        match groups.last_mut() {
            Some((id, rs)) if *id == r.dataset_id => rs.push(r.clone()),
            _ => groups.push((r.dataset_id.clone(), vec![r.clone()])),
        }
    }
    groups
}

/// Structural checks of the report against its own per-sample records.
fn protocol_problems(report: &RobustnessReport, records: &[ScoreRecord]) -> Vec<String> {
    let mut problems = Vec::new();
    for section in &report.attacks {
        let untargeted = section.name == "noise" || section.name == "pgd-untargeted";
        let s = &section.scores;
        if s.drs.is_some() == untargeted || s.tars.is_some() == untargeted {
            problems.push(format!("{}: wrong score columns", section.name));
        }
        let groups = group_by_dataset(records, &section.name);
        if groups.len() < 3 || s.datasets.len() != groups.len() {
            problems.push(format!("{}: {} datasets", section.name, groups.len()));
            continue;
        }
        let mut per_dataset = Vec::new();
        for ((id, rs), d) in groups.iter().zip(&s.datasets) {
            let prs = rs.iter().map(|r| r.prs).sum::<f64>() / rs.len() as f64;
            let tars = rs.iter().filter_map(|r| r.tars).sum::<f64>() / rs.len() as f64;
            if *id != d.dataset_id || (prs - d.prs).abs() > 1e-4 {
                problems.push(format!("{}/{id}: PRS mean", section.name));
            }
            if let Some(t) = d.tars {
                if (t - tars).abs() > 1e-4 {
                    problems.push(format!(
                        "{}/{id}: TARS is not the mean of sample TARS",
                        section.name
                    ));
                }
            }
            per_dataset.push(d.prs);
        }
        let n = per_dataset.len() as f64;
        let mean = per_dataset.iter().sum::<f64>() / n;
        let std = (per_dataset.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        if (mean - s.prs.mean).abs() > 1e-12 || (std - s.prs.std).abs() > 1e-12 {
            problems.push(format!("{}: cross-dataset PRS", section.name));
        }
    }
    problems
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
}

fn golden_report(budget: &mut Budget) -> Check {
    let dir = tempfile::tempdir()?;
    let report = pipeline(&golden_config(), dir.path(), budget)?;
    let csv = std::fs::read_to_string(dir.path().join(SCORES_FILE))?;
    let table = render_table(&report);
    let mut problems = protocol_problems(&report, &read_scores_csv(csv.as_bytes())?);

    let golden = golden_dir();
    let bless = std::env::var_os("BLESS_GOLDEN").is_some();
    for (name, produced) in [("report_table.txt", &table), ("scores.csv", &csv)] {
        let path = golden.join(name);
        if bless {
            std::fs::create_dir_all(&golden)?;
            std::fs::write(&path, produced)?;
        }
        match std::fs::read_to_string(&path) {
            Ok(expected) if expected == *produced => {}
            Ok(_) => problems.push(format!("{name} differs from golden copy")),
            Err(e) => problems.push(format!("{}: {e}", path.display())),
        }
    }
    let detail = if problems.is_empty() {
        format!(
            "{} attack rows match golden table and scores.csv",
            report.attacks.len()
        )
    } else {
        problems.join("; ")
    };
    Ok((problems.is_empty(), detail))
}

fn determinism(budget: &mut Budget) -> Check {
    let mut shown = Vec::new();
    let mut ok = true;
    for config in [golden_config(), small_map_config()] {
        let mut runs = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir()?;
            pipeline(&config, dir.path(), budget)?;
            runs.push(std::fs::read(dir.path().join(SCORES_FILE))?);
        }
        ok &= runs[0] == runs[1];
        shown.push(format!(
            "{:?} {} bytes {}",
            config.model,
            runs[0].len(),
            if runs[0] == runs[1] {
                "identical"
            } else {
                "differ"
            }
        ));
    }
    Ok((ok, shown.join("; ")))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut budget = Budget::default();
    let mut results: Vec<(usize, Check)> = vec![(1, gradients()), (2, score_oracles())];

    results.push((8, golden_report(&mut budget)));
    results.push((9, determinism(&mut budget)));

    match SEEDS
        .iter()
        .map(|&s| Matched::train(s))
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(lab) => {
            results.push((4, pgd_efficacy(&lab[0], &mut budget)));
            results.push((5, target_convergence(&lab[0], &mut budget)));
            results.push((6, dimensionality(&lab, &mut budget)));
            results.push((7, adversarial_benefit(&lab[0], &mut budget)));
        }
        Err(e) => {
            for id in 4..=7 {
                results.push((id, Err(format!("training failed: {e}").into())));
            }
        }
    }
    results.push((
        3,
        Ok((
            budget.violations == 0,
            format!(
                "{} budget violations over {} attack runs (worst excess {:.1e})",
                budget.violations, budget.runs, budget.worst
            ),
        )),
    ));

    results.sort_by_key(|(id, _)| *id);
    let mut failed = 0;
    for (id, result) in &results {
        let (passed, detail) = match result {
            Ok((p, d)) => (*p, d.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failed += 1;
        }
        println!(
            "criterion {id}: {} {detail}",
            if passed { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "{} passed, {failed} failed in {:.0}s",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
