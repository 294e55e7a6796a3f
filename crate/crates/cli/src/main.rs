//! `robustcast` command-line driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use robustcast::attacks::run_attack;
use robustcast::harness::{
    evaluate_robustness, read_report, render_table, resolve_attack, resolve_attacks, sample_rng,
    spec_for_dataset, train_adversarial, train_ordinary, write_report, ExperimentConfig, TrainMode,
    REPORT_FILE,
};
use robustcast::models::{Model, ModelKind};
use robustcast::scenarios::{generate_datasets, write_maps_csv, write_series_csv, RawScenario};

const WEIGHTS_FILE: &str = "weights.json";

#[derive(Parser)]
#[command(
    name = "robustcast",
    version,
    about = "Adversarial robustness experiments for wind-power forecasters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the scenario's raw datasets to `<out>/data/*.csv`.
    Generate(Common),
    /// Train a model and write `<out>/weights.json`.
    Train(Common),
    /// Attack one test sample and dump the perturbation as JSON.
    Attack {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        attack: AttackArgs,
        #[arg(long)]
        weights: PathBuf,
        /// Test-sample index within the dataset.
        #[arg(long, default_value_t = 0)]
        sample: usize,
        #[arg(long, default_value_t = 0)]
        dataset: usize,
    },
    /// Evaluate a trained model; writes `report.json` and `scores.csv`.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        attack: AttackArgs,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Print a report JSON as a table.
    Report {
        /// A `report.json` or a directory holding one.
        path: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long = "train-mode")]
    train_mode: Option<TrainMode>,
}

#[derive(Args)]
struct AttackArgs {
    /// Attack name; `evaluate` accepts it repeatedly and defaults to the config's list.
    #[arg(long)]
    attack: Vec<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        if let Some(model) = self.model {
            config.model = model;
        }
        if let Some(mode) = self.train_mode {
            config.train_mode = mode;
        }
        Ok(config)
    }
}

impl AttackArgs {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(eps) = self.epsilon {
            config.attack_settings.epsilon = eps;
        }
        if let Some(steps) = self.steps {
            config.attack_settings.steps = steps;
        }
        if !self.attack.is_empty() {
            config.attacks = self.attack.clone();
        }
    }
}

fn validated(mut config: ExperimentConfig, source: &Common) -> Result<ExperimentConfig> {
    let origin = source
        .config
        .as_deref()
        .map_or_else(|| "defaults".to_string(), |p| p.display().to_string());
    config
        .validate()
        .with_context(|| format!("config {origin}"))?;
    config.scenario.seed = config.seed;
    Ok(config)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn load_model(path: &Path, config: &ExperimentConfig) -> Result<Model> {
    let model = Model::from_weights_file(path)?;
    if model.kind() != config.model {
        bail!(
            "{}: holds a {} model but the config selects {}",
            path.display(),
            model.kind(),
            config.model
        );
    }
    Ok(model)
}

fn generate(config: &ExperimentConfig) -> Result<()> {
    let dir = config.out.join("data");
    create_dir(&dir)?;
    let scenario = config.scenario();
    for i in 0..scenario.datasets {
        let raw = RawScenario::generate(&scenario, config.model, i)?;
        write_series_csv(&dir.join(format!("{}.csv", raw.id)), &raw.power, &raw.speed)?;
        if let Some(maps) = &raw.maps {
            write_maps_csv(&dir.join(format!("{}_maps.csv", raw.id)), maps)?;
        }
    }
    println!("wrote {} datasets to {}", scenario.datasets, dir.display());
    Ok(())
}

fn train(config: &ExperimentConfig) -> Result<()> {
    let datasets = generate_datasets(&config.scenario(), config.model)?;
    let arch = config.architecture();
    let outcome = match config.train_mode {
        TrainMode::Ordinary => train_ordinary(arch, &datasets, &config.training, config.seed)?,
        TrainMode::Adversarial => train_adversarial(
            arch,
            &datasets,
            &config.training,
            &config.inner_attack,
            config.seed,
        )?,
    };
    create_dir(&config.out)?;
    let weights = config.out.join(WEIGHTS_FILE);
    outcome.model.save_weights(&weights)?;
    write_json(
        &config.out.join("training_curve.json"),
        &json!({ "best_epoch": outcome.best_epoch, "curve": outcome.curve }),
    )?;
    let best = &outcome.curve[outcome.best_epoch];
    println!(
        "best epoch {} (validation MSE {:.6}); weights in {}",
        outcome.best_epoch,
        best.val_mse,
        weights.display()
    );
    Ok(())
}

fn attack(
    config: &ExperimentConfig,
    weights: &Path,
    name: &str,
    dataset: usize,
    sample: usize,
) -> Result<()> {
    let model = load_model(weights, config)?;
    let datasets = generate_datasets(&config.scenario(), config.model)?;
    let d = datasets.get(dataset).ok_or_else(|| {
        anyhow!(
            "dataset {dataset} out of range ({} datasets)",
            datasets.len()
        )
    })?;
    let s = d.test.get(sample).ok_or_else(|| {
        anyhow!(
            "sample {sample} out of range ({} test samples)",
            d.test.len()
        )
    })?;
    let named = resolve_attack(name, model.horizon(), &config.attack_settings)?;
    let spec = spec_for_dataset(&named.spec, d);
    let mut rng = sample_rng(config.seed, dataset, sample);
    let result = run_attack(&model, s, &spec, &mut rng)?;
    let attacked = model.predict(&s.with_exo(result.x_adv.clone()))?;
    create_dir(&config.out)?;
    let path = config.out.join("attack.json");
    write_json(
        &path,
        &json!({
            "attack": named.name,
            "spec": spec,
            "dataset_id": d.id,
            "sample_id": sample,
            "truth": s.truth,
            "clean_forecast": model.predict(s)?,
            "attacked_forecast": attacked,
            "max_perturbation": result.delta.max_abs(),
            "loss_trace": result.loss_trace,
            "shape": result.delta.shape(),
            "delta": result.delta.data(),
        }),
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn evaluate(config: &ExperimentConfig, weights: &Path) -> Result<()> {
    let model = load_model(weights, config)?;
    let datasets = generate_datasets(&config.scenario(), config.model)?;
    let attacks = resolve_attacks(&config.attacks, model.horizon(), &config.attack_settings)?;
    let mut report = evaluate_robustness(&model, &datasets, &attacks, &config.eval_options())?;
    report.config = Some(config.clone());
    write_report(&report, &config.out)?;
    print!("{}", render_table(&report));
    Ok(())
}

fn report(path: &Path) -> Result<()> {
    let file = if path.is_dir() {
        path.join(REPORT_FILE)
    } else {
        path.to_path_buf()
    };
    print!("{}", render_table(&read_report(&file)?));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(common) => generate(&validated(common.load()?, &common)?),
        Command::Train(common) => train(&validated(common.load()?, &common)?),
        Command::Attack {
            common,
            attack: args,
            weights,
            sample,
            dataset,
        } => {
            let mut config = common.load()?;
            args.apply(&mut config);
            let name = match args.attack.as_slice() {
                [] => "pgd-untargeted".to_string(),
                [one] => one.clone(),
                _ => bail!("attack takes a single --attack"),
            };
            config.attacks = vec![name.clone()];
            let config = validated(config, &common)?;
            attack(&config, &weights, &name, dataset, sample)
        }
        Command::Evaluate {
            common,
            attack: args,
            weights,
            beta,
        } => {
            let mut config = common.load()?;
            args.apply(&mut config);
            if let Some(beta) = beta {
                config.beta = beta;
            }
            evaluate(&validated(config, &common)?, &weights)
        }
        Command::Report { path } => report(&path),
    }
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn one_line(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out.replace('\n', " ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}
