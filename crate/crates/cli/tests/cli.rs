use std::path::Path;
use std::process::{Command, Output};

use robustcast::scores::{aggregate, read_scores_csv, ScoreRecord};

const SMALL: &str = r#"{
  "seed": 3,
  "scenario": { "length": 160 },
  "model_size": { "hidden": 8 },
  "training": { "max_epochs": 2, "batch_size": 16 },
  "attack_settings": { "steps": 3, "noise_repetitions": 2 },
  "eval_stride": 7
}"#;

fn robustcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robustcast"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn missing_weights_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let missing = dir.path().join("nowhere").join("weights.json");
    let out = robustcast(&[
        "evaluate",
        "--config",
        &config,
        "--weights",
        missing.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("nowhere"), "{}", stderr(&out));
}

#[test]
fn generate_is_reproducible() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let out = robustcast(&[
            "generate",
            "--seed",
            "7",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path().join("data"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 3);
    for name in names {
        let a = std::fs::read(dirs[0].path().join("data").join(&name)).unwrap();
        let b = std::fs::read(dirs[1].path().join("data").join(&name)).unwrap();
        assert_eq!(a, b, "{name:?}");
    }
}

#[test]
fn report_table_matches_csv_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("run");
    let out_arg = out_dir.to_str().unwrap();
    let train = robustcast(&["train", "--config", &config, "--out", out_arg]);
    assert!(train.status.success(), "{}", stderr(&train));
    let weights = out_dir.join("weights.json");
    let eval = robustcast(&[
        "evaluate",
        "--config",
        &config,
        "--out",
        out_arg,
        "--weights",
        weights.to_str().unwrap(),
    ]);
    assert!(eval.status.success(), "{}", stderr(&eval));

    let report = robustcast(&["report", out_arg]);
    assert!(report.status.success(), "{}", stderr(&report));
    let table = String::from_utf8(report.stdout).unwrap();
    let records =
        read_scores_csv(std::fs::File::open(out_dir.join("scores.csv")).unwrap()).unwrap();

    let mut attacks: Vec<String> = records.iter().map(|r| r.attack.clone()).collect();
    attacks.dedup();
    assert_eq!(attacks.len(), 10);
    for attack in attacks {
        let mut groups: Vec<(String, Vec<ScoreRecord>)> = Vec::new();
        for r in records.iter().filter(|r| r.attack == attack) {
            match groups.last_mut() {
                Some((id, rs)) if *id == r.dataset_id => rs.push(r.clone()),
                _ => groups.push((r.dataset_id.clone(), vec![r.clone()])),
            }
        }
        let expected = aggregate(&groups).unwrap();
        let row = table
            .lines()
            .find(|l| l.split_whitespace().next() == Some(attack.as_str()))
            .unwrap_or_else(|| panic!("no row for {attack} in\n{table}"));
        let shown: f64 = row.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert!((shown - expected.prs.mean).abs() <= 1.5e-4, "{row}");
    }
}

#[test]
fn bad_flag_and_bad_config_fail_differently() {
    let flag = robustcast(&["train", "--epochs", "3"]);
    assert_eq!(flag.status.code(), Some(2));
    assert!(stderr(&flag).contains("--epochs"), "{}", stderr(&flag));

    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{ "training": { "max_epochs": 2, "epochz": 1 } }"#,
    );
    let bad = robustcast(&["train", "--config", &config]);
    assert_eq!(bad.status.code(), Some(1));
    let msg = stderr(&bad);
    assert!(
        msg.contains("epochz") && msg.contains("config.json"),
        "{msg}"
    );
    assert_ne!(msg, stderr(&flag));
}
