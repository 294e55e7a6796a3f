use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::{HarnessError, RobustnessReport};
use crate::scores::{format_value, write_scores_csv, MeanStd};

pub const REPORT_FILE: &str = "report.json";
pub const SCORES_FILE: &str = "scores.csv";

/// Writes `report.json` and `scores.csv` into `dir`, creating it if needed.
pub fn write_report(report: &RobustnessReport, dir: &Path) -> Result<(), HarnessError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;

    let json_path = dir.join(REPORT_FILE);
    let json = serde_json::to_string_pretty(report).map_err(|source| HarnessError::Json {
        path: json_path.clone(),
        source,
    })?;
    std::fs::write(&json_path, json + "\n").map_err(io(&json_path))?;

    let csv_path = dir.join(SCORES_FILE);
    let file = File::create(&csv_path).map_err(io(&csv_path))?;
    write_scores_csv(&report.records, BufWriter::new(file)).map_err(|source| HarnessError::Scores {
        path: csv_path,
        source,
    })
}

/// Loads a `report.json`; per-sample records are not part of it.
pub fn read_report(path: &Path) -> Result<RobustnessReport, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn cell(v: Option<&MeanStd>) -> String {
    match v {
        Some(m) => format!("{} ± {}", format_value(m.mean), format_value(m.std)),
        None => "-".to_string(),
    }
}

/// Plain-text table: one row per attack with cross-dataset mean ± std.
pub fn render_table(report: &RobustnessReport) -> String {
    let header = [
        "attack",
        "PRS",
        "DRS",
        "TARS",
        "clean RMSE",
        "attacked RMSE",
    ];
    let rows: Vec<[String; 6]> = report
        .attacks
        .iter()
        .map(|a| {
            let s = &a.scores;
            [
                a.name.clone(),
                cell(Some(&s.prs)),
                cell(s.drs.as_ref()),
                cell(s.tars.as_ref()),
                cell(Some(&s.clean_rmse)),
                cell(Some(&s.attacked_rmse)),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        padded.join("  ").trim_end().to_string()
    };

    let mut out = String::new();
    if let Some(c) = &report.config {
        let _ = writeln!(
            out,
            "model: {}  training: {}  seed: {}",
            c.model, c.train_mode, c.seed
        );
    }
    let _ = writeln!(out, "beta: {}", report.beta);
    for d in &report.clean_rmse {
        let _ = writeln!(
            out,
            "clean RMSE {}: {} ({} samples)",
            d.dataset_id,
            format_value(d.rmse),
            d.samples
        );
    }
    out.push('\n');
    out.push_str(&line(&header.map(String::from)));
    out.push('\n');
    for row in &rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}
