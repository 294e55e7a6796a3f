//! Robustness scores and their sample-wise, two-level aggregation.
//!
//! PRS measures how little an attack degraded accuracy, DRS how little it
//! moved the forecast toward the attacker's target or band, and TARS
//! combines both F-beta style. All three are exponential ratios capped at 1.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Guard against division by zero in the score ratios.
pub const GAMMA: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("band lower bound exceeds upper bound at index {0}")]
    InvertedBand(usize),
    #[error("beta must be positive, got {0}")]
    Beta(f64),
    #[error("score {name} = {value} outside [0, 1]")]
    Range { name: &'static str, value: f64 },
    #[error("dataset {0} has no records")]
    EmptyGroup(String),
    #[error("no datasets to aggregate")]
    NoGroups,
    #[error("dataset {0} mixes records with and without deformation scores")]
    MixedRecords(String),
    #[error("csv: {0}")]
    Csv(String),
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<(), ScoreError> {
    if a.len() != b.len() {
        return Err(ScoreError::Length(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(ScoreError::Empty);
    }
    Ok(())
}

fn check_band(lower: &[f64], upper: &[f64]) -> Result<(), ScoreError> {
    check_lengths(lower, upper)?;
    match lower.iter().zip(upper).position(|(a, b)| a > b) {
        Some(i) => Err(ScoreError::InvertedBand(i)),
        None => Ok(()),
    }
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, ScoreError> {
    check_lengths(pred, truth)?;
    let sq: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sq / pred.len() as f64).sqrt())
}

/// RMSE of the distance from `pred` to the band `[lower, upper]`; zero
/// wherever the prediction is inside the band.
pub fn brmse(pred: &[f64], lower: &[f64], upper: &[f64]) -> Result<f64, ScoreError> {
    check_band(lower, upper)?;
    check_lengths(pred, lower)?;
    let sq: f64 = pred
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(&p, (&a, &b))| {
            if p < a {
                (p - a).powi(2)
            } else if p > b {
                (p - b).powi(2)
            } else {
                0.0
            }
        })
        .sum();
    Ok((sq / pred.len() as f64).sqrt())
}

fn capped_ratio_score(numerator: f64, denominator: f64) -> f64 {
    (1.0 - numerator / (denominator + GAMMA)).exp().min(1.0)
}

/// Performance robustness score of an attacked forecast.
pub fn prs(clean: &[f64], attacked: &[f64], truth: &[f64]) -> Result<f64, ScoreError> {
    check_lengths(clean, attacked)?;
    Ok(capped_ratio_score(
        rmse(attacked, truth)?,
        rmse(clean, truth)?,
    ))
}

/// Deformation robustness score toward an adversarial target.
pub fn drs_targeted(clean: &[f64], attacked: &[f64], target: &[f64]) -> Result<f64, ScoreError> {
    check_lengths(clean, attacked)?;
    Ok(capped_ratio_score(
        rmse(clean, target)?,
        rmse(attacked, target)?,
    ))
}

/// Deformation robustness score toward a band `[lower, upper]`.
pub fn drs_semi_targeted(
    clean: &[f64],
    attacked: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Result<f64, ScoreError> {
    check_lengths(clean, attacked)?;
    Ok(capped_ratio_score(
        brmse(clean, lower, upper)?,
        brmse(attacked, lower, upper)?,
    ))
}

/// Total adversarial robustness score; `beta` weights DRS `beta` times as
/// much as PRS. Defined as 0 when both inputs are 0.
pub fn tars(prs: f64, drs: f64, beta: f64) -> Result<f64, ScoreError> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(ScoreError::Beta(beta));
    }
    for (name, value) in [("prs", prs), ("drs", drs)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(ScoreError::Range { name, value });
        }
    }
    let b2 = beta * beta;
    let denom = b2 * prs + drs;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 + b2) * prs * drs / denom)
}

/// Per-sample scores for one attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_id: usize,
    pub dataset_id: String,
    pub attack: String,
    pub clean_rmse: f64,
    pub attacked_rmse: f64,
    pub prs: f64,
    pub drs: Option<f64>,
    pub tars: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for one dataset.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Mean scores over one dataset's samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeans {
    pub dataset_id: String,
    pub samples: usize,
    pub clean_rmse: f64,
    pub attacked_rmse: f64,
    pub prs: f64,
    pub drs: Option<f64>,
    pub tars: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub datasets: Vec<DatasetMeans>,
    pub clean_rmse: MeanStd,
    pub attacked_rmse: MeanStd,
    pub prs: MeanStd,
    pub drs: Option<MeanStd>,
    pub tars: Option<MeanStd>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Averages records per dataset, then takes mean and sample std across
/// datasets. TARS is averaged per sample, never recomputed from mean PRS
/// and DRS.
pub fn aggregate(groups: &[(String, Vec<ScoreRecord>)]) -> Result<AggregateScores, ScoreError> {
    if groups.is_empty() {
        return Err(ScoreError::NoGroups);
    }
    let mut datasets = Vec::with_capacity(groups.len());
    for (id, records) in groups {
        if records.is_empty() {
            return Err(ScoreError::EmptyGroup(id.clone()));
        }
        let with_drs = records.iter().filter(|r| r.drs.is_some()).count();
        let with_tars = records.iter().filter(|r| r.tars.is_some()).count();
        if (with_drs != 0 && with_drs != records.len()) || with_drs != with_tars {
            return Err(ScoreError::MixedRecords(id.clone()));
        }
        let full = with_drs == records.len();
        datasets.push(DatasetMeans {
            dataset_id: id.clone(),
            samples: records.len(),
            clean_rmse: mean(records.iter().map(|r| r.clean_rmse)),
            attacked_rmse: mean(records.iter().map(|r| r.attacked_rmse)),
            prs: mean(records.iter().map(|r| r.prs)),
            drs: full.then(|| mean(records.iter().filter_map(|r| r.drs))),
            tars: full.then(|| mean(records.iter().filter_map(|r| r.tars))),
        });
    }
    let across = |f: &dyn Fn(&DatasetMeans) -> Option<f64>| -> Option<MeanStd> {
        let vals: Option<Vec<f64>> = datasets.iter().map(f).collect();
        vals.map(|v| MeanStd::of(&v))
    };
    let drs = across(&|d| d.drs);
    let tars = across(&|d| d.tars);
    Ok(AggregateScores {
        clean_rmse: MeanStd::of(&datasets.iter().map(|d| d.clean_rmse).collect::<Vec<_>>()),
        attacked_rmse: MeanStd::of(&datasets.iter().map(|d| d.attacked_rmse).collect::<Vec<_>>()),
        prs: MeanStd::of(&datasets.iter().map(|d| d.prs).collect::<Vec<_>>()),
        drs,
        tars,
        datasets,
    })
}

pub const CSV_COLUMNS: [&str; 8] = [
    "sample_id",
    "dataset_id",
    "attack",
    "clean_rmse",
    "attacked_rmse",
    "prs",
    "drs",
    "tars",
];

/// Fixed 4-decimal rendering used in every report file.
pub fn format_value(v: f64) -> String {
    format!("{v:.4}")
}

/// Writes one row per record; DRS and TARS cells are empty when absent.
pub fn write_scores_csv<W: Write>(records: &[ScoreRecord], out: W) -> Result<(), ScoreError> {
    let csv_err = |e: csv::Error| ScoreError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in records {
        let opt = |v: Option<f64>| v.map(format_value).unwrap_or_default();
        w.write_record([
            r.sample_id.to_string(),
            r.dataset_id.clone(),
            r.attack.clone(),
            format_value(r.clean_rmse),
            format_value(r.attacked_rmse),
            format_value(r.prs),
            opt(r.drs),
            opt(r.tars),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| ScoreError::Csv(e.to_string()))
}

pub fn read_scores_csv<R: Read>(input: R) -> Result<Vec<ScoreRecord>, ScoreError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| ScoreError::Csv(e.to_string()))?
        .clone();
    if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(ScoreError::Csv(format!("unexpected header {headers:?}")));
    }
    let mut records = Vec::new();
    for (row, result) in reader.records().enumerate() {
        let rec = result.map_err(|e| ScoreError::Csv(e.to_string()))?;
        let line = row + 2;
        let num = |i: usize| -> Result<f64, ScoreError> {
            rec[i].parse().map_err(|_| {
                ScoreError::Csv(format!("row {line}: bad {} {:?}", CSV_COLUMNS[i], &rec[i]))
            })
        };
        let opt = |i: usize| -> Result<Option<f64>, ScoreError> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        records.push(ScoreRecord {
            sample_id: rec[0]
                .parse()
                .map_err(|_| ScoreError::Csv(format!("row {line}: bad sample_id")))?,
            dataset_id: rec[1].to_string(),
            attack: rec[2].to_string(),
            clean_rmse: num(3)?,
            attacked_rmse: num(4)?,
            prs: num(5)?,
            drs: opt(6)?,
            tars: opt(7)?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    const E_INV: f64 = 0.367_879_441_171_442_3;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() < tol
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!(close(
            rmse(&[0.2, 0.4], &[0.0, 0.0]).unwrap(),
            0.1f64.sqrt(),
            1e-12
        ));
        assert_eq!(rmse(&[1.0], &[1.0, 2.0]), Err(ScoreError::Length(1, 2)));
        assert_eq!(rmse(&[], &[]), Err(ScoreError::Empty));
    }

    #[test]
    fn brmse_examples() {
        let a = [0.25, 0.25];
        let b = [0.5, 0.5];
        assert_eq!(brmse(&[0.3, 0.49], &a, &b).unwrap(), 0.0);
        assert!(close(
            brmse(&[0.6, 0.3], &a, &b).unwrap(),
            0.005f64.sqrt(),
            1e-12
        ));
        assert_eq!(
            brmse(&[0.1], &[0.6], &[0.5]),
            Err(ScoreError::InvertedBand(0))
        );
    }

    #[test]
    fn collapsed_band_is_rmse() {
        let y = [0.1, 0.5, 0.9];
        let p = [0.2, 0.4, 1.1];
        assert_eq!(brmse(&p, &y, &y).unwrap(), rmse(&p, &y).unwrap());
    }

    #[test]
    fn prs_examples() {
        let y = [0.0, 0.0];
        // attacked no worse than clean
        assert_eq!(prs(&[0.2, 0.2], &[0.1, 0.1], &y).unwrap(), 1.0);
        let v = prs(&[0.1, 0.1], &[0.2, 0.2], &y).unwrap();
        assert!(close(v, E_INV, 1e-9), "{v}");
        // perfect model, untouched: exp(1) capped
        assert_eq!(prs(&y, &y, &y).unwrap(), 1.0);
    }

    #[test]
    fn drs_targeted_examples() {
        let target = [0.0, 0.0];
        assert_eq!(
            drs_targeted(&[0.4, 0.4], &[0.4, 0.4], &target).unwrap(),
            1.0
        );
        let v = drs_targeted(&[0.4, 0.4], &[0.2, 0.2], &target).unwrap();
        assert!(close(v, E_INV, 1e-9), "{v}");
        // moved away from the target
        assert_eq!(
            drs_targeted(&[0.2, 0.2], &[0.5, 0.5], &target).unwrap(),
            1.0
        );
    }

    #[test]
    fn drs_semi_targeted_examples() {
        let (a, b) = ([0.5, 0.5], [0.75, 0.75]);
        // clean already inside
        assert_eq!(
            drs_semi_targeted(&[0.6, 0.6], &[0.1, 0.1], &a, &b).unwrap(),
            1.0
        );
        // brmse clean 0.2, attacked 0.1
        let v = drs_semi_targeted(&[0.3, 0.3], &[0.4, 0.4], &a, &b).unwrap();
        assert!(close(v, E_INV, 1e-9), "{v}");
        // attacked fully inside: exp(1 - 0.2/1e-10) flushes to zero
        let v = drs_semi_targeted(&[0.3, 0.3], &[0.6, 0.7], &a, &b).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn tars_examples() {
        assert_eq!(tars(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(tars(1.0, 0.0, 1.0).unwrap(), 0.0);
        assert!(close(tars(0.5, 0.5, 1.0).unwrap(), 0.5, 1e-15));
        assert!(close(tars(0.25, 0.75, 2.0).unwrap(), 0.9375 / 1.75, 1e-12));
        assert_eq!(tars(0.0, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(tars(0.5, 0.5, 0.0), Err(ScoreError::Beta(0.0)));
        assert!(tars(1.5, 0.5, 1.0).is_err());
    }

    fn record(
        dataset: &str,
        id: usize,
        prs: f64,
        drs: Option<f64>,
        tars: Option<f64>,
    ) -> ScoreRecord {
        ScoreRecord {
            sample_id: id,
            dataset_id: dataset.into(),
            attack: "pgd-targeted:constant".into(),
            clean_rmse: 0.1,
            attacked_rmse: 0.2,
            prs,
            drs,
            tars,
        }
    }

    #[test]
    fn aggregate_single_record() {
        let r = record("d0", 0, 0.7, Some(0.4), Some(0.5));
        let agg = aggregate(&[("d0".into(), vec![r])]).unwrap();
        assert_eq!(
            agg.prs,
            MeanStd {
                mean: 0.7,
                std: 0.0
            }
        );
        assert_eq!(agg.tars.unwrap().mean, 0.5);
    }

    #[test]
    fn aggregate_cross_dataset_mean() {
        let agg = aggregate(&[
            ("a".into(), vec![record("a", 0, 0.4, None, None)]),
            ("b".into(), vec![record("b", 0, 0.6, None, None)]),
        ])
        .unwrap();
        assert!(close(agg.prs.mean, 0.5, 1e-15));
        assert!(close(agg.prs.std, 0.02f64.sqrt(), 1e-12));
        assert!(agg.drs.is_none() && agg.tars.is_none());
    }

    #[test]
    fn aggregate_is_mean_of_tars() {
        let recs = vec![
            record("a", 0, 1.0, Some(1.0), Some(tars(1.0, 1.0, 1.0).unwrap())),
            record("a", 1, 1.0, Some(0.0), Some(tars(1.0, 0.0, 1.0).unwrap())),
        ];
        let agg = aggregate(&[("a".into(), recs)]).unwrap();
        let d = &agg.datasets[0];
        assert_eq!(d.tars, Some(0.5));
        let of_means = tars(d.prs, d.drs.unwrap(), 1.0).unwrap();
        assert!((of_means - 2.0 / 3.0).abs() < 1e-12);
        assert_ne!(d.tars.unwrap(), of_means);
    }

    #[test]
    fn aggregate_rejects_empty_and_mixed() {
        assert_eq!(aggregate(&[]), Err(ScoreError::NoGroups));
        assert_eq!(
            aggregate(&[("a".into(), vec![])]),
            Err(ScoreError::EmptyGroup("a".into()))
        );
        let mixed = vec![
            record("a", 0, 1.0, None, None),
            record("a", 1, 1.0, Some(1.0), Some(1.0)),
        ];
        assert!(matches!(
            aggregate(&[("a".into(), mixed)]),
            Err(ScoreError::MixedRecords(_))
        ));
    }

    #[test]
    fn csv_leaves_absent_scores_empty() {
        let recs = vec![
            record("a", 0, 0.5, None, None),
            record("a", 1, 0.25, Some(0.125), Some(0.2)),
        ];
        let mut buf = Vec::new();
        write_scores_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "sample_id,dataset_id,attack,clean_rmse,attacked_rmse,prs,drs,tars"
        );
        assert_eq!(lines[1], "0,a,pgd-targeted:constant,0.1000,0.2000,0.5000,,");
        assert_eq!(
            lines[2],
            "1,a,pgd-targeted:constant,0.1000,0.2000,0.2500,0.1250,0.2000"
        );
        let back = read_scores_csv(buf.as_slice()).unwrap();
        assert_eq!(back, recs);
    }
}
