//! CSV ingestion and export of power / wind-speed series.
//!
//! Accepted layouts (header row required, extra columns ignored):
//! `timestamp,power,speed` or `timestamp,power,u,v`. With wind components the
//! horizontal speed is `sqrt(u^2 + v^2)`. Power must be normalized to `[0, 1]`.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::ScenarioError;

/// Power and wind-speed columns of a series file.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesData {
    pub power: Vec<f64>,
    pub speed: Vec<f64>,
}

pub fn horizontal_speed(u: f64, v: f64) -> f64 {
    u.hypot(v)
}

pub fn load_csv(path: &Path) -> Result<SeriesData, ScenarioError> {
    let io_err = |e: std::io::Error| ScenarioError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| ScenarioError::Csv {
            path: path.to_path_buf(),
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let missing = |name: &str| ScenarioError::MissingColumn {
        path: path.to_path_buf(),
        column: name.to_string(),
    };
    column("timestamp").ok_or_else(|| missing("timestamp"))?;
    let power_col = column("power").ok_or_else(|| missing("power"))?;
    enum SpeedCols {
        Direct(usize),
        Components(usize, usize),
    }
    let speed_cols = match (column("speed"), column("u"), column("v")) {
        (Some(s), _, _) => SpeedCols::Direct(s),
        (None, Some(u), Some(v)) => SpeedCols::Components(u, v),
        (None, Some(_), None) => return Err(missing("v")),
        (None, None, Some(_)) => return Err(missing("u")),
        (None, None, None) => return Err(missing("speed")),
    };

    let mut data = SeriesData {
        power: Vec::new(),
        speed: Vec::new(),
    };
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| ScenarioError::Csv {
            path: path.to_path_buf(),
            line,
            reason: e.to_string(),
        })?;
        let cell = |c: usize| -> Result<f64, ScenarioError> {
            let raw = row.get(c).unwrap_or("").trim();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ScenarioError::Csv {
                    path: path.to_path_buf(),
                    line,
                    reason: format!("column {:?}: non-numeric value {raw:?}", &headers[c]),
                })
        };
        let power = cell(power_col)?;
        if !(0.0..=1.0).contains(&power) {
            return Err(ScenarioError::Csv {
                path: path.to_path_buf(),
                line,
                reason: format!("power {power} outside [0, 1]"),
            });
        }
        let speed = match speed_cols {
            SpeedCols::Direct(s) => cell(s)?,
            SpeedCols::Components(u, v) => horizontal_speed(cell(u)?, cell(v)?),
        };
        data.power.push(power);
        data.speed.push(speed);
    }
    Ok(data)
}

pub fn write_series_csv(path: &Path, power: &[f64], speed: &[f64]) -> Result<(), ScenarioError> {
    let mut out = String::from("timestamp,power,speed\n");
    for (t, (p, s)) in power.iter().zip(speed).enumerate() {
        out.push_str(&format!("{t},{p},{s}\n"));
    }
    std::fs::write(path, out).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One row per time step: `timestamp,cell_0,...,cell_{n-1}` (row-major cells).
pub fn write_maps_csv(path: &Path, fields: &[Vec<f64>]) -> Result<(), ScenarioError> {
    let io_err = |source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    let cells = fields.first().map_or(0, Vec::len);
    let header: Vec<String> = std::iter::once("timestamp".to_string())
        .chain((0..cells).map(|c| format!("cell_{c}")))
        .collect();
    writeln!(file, "{}", header.join(",")).map_err(io_err)?;
    for (t, field) in fields.iter().enumerate() {
        let row: Vec<String> = field.iter().map(|v| v.to_string()).collect();
        writeln!(file, "{t},{}", row.join(",")).map_err(io_err)?;
    }
    file.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn components_become_horizontal_speed() {
        let f = write("timestamp,power,u,v\n0,0.5,3,4\n1,0.0,0,0\n");
        let d = load_csv(f.path()).unwrap();
        assert_eq!(d.speed, vec![5.0, 0.0]);
        assert_eq!(d.power, vec![0.5, 0.0]);
    }

    #[test]
    fn direct_speed_column() {
        let f = write("timestamp,power,speed\n0,0.25,7.5\n");
        assert_eq!(load_csv(f.path()).unwrap().speed, vec![7.5]);
    }

    #[test]
    fn out_of_range_power_names_the_line() {
        let f = write("timestamp,power,speed\n0,0.5,7\n1,1.2,8\n");
        let err = load_csv(f.path()).unwrap_err();
        assert!(matches!(err, ScenarioError::Csv { line: 3, .. }), "{err}");
        assert!(err.to_string().contains("1.2"));
    }

    #[test]
    fn missing_and_non_numeric_columns() {
        let f = write("timestamp,speed\n0,7\n");
        assert!(matches!(
            load_csv(f.path()),
            Err(ScenarioError::MissingColumn { ref column, .. }) if column == "power"
        ));
        let f = write("timestamp,power,u\n0,0.5,3\n");
        assert!(matches!(
            load_csv(f.path()),
            Err(ScenarioError::MissingColumn { ref column, .. }) if column == "v"
        ));
        let f = write("timestamp,power,speed\n0,abc,7\n");
        assert!(matches!(
            load_csv(f.path()),
            Err(ScenarioError::Csv { line: 2, .. })
        ));
    }

    #[test]
    fn written_series_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_series_csv(&path, &[0.1, 0.9], &[4.25, 11.0]).unwrap();
        let d = load_csv(&path).unwrap();
        assert_eq!(d.power, vec![0.1, 0.9]);
        assert_eq!(d.speed, vec![4.25, 11.0]);
    }
}
