//! Parameter-vector and signal CSV files.
//!
//! Numbers are written with 17 significant digits so that a write/read round
//! trip reproduces every `f64` exactly.

use std::fs;
use std::path::Path;

use crate::CliError;

pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Parameter vector file: an optional header line of labels, then the values
/// separated by commas or newlines.
pub fn read_vector(path: &Path) -> Result<Vec<f64>, CliError> {
    parse_vector(&read_text(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

pub fn parse_vector(text: &str) -> Result<Vec<f64>, String> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let numeric: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match numeric {
            Ok(v) => values.extend(v),
            Err(_) if i == 0 && values.is_empty() => continue,
            Err(_) => return Err(format!("line {}: not a number list", i + 1)),
        }
    }
    if values.is_empty() {
        return Err("no values".into());
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite value".into());
    }
    Ok(values)
}

pub fn write_vector(path: &Path, labels: &[String], values: &[f64]) -> Result<(), CliError> {
    let mut out = labels.join(",");
    out.push('\n');
    out.push_str(&values.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(","));
    out.push('\n');
    write_text(path, &out)
}

/// Columns `t,u,y`.
pub struct DataFile {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn read_data(path: &Path) -> Result<DataFile, CliError> {
    let text = read_text(path)?;
    let parse_err = |msg: String| CliError::Parse(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (it, iu, iy) = match (col("t"), col("u"), col("y")) {
        (Some(t), Some(u), Some(y)) => (t, u, y),
        _ => return Err(parse_err("header must name columns t,u,y".into())),
    };
    let mut data = DataFile { t: Vec::new(), u: Vec::new(), y: Vec::new() };
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        let get = |i: usize| -> Result<f64, CliError> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(format!("row {}: bad number in column {}", row + 2, i + 1)))
        };
        data.t.push(get(it)?);
        data.u.push(get(iu)?);
        data.y.push(get(iy)?);
    }
    if data.t.len() < 2 {
        return Err(parse_err("need at least two samples".into()));
    }
    Ok(data)
}

pub fn write_data(path: &Path, t: &[f64], u: &[f64], y: &[f64]) -> Result<(), CliError> {
    let mut out = String::from("t,u,y\n");
    for k in 0..t.len() {
        out.push_str(&format!("{},{},{}\n", fmt_num(t[k]), fmt_num(u[k]), fmt_num(y[k])));
    }
    write_text(path, &out)
}

/// Sampling period of a uniformly spaced time column (relative spread 1e-9).
pub fn uniform_period(t: &[f64]) -> Result<f64, CliError> {
    let h = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(h > 0.0) {
        return Err(CliError::NonUniformSampling("time column is not increasing".into()));
    }
    for (k, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h {
            return Err(CliError::NonUniformSampling(format!(
                "step {} is {} but the mean step is {h}",
                k + 1,
                w[1] - w[0]
            )));
        }
    }
    Ok(h)
}
