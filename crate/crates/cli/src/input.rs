//! Input parsing: datasets from CSV/JSON files, prior specifications, and
//! grid flags.

use std::path::Path;

use serde::Deserialize;
use shrinkbound::model::{Dataset, HeterogeneityPrior, Study};

use crate::error::CliError;

#[derive(Debug, Deserialize)]
struct Row {
    study: String,
    y: f64,
    sigma: f64,
}

fn build_dataset(rows: Vec<(Row, String)>) -> Result<Dataset, CliError> {
    if rows.is_empty() {
        return Err(CliError::data("input contains no data rows"));
    }
    let mut studies = Vec::with_capacity(rows.len());
    for (row, place) in rows {
        if !row.y.is_finite() {
            return Err(CliError::data(format!(
                "{place}: estimate y must be finite, got {}",
                row.y
            )));
        }
        if !(row.sigma.is_finite() && row.sigma > 0.0) {
            return Err(CliError::data(format!(
                "{place}: standard error sigma must be positive, got {}",
                row.sigma
            )));
        }
        if studies
            .iter()
            .any(|s: &Study| s.label() == row.study.as_str())
        {
            return Err(CliError::data(format!(
                "{place}: duplicate study label `{}`",
                row.study
            )));
        }
        studies.push(Study::new(row.study, row.y, row.sigma).expect("validated above"));
    }
    Dataset::new(studies).map_err(|e| CliError::data(e.to_string()))
}

/// Reads a dataset from a CSV file with header `study,y,sigma`, or from a
/// JSON array of objects with the same keys when the path ends in `.json`.
pub fn parse_dataset(path: &Path) -> Result<Dataset, CliError> {
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        parse_dataset_json(path)
    } else {
        parse_dataset_csv(path)
    }
}

fn parse_dataset_csv(path: &Path) -> Result<Dataset, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    for required in ["study", "y", "sigma"] {
        if !headers.iter().any(|h| h == required) {
            return Err(CliError::data(format!(
                "{}: missing column `{required}` (header must contain study,y,sigma)",
                path.display()
            )));
        }
    }

    let mut rows = Vec::new();
    for result in reader.deserialize::<Row>() {
        match result {
            Ok(row) => {
                // records start on line 2, after the header
                let line = rows.len() + 2;
                rows.push((row, format!("{}: line {line}", path.display())));
            }
            Err(e) => {
                let line = e
                    .position()
                    .map(|p| p.line().to_string())
                    .unwrap_or_else(|| "?".to_string());
                return Err(CliError::data(format!(
                    "{}: line {line}: {}",
                    path.display(),
                    match e.kind() {
                        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                        _ => e.to_string(),
                    }
                )));
            }
        }
    }
    build_dataset(rows)
}

fn parse_dataset_json(path: &Path) -> Result<Dataset, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let rows: Vec<Row> = serde_json::from_str(&text).map_err(|e| {
        CliError::data(format!("{}: line {}: {e}", path.display(), e.line()))
    })?;
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, row)| (row, format!("{}: entry {}", path.display(), i + 1)))
        .collect();
    build_dataset(rows)
}

/// Parses a prior specification:
/// `half-normal:<scale>` | `half-cauchy:<scale>` | `uniform:<upper>` |
/// `table:<path>` (CSV with header `tau,density`).
pub fn parse_prior(spec: &str) -> Result<HeterogeneityPrior, CliError> {
    let (family, param) = spec.split_once(':').ok_or_else(|| {
        CliError::usage(format!(
            "prior `{spec}` must look like family:parameter (e.g. half-normal:0.5)"
        ))
    })?;
    let positive = |name: &str| -> Result<f64, CliError> {
        let value: f64 = param
            .parse()
            .map_err(|_| CliError::usage(format!("prior {name} `{param}` is not a number")))?;
        if value.is_finite() && value > 0.0 {
            Ok(value)
        } else {
            Err(CliError::usage(format!(
                "prior {name} must be positive, got {param}"
            )))
        }
    };
    match family {
        "half-normal" => Ok(HeterogeneityPrior::half_normal(positive("scale")?)
            .expect("validated above")),
        "half-cauchy" => Ok(HeterogeneityPrior::half_cauchy(positive("scale")?)
            .expect("validated above")),
        "uniform" => Ok(HeterogeneityPrior::uniform(positive("upper")?)
            .expect("validated above")),
        "table" => parse_table_prior(Path::new(param)),
        other => Err(CliError::usage(format!(
            "unknown prior family `{other}` (expected half-normal, half-cauchy, uniform or table)"
        ))),
    }
}

fn parse_table_prior(path: &Path) -> Result<HeterogeneityPrior, CliError> {
    #[derive(Debug, Deserialize)]
    struct TableRow {
        tau: f64,
        density: f64,
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut taus = Vec::new();
    let mut densities = Vec::new();
    for result in reader.deserialize::<TableRow>() {
        let row = result.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        taus.push(row.tau);
        densities.push(row.density);
    }
    HeterogeneityPrior::tabulated(taus, densities)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Comma-separated positive reals (`--sigmas`, `--scales`).
pub fn parse_positive_list(text: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    let values = text
        .split(',')
        .map(|piece| {
            piece
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v > 0.0)
                .ok_or_else(|| {
                    CliError::usage(format!(
                        "{flag}: `{piece}` is not a positive number"
                    ))
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::usage(format!("{flag}: empty list")));
    }
    Ok(values)
}

/// `lo:hi:step` grid; `lo == hi` degenerates to a single point.
pub fn parse_delta_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || CliError::usage(format!("--delta `{spec}` must look like lo:hi:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || lo > hi {
        return Err(bad());
    }
    if lo == hi {
        return Ok(vec![lo]);
    }
    if step <= 0.0 {
        return Err(bad());
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}
