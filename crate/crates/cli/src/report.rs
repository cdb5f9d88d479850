//! Rendering of analysis and bounds reports as text, JSON, or CSV.
//! Percentages carry one decimal and effects three, matching the table
//! conventions of the underlying analyses; JSON and CSV carry full precision.

use serde::Serialize;
use shrinkbound::bounds::BoundsReport;
use shrinkbound::posterior::{IntervalKind, ShrinkageResult};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Json,
    Csv,
}

/// Everything `analyze` reports for one study.
#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    /// One-based index, as in the printed tables.
    pub index: usize,
    pub label: String,
    pub y: f64,
    pub sigma: f64,
    pub fe_weight: f64,
    pub coincidence_weight: f64,
    /// Posterior-expected self-weight `E[c_jj | data]` (the "actual" weight).
    pub weight: f64,
    pub expected_weights: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OverallReport {
    pub expected_weights: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub grid_size: usize,
    /// Grid-oracle self-weights, one per reported study.
    pub self_weights: Vec<f64>,
    pub max_abs_difference: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub input: String,
    pub k: usize,
    pub prior: String,
    pub level: f64,
    pub interval: IntervalKind,
    pub studies: Vec<StudyReport>,
    pub overall: OverallReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleReport>,
}

pub fn assemble_analyze_report(
    input: &str,
    result: &ShrinkageResult,
    bounds: &BoundsReport,
    target: Option<usize>,
) -> AnalyzeReport {
    let studies = result
        .studies
        .iter()
        .zip(&bounds.studies)
        .enumerate()
        .filter(|(j, _)| target.map_or(true, |t| *j == t))
        .map(|(j, (s, b))| StudyReport {
            index: j + 1,
            label: s.label.clone(),
            y: s.y,
            sigma: s.sigma,
            fe_weight: b.fe_weight,
            coincidence_weight: b.coincidence_weight,
            weight: b.actual_weight.unwrap_or(s.expected_weights[j]),
            expected_weights: s.expected_weights.clone(),
            mean: s.mean,
            sd: s.sd,
            lo: s.lo,
            hi: s.hi,
        })
        .collect();
    AnalyzeReport {
        input: input.to_string(),
        k: result.studies.len(),
        prior: bounds.prior.clone(),
        level: result.level,
        interval: result.kind,
        studies,
        overall: OverallReport {
            expected_weights: result.overall.expected_weights.clone(),
            mean: result.overall.mean,
            sd: result.overall.sd,
            lo: result.overall.lo,
            hi: result.overall.hi,
        },
        oracle: None,
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

pub fn render_analyze(report: &AnalyzeReport, format: OutputFormat) -> Result<String, CliError> {
    match format {
        OutputFormat::Json => serde_json::to_string_pretty(report)
            .map(|s| s + "\n")
            .map_err(|e| CliError::numeric(e.to_string())),
        OutputFormat::Csv => {
            let mut out = String::from(
                "index,study,y,sigma,fe_weight,coincidence_weight,weight,mean,sd,lo,hi\n",
            );
            for s in &report.studies {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{}\n",
                    s.index,
                    csv_field(&s.label),
                    s.y,
                    s.sigma,
                    s.fe_weight,
                    s.coincidence_weight,
                    s.weight,
                    s.mean,
                    s.sd,
                    s.lo,
                    s.hi
                ));
            }
            let o = &report.overall;
            out.push_str(&format!(
                ",(overall),,,,,,{},{},{},{}\n",
                o.mean, o.sd, o.lo, o.hi
            ));
            Ok(out)
        }
        OutputFormat::Text => {
            let mut out = String::new();
            out.push_str("shrinkage analysis\n");
            out.push_str(&format!("  data:     {} (k = {})\n", report.input, report.k));
            out.push_str(&format!("  prior:    {}\n", report.prior));
            out.push_str(&format!(
                "  level:    {:.1}% ({} interval)\n\n",
                100.0 * report.level,
                report.interval
            ));
            let label_width = report
                .studies
                .iter()
                .map(|s| s.label.len())
                .max()
                .unwrap_or(5)
                .max(5);
            out.push_str(&format!(
                "  {:>2}  {:label_width$}  {:>8} {:>7}  {:>6} {:>7} {:>7}  {:>8} {:>7}  interval\n",
                "#", "study", "y", "sigma", "FE%", "coinc%", "weight%", "mean", "sd",
            ));
            for s in &report.studies {
                out.push_str(&format!(
                    "  {:>2}  {:label_width$}  {:>8.3} {:>7.3}  {:>6} {:>7} {:>7}  {:>8.3} {:>7.3}  [{:.3}, {:.3}]\n",
                    s.index,
                    s.label,
                    s.y,
                    s.sigma,
                    pct(s.fe_weight),
                    pct(s.coincidence_weight),
                    pct(s.weight),
                    s.mean,
                    s.sd,
                    s.lo,
                    s.hi,
                ));
            }
            let o = &report.overall;
            let weights = o
                .expected_weights
                .iter()
                .map(|w| format!("{}%", pct(*w)))
                .collect::<Vec<_>>()
                .join(" / ");
            out.push_str(&format!("\n  overall effect (weights {weights})\n"));
            out.push_str(&format!(
                "      mean {:>8.3}  sd {:>7.3}  interval [{:.3}, {:.3}]\n",
                o.mean, o.sd, o.lo, o.hi
            ));
            if let Some(oracle) = &report.oracle {
                out.push_str(&format!(
                    "\n  oracle cross-check ({}-point grid)\n",
                    oracle.grid_size
                ));
                for (s, ow) in report.studies.iter().zip(&oracle.self_weights) {
                    out.push_str(&format!(
                        "      {:label_width$}  weight {}%  oracle {}%  |diff| {:.2e}\n",
                        s.label,
                        pct(s.weight),
                        pct(*ow),
                        (s.weight - ow).abs()
                    ));
                }
                out.push_str(&format!(
                    "      max |difference| = {:.2e}\n",
                    oracle.max_abs_difference
                ));
            }
            Ok(out)
        }
    }
}

pub fn render_bounds(report: &BoundsReport, format: OutputFormat) -> Result<String, CliError> {
    match format {
        OutputFormat::Json => serde_json::to_string_pretty(report)
            .map(|s| s + "\n")
            .map_err(|e| CliError::numeric(e.to_string())),
        OutputFormat::Csv => {
            let mut out = String::from("index,study,sigma,fe_weight,coincidence_weight,actual_weight\n");
            for (j, s) in report.studies.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    j + 1,
                    csv_field(&s.label),
                    report.sigmas[j],
                    s.fe_weight,
                    s.coincidence_weight,
                    s.actual_weight.map(|w| w.to_string()).unwrap_or_default()
                ));
            }
            Ok(out)
        }
        OutputFormat::Text => {
            let mut out = String::new();
            out.push_str(&format!("weight bounds (prior {})\n", report.prior));
            let label_width = report
                .studies
                .iter()
                .map(|s| s.label.len())
                .max()
                .unwrap_or(5)
                .max(5);
            out.push_str(&format!(
                "  {:>2}  {:label_width$}  {:>7}  {:>6} {:>12} {:>8}\n",
                "#", "study", "sigma", "FE%", "coincidence%", "actual%"
            ));
            for (j, s) in report.studies.iter().enumerate() {
                out.push_str(&format!(
                    "  {:>2}  {:label_width$}  {:>7.3}  {:>6} {:>12} {:>8}\n",
                    j + 1,
                    s.label,
                    report.sigmas[j],
                    pct(s.fe_weight),
                    pct(s.coincidence_weight),
                    s.actual_weight.map(pct).unwrap_or_else(|| "-".to_string()),
                ));
            }
            Ok(out)
        }
    }
}

fn csv_field(text: &str) -> String {
    if text.contains(',') || text.contains('"') || text.contains('\n') {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

pub fn render_sweep(table: &shrinkbound::bounds::SweepTable) -> String {
    let mut out = format!("{},weight,mean,lo,hi\n", table.abscissa);
    for row in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.x, row.weight, row.mean, row.lo, row.hi
        ));
    }
    out
}
