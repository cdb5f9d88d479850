//! Command-line front end: `analyze`, `bounds`, `sweep`, and `forest`
//! subcommands over the shrinkage-estimation library.

pub mod error;
pub mod forest;
pub mod input;
pub mod report;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use shrinkbound::bounds;
use shrinkbound::model::{Dataset, HeterogeneityPrior};
use shrinkbound::oracle;
use shrinkbound::posterior::{self, IntervalKind, TauPosterior};
use shrinkbound::quad::QuadratureSettings;

use error::CliError;
use report::OutputFormat;

pub const QUAD_TOL_ENV: &str = "SHRINKBOUND_QUAD_TOL";

#[derive(Debug, Parser)]
#[command(
    name = "shrinkbound",
    about = "Bayesian NNHM shrinkage estimation with a-priori weight bounds",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full shrinkage analysis of a dataset: expected weights, estimates,
    /// credible intervals, and the FE/coincidence/actual bounds triple.
    Analyze(AnalyzeArgs),
    /// FE and coincidence weight bounds (plus actual weights when data are
    /// given).
    Bounds(BoundsArgs),
    /// Weight/estimate tables over a discrepancy grid or a half-normal
    /// prior-scale grid, as CSV.
    Sweep(SweepArgs),
    /// Deterministic SVG forest plot of the studies and a shrinkage estimate.
    Forest(ForestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IntervalArg {
    Central,
    Shortest,
}

impl From<IntervalArg> for IntervalKind {
    fn from(value: IntervalArg) -> Self {
        match value {
            IntervalArg::Central => IntervalKind::Central,
            IntervalArg::Shortest => IntervalKind::Shortest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Text,
    Json,
    Csv,
}

impl From<FormatArg> for OutputFormat {
    fn from(value: FormatArg) -> Self {
        match value {
            FormatArg::Text => OutputFormat::Text,
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Csv => OutputFormat::Csv,
        }
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Input CSV (header study,y,sigma) or JSON array with the same keys.
    #[arg(long)]
    pub data: PathBuf,
    /// Heterogeneity prior, e.g. half-normal:0.5, uniform:2, table:prior.csv.
    #[arg(long)]
    pub prior: String,
    /// Credible level.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Credible-interval kind.
    #[arg(long, value_enum, default_value_t = IntervalArg::Shortest)]
    pub interval: IntervalArg,
    /// Restrict the per-study rows to this study label.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    pub format: FormatArg,
    /// Cross-check expected self-weights against the dense-grid oracle.
    #[arg(long)]
    pub oracle: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Dataset file; actual weights are reported as well.
    #[arg(long, conflicts_with = "sigmas")]
    pub data: Option<PathBuf>,
    /// Comma-separated standard errors for a design-stage report.
    #[arg(long)]
    pub sigmas: Option<String>,
    #[arg(long)]
    pub prior: String,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Dataset file supplying the standard errors (and, for --scales, the
    /// estimates).
    #[arg(long, conflicts_with = "sigmas")]
    pub data: Option<PathBuf>,
    /// Comma-separated standard errors (coincidence mode for --scales).
    #[arg(long)]
    pub sigmas: Option<String>,
    /// Discrepancy grid lo:hi:step; rows analyze y = (0, delta). This is the
    /// default sweep when --scales is absent.
    #[arg(long, allow_hyphen_values = true, default_value = "-3:3:0.05")]
    pub delta: Option<String>,
    /// Ascending half-normal scale list, e.g. 0.25,0.5,1.
    #[arg(long, conflicts_with = "delta")]
    pub scales: Option<String>,
    /// Heterogeneity prior (required with --delta; fixed to half-normal for
    /// --scales).
    #[arg(long)]
    pub prior: Option<String>,
    /// Target study label (default: the first study).
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, value_enum, default_value_t = IntervalArg::Shortest)]
    pub interval: IntervalArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ForestArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub prior: String,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, value_enum, default_value_t = IntervalArg::Shortest)]
    pub interval: IntervalArg,
    /// Study receiving the shrinkage row (default: the last study); pass
    /// `none` for a studies-only plot.
    #[arg(long)]
    pub target: Option<String>,
    /// Output SVG path.
    #[arg(long)]
    pub out: PathBuf,
}

/// Quadrature settings, honoring the `SHRINKBOUND_QUAD_TOL` override.
pub fn settings_from_env() -> Result<QuadratureSettings, CliError> {
    let mut settings = QuadratureSettings::default();
    if let Ok(text) = std::env::var(QUAD_TOL_ENV) {
        let value: f64 = text.parse().map_err(|_| {
            CliError::usage(format!("{QUAD_TOL_ENV}=`{text}` is not a number"))
        })?;
        if !(value > 0.0 && value < 1.0) {
            return Err(CliError::usage(format!(
                "{QUAD_TOL_ENV} must lie in (0, 1), got {value}"
            )));
        }
        settings.rel_tol = value;
    }
    Ok(settings)
}

fn check_level(level: f64) -> Result<(), CliError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "--level must lie in (0, 1), got {level}"
        )))
    }
}

fn find_target(dataset: &Dataset, label: &str) -> Result<usize, CliError> {
    dataset
        .studies()
        .iter()
        .position(|s| s.label() == label)
        .ok_or_else(|| {
            CliError::usage(format!(
                "--target `{label}` does not match any study label ({})",
                dataset
                    .studies()
                    .iter()
                    .map(|s| s.label())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })
}

fn write_output(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::data(e.to_string()))
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Forest(args) => cmd_forest(args),
    }
}

pub fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    check_level(args.level)?;
    let settings = settings_from_env()?;
    let dataset = input::parse_dataset(&args.data)?;
    let prior = input::parse_prior(&args.prior)?;
    let target = args
        .target
        .as_deref()
        .map(|label| find_target(&dataset, label))
        .transpose()?;

    let tp = TauPosterior::fit(&dataset, &prior, &settings)?;
    let result = posterior::shrinkage_result(&tp, args.level, args.interval.into())?;
    let bounds_report = bounds::bounds_report(&dataset, true, &prior, &settings)?;
    let mut report = report::assemble_analyze_report(
        &args.data.display().to_string(),
        &result,
        &bounds_report,
        target,
    );

    if args.oracle {
        const ORACLE_GRID: usize = 100_000;
        let mut self_weights = Vec::new();
        let mut max_abs_difference = 0.0f64;
        for s in &report.studies {
            let j = s.index - 1;
            let est = oracle::grid_expected_weight(&dataset, &prior, j, j, ORACLE_GRID);
            max_abs_difference = max_abs_difference.max((est.value - s.weight).abs());
            self_weights.push(est.value);
        }
        report.oracle = Some(report::OracleReport {
            grid_size: ORACLE_GRID,
            self_weights,
            max_abs_difference,
        });
    }

    let text = report::render_analyze(&report, args.format.into())?;
    write_output(&text, args.out.as_deref())
}

pub fn cmd_bounds(args: BoundsArgs) -> Result<(), CliError> {
    let settings = settings_from_env()?;
    let prior = input::parse_prior(&args.prior)?;
    let (dataset, with_actual) = match (&args.data, &args.sigmas) {
        (Some(path), None) => (input::parse_dataset(path)?, true),
        (None, Some(sigmas)) => {
            let sigmas = input::parse_positive_list(sigmas, "--sigmas")?;
            let ys = vec![0.0; sigmas.len()];
            (
                Dataset::from_values(&ys, &sigmas)
                    .map_err(|e| CliError::usage(e.to_string()))?,
                false,
            )
        }
        _ => {
            return Err(CliError::usage(
                "bounds needs exactly one of --data or --sigmas",
            ))
        }
    };
    let report = bounds::bounds_report(&dataset, with_actual, &prior, &settings)?;
    let text = report::render_bounds(&report, args.format.into())?;
    write_output(&text, args.out.as_deref())
}

pub fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    check_level(args.level)?;
    let settings = settings_from_env()?;
    let (sigmas, ys, dataset) = match (&args.data, &args.sigmas) {
        (Some(path), None) => {
            let ds = input::parse_dataset(path)?;
            (ds.sigmas(), Some(ds.ys()), Some(ds))
        }
        (None, Some(list)) => (input::parse_positive_list(list, "--sigmas")?, None, None),
        _ => {
            return Err(CliError::usage(
                "sweep needs exactly one of --data or --sigmas",
            ))
        }
    };

    let target = match &args.target {
        None => 0,
        Some(label) => match &dataset {
            Some(ds) => find_target(ds, label)?,
            None => {
                // sigma-only studies are labeled by their one-based index
                let index: usize = label.parse().map_err(|_| {
                    CliError::usage(format!(
                        "--target `{label}` must be a 1-based index when using --sigmas"
                    ))
                })?;
                if index == 0 || index > sigmas.len() {
                    return Err(CliError::usage(format!(
                        "--target {index} out of range for {} studies",
                        sigmas.len()
                    )));
                }
                index - 1
            }
        },
    };

    let table = if let Some(list) = &args.scales {
        if args.prior.is_some() {
            return Err(CliError::usage(
                "--scales sweeps the half-normal scale itself; omit --prior",
            ));
        }
        let scales = input::parse_positive_list(list, "--scales")?;
        bounds::prior_scale_sweep(
            &sigmas,
            ys.as_deref(),
            &scales,
            target,
            args.level,
            args.interval.into(),
            &settings,
        )?
    } else {
        let prior_spec = args
            .prior
            .as_deref()
            .ok_or_else(|| CliError::usage("--delta sweeps need --prior"))?;
        let prior = input::parse_prior(prior_spec)?;
        let grid = input::parse_delta_grid(args.delta.as_deref().expect("has a default"))?;
        bounds::discrepancy_sweep(
            &sigmas,
            &prior,
            target,
            &grid,
            args.level,
            args.interval.into(),
            &settings,
        )?
    };

    write_output(&report::render_sweep(&table), args.out.as_deref())
}

pub fn cmd_forest(args: ForestArgs) -> Result<(), CliError> {
    check_level(args.level)?;
    let settings = settings_from_env()?;
    let dataset = input::parse_dataset(&args.data)?;
    let prior: HeterogeneityPrior = input::parse_prior(&args.prior)?;

    let target = match args.target.as_deref() {
        Some("none") => None,
        Some(label) => Some(find_target(&dataset, label)?),
        None => Some(dataset.len() - 1),
    };

    let mut shrinkage = Vec::new();
    if let Some(j) = target {
        let tp = TauPosterior::fit(&dataset, &prior, &settings)?;
        let summary = posterior::marginal_theta(&tp, j, args.level, args.interval.into())?;
        shrinkage.push((
            dataset.study(j).expect("validated").label().to_string(),
            summary,
        ));
    }

    let layout = forest::layout(&dataset, &shrinkage, args.level);
    let svg = forest::render(&layout);
    write_output(&svg, Some(&args.out))
}
