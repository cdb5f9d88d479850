//! A-priori diagnostics for the weight of external evidence: fixed-effect
//! weights, coincidence weights, discrepancy and prior-scale sweeps, and
//! executable stochastic-ordering checks.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{self, Dataset, HeterogeneityPrior, ModelError};
use crate::posterior::{self, IntervalKind, PosteriorError, TauPosterior};
use crate::quad::QuadratureSettings;

/// Numerical tolerance for declaring an ordering verdict.
pub const ORDERING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BoundsError {
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("coincidence weights depend on the common data value (max diff {max_diff:e})")]
    CoincidenceInvariance { max_diff: f64 },
    #[error("analyses must share the same standard errors")]
    MismatchedSigmas,
    #[error("tau grid must be ascending and nonnegative")]
    InvalidTauGrid,
    #[error("scale grid must be positive, finite and ascending")]
    InvalidScaleGrid,
    #[error("sample size must be at least 1")]
    InvalidSampleSize,
}

/// FE, coincidence, and (optionally) actual posterior-expected self-weights,
/// side by side per study.
#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub prior: String,
    pub sigmas: Vec<f64>,
    pub studies: Vec<StudyBounds>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyBounds {
    pub label: String,
    pub fe_weight: f64,
    pub coincidence_weight: f64,
    pub actual_weight: Option<f64>,
}

/// One sweep over a discrepancy or prior-scale grid for a single target
/// study: expected self-weight, shrinkage mean, and interval per row.
#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    /// `"delta"` or `"scale"`.
    pub abscissa: &'static str,
    /// Zero-based index of the target study.
    pub target: usize,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub x: f64,
    pub weight: f64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Fixed-effect weights `sigma_j^{-2} / sum_i sigma_i^{-2}`: the τ = 0 limit
/// of every study's self-weight and its absolute lower bound.
pub fn fe_weights(sigmas: &[f64]) -> Result<Vec<f64>, BoundsError> {
    if sigmas.is_empty() {
        return Err(BoundsError::Model(ModelError::EmptyDataset));
    }
    for &sigma in sigmas {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(BoundsError::Model(ModelError::InvalidSigma {
                label: String::new(),
                sigma,
            }));
        }
    }
    let precisions: Vec<f64> = sigmas.iter().map(|s| 1.0 / (s * s)).collect();
    let total: f64 = precisions.iter().sum();
    Ok(precisions.iter().map(|p| p / total).collect())
}

fn coincidence_dataset(sigmas: &[f64], value: f64) -> Result<Dataset, BoundsError> {
    let ys = vec![value; sigmas.len()];
    Ok(Dataset::from_values(&ys, sigmas)?)
}

fn expected_self_weights(
    dataset: &Dataset,
    prior: &HeterogeneityPrior,
    settings: &QuadratureSettings,
) -> Result<Vec<f64>, BoundsError> {
    let tp = TauPosterior::fit(dataset, prior, settings)?;
    let k = dataset.len();
    let mut diag = Vec::with_capacity(k);
    for j in 0..k {
        diag.push(tp.expect(|tau| {
            model::shrink_matrix(dataset, tau).expect("tau valid").get(j, j)
        })?);
    }
    Ok(diag)
}

/// Minimum posterior-expected self-weights for the given prior: the analysis
/// run with all estimates coinciding. The result does not depend on the
/// common value used; this is asserted by running with two different values.
pub fn coincidence_weights(
    sigmas: &[f64],
    prior: &HeterogeneityPrior,
    settings: &QuadratureSettings,
) -> Result<Vec<f64>, BoundsError> {
    let at_zero = expected_self_weights(&coincidence_dataset(sigmas, 0.0)?, prior, settings)?;
    let at_one = expected_self_weights(&coincidence_dataset(sigmas, 1.0)?, prior, settings)?;
    let max_diff = at_zero
        .iter()
        .zip(&at_one)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if max_diff >= 1e-10 {
        return Err(BoundsError::CoincidenceInvariance { max_diff });
    }
    Ok(at_zero)
}

/// FE/coincidence/actual triple per study. Actual weights are computed from
/// the dataset's estimates when `with_actual` is set; otherwise the report is
/// the design-stage view based on the standard errors alone.
pub fn bounds_report(
    dataset: &Dataset,
    with_actual: bool,
    prior: &HeterogeneityPrior,
    settings: &QuadratureSettings,
) -> Result<BoundsReport, BoundsError> {
    let sigmas = dataset.sigmas();
    let fe = fe_weights(&sigmas)?;
    let coincidence = coincidence_weights(&sigmas, prior, settings)?;
    let actual = if with_actual {
        Some(expected_self_weights(dataset, prior, settings)?)
    } else {
        None
    };
    let studies = dataset
        .studies()
        .iter()
        .enumerate()
        .map(|(j, s)| StudyBounds {
            label: s.label().to_string(),
            fe_weight: fe[j],
            coincidence_weight: coincidence[j],
            actual_weight: actual.as_ref().map(|a| a[j]),
        })
        .collect();
    Ok(BoundsReport {
        prior: prior.describe(),
        sigmas,
        studies,
    })
}

fn sweep_row(
    dataset: &Dataset,
    prior: &HeterogeneityPrior,
    target: usize,
    x: f64,
    level: f64,
    kind: IntervalKind,
    settings: &QuadratureSettings,
) -> Result<SweepRow, BoundsError> {
    let tp = TauPosterior::fit(dataset, prior, settings)?;
    let weight = tp.expect(|tau| {
        model::shrink_matrix(dataset, tau)
            .expect("tau valid")
            .get(target, target)
    })?;
    let summary = posterior::marginal_theta(&tp, target, level, kind)?;
    Ok(SweepRow {
        x,
        weight,
        mean: summary.mean,
        lo: summary.lo,
        hi: summary.hi,
    })
}

/// Two-study sweep over the estimate discrepancy: each row analyzes
/// `y = (0, delta)` and reports the target study's expected self-weight and
/// shrinkage summary. Rows run in parallel and keep the grid order.
pub fn discrepancy_sweep(
    sigmas: &[f64],
    prior: &HeterogeneityPrior,
    target: usize,
    deltas: &[f64],
    level: f64,
    kind: IntervalKind,
    settings: &QuadratureSettings,
) -> Result<SweepTable, BoundsError> {
    if sigmas.len() != 2 {
        return Err(BoundsError::Model(ModelError::RequiresTwoStudies {
            count: sigmas.len(),
        }));
    }
    if target >= 2 {
        return Err(BoundsError::Model(ModelError::StudyIndexOutOfRange {
            index: target,
            count: 2,
        }));
    }
    if deltas.iter().any(|d| !d.is_finite()) {
        return Err(BoundsError::InvalidTauGrid);
    }
    let rows = deltas
        .par_iter()
        .map(|&delta| {
            let ds = Dataset::from_values(&[0.0, delta], sigmas)?;
            sweep_row(&ds, prior, target, delta, level, kind, settings)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepTable {
        abscissa: "delta",
        target,
        rows,
    })
}

/// Sweep over half-normal prior scales, either in coincidence mode
/// (`ys = None`, all estimates equal) or for given data.
pub fn prior_scale_sweep(
    sigmas: &[f64],
    ys: Option<&[f64]>,
    scales: &[f64],
    target: usize,
    level: f64,
    kind: IntervalKind,
    settings: &QuadratureSettings,
) -> Result<SweepTable, BoundsError> {
    if scales.is_empty()
        || scales.iter().any(|s| !(s.is_finite() && *s > 0.0))
        || scales.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(BoundsError::InvalidScaleGrid);
    }
    if target >= sigmas.len() {
        return Err(BoundsError::Model(ModelError::StudyIndexOutOfRange {
            index: target,
            count: sigmas.len(),
        }));
    }
    let dataset = match ys {
        Some(ys) => Dataset::from_values(ys, sigmas)?,
        None => coincidence_dataset(sigmas, 0.0)?,
    };
    let rows = scales
        .par_iter()
        .map(|&scale| {
            let prior = HeterogeneityPrior::half_normal(scale)?;
            sweep_row(&dataset, &prior, target, scale, level, kind, settings)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepTable {
        abscissa: "scale",
        target,
        rows,
    })
}

/// Outcome of a stochastic-ordering check between two fitted analyses.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OrderingReport {
    /// True iff all violations stay within [`ORDERING_TOL`].
    pub ordered: bool,
    /// Largest positive excess of the claimed-larger posterior's CDF.
    pub max_cdf_violation: f64,
    /// Largest decrease of the log likelihood-ratio along the grid.
    pub max_mlr_violation: f64,
}

/// Checks that analysis `b` has a stochastically larger heterogeneity
/// posterior than analysis `a`: the CDF of `b` must stay pointwise below the
/// CDF of `a`, and the log-ratio of the unnormalized posteriors must be
/// nondecreasing in τ (the monotone-likelihood-ratio condition).
pub fn verify_stochastic_ordering(
    a: &TauPosterior,
    b: &TauPosterior,
    tau_grid: &[f64],
) -> Result<OrderingReport, BoundsError> {
    if a.dataset().sigmas() != b.dataset().sigmas() {
        return Err(BoundsError::MismatchedSigmas);
    }
    if tau_grid.is_empty()
        || tau_grid[0] < 0.0
        || tau_grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(BoundsError::InvalidTauGrid);
    }

    let cdf_a = a.cdf_grid(tau_grid)?;
    let cdf_b = b.cdf_grid(tau_grid)?;
    let max_cdf_violation = cdf_b
        .iter()
        .zip(&cdf_a)
        .map(|(fb, fa)| fb - fa)
        .fold(0.0, f64::max);

    let mut max_mlr_violation = 0.0;
    let mut last_ratio = f64::NEG_INFINITY;
    for &tau in tau_grid {
        let (la, lb) = (a.log_unnorm(tau), b.log_unnorm(tau));
        if !(la.is_finite() && lb.is_finite()) {
            continue;
        }
        let ratio = lb - la;
        if last_ratio.is_finite() {
            max_mlr_violation = f64::max(max_mlr_violation, last_ratio - ratio);
        }
        last_ratio = ratio;
    }

    Ok(OrderingReport {
        ordered: max_cdf_violation <= ORDERING_TOL && max_mlr_violation <= ORDERING_TOL,
        max_cdf_violation,
        max_mlr_violation,
    })
}

/// Uniform τ grid covering both analyses' truncated supports.
pub fn ordering_tau_grid(a: &TauPosterior, b: &TauPosterior, points: usize) -> Vec<f64> {
    let hi = a.tau_max().max(b.tau_max());
    let n = points.max(2);
    (0..n).map(|i| hi * i as f64 / (n - 1) as f64).collect()
}

/// Standard error of a log-odds-ratio from a balanced two-arm binary trial of
/// size `n`: `4 / sqrt(n)`.
pub fn se_from_balanced_binary(n: u64) -> Result<f64, BoundsError> {
    if n < 1 {
        return Err(BoundsError::InvalidSampleSize);
    }
    Ok(4.0 / (n as f64).sqrt())
}
