//! Marginalization over the heterogeneity τ: the normalized τ posterior,
//! posterior-expected weights, and marginal means, standard deviations and
//! credible intervals of the overall and study-specific effects.

use serde::Serialize;
use thiserror::Error;

use crate::model::{self, Dataset, HeterogeneityPrior};
use crate::quad::{self, QuadError, QuadratureSettings};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PosteriorError {
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error("credible level must lie in (0, 1), got {level}")]
    InvalidLevel { level: f64 },
    #[error("failed to bracket the marginal quantile at p = {p}")]
    QuantileBracket { p: f64 },
    #[error("posterior normalization failed: {reason}")]
    Normalization { reason: String },
}

/// Credible-interval flavor: equal tail probabilities, or the minimal-width
/// interval at the requested coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalKind {
    Central,
    #[default]
    Shortest,
}

impl std::fmt::Display for IntervalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IntervalKind::Central => write!(f, "central"),
            IntervalKind::Shortest => write!(f, "shortest"),
        }
    }
}

/// Normalized marginal posterior of τ on a truncated support `[0, tau_max]`.
///
/// Immutable after fitting; all expectations are taken against the cached
/// normalization constant.
#[derive(Debug, Clone)]
pub struct TauPosterior {
    dataset: Dataset,
    prior: HeterogeneityPrior,
    settings: QuadratureSettings,
    tau_max: f64,
    log_scale: f64,
    scaled_norm: f64,
}

impl TauPosterior {
    /// Fits the posterior: truncates the support, locates the density peak
    /// for log-space scaling, and computes the normalization constant.
    pub fn fit(
        dataset: &Dataset,
        prior: &HeterogeneityPrior,
        settings: &QuadratureSettings,
    ) -> Result<Self, PosteriorError> {
        settings.validate()?;
        let upper = prior.support_upper();
        let mut tau_max = prior.quantile(1.0 - settings.tail_mass_cutoff).min(upper);
        if !(tau_max.is_finite() && tau_max > 0.0) {
            return Err(PosteriorError::Normalization {
                reason: format!("degenerate support upper bound {tau_max}"),
            });
        }

        let log_unnorm =
            |tau: f64| model::tau_log_posterior_unnorm(dataset, prior, tau).unwrap_or(f64::NAN);

        // peak scan: uniform plus geometric points so narrow modes near zero
        // are seen even when the support is huge (heavy-tailed priors)
        let scan_max = |hi: f64| {
            let mut peak = f64::NEG_INFINITY;
            for i in 0..=256 {
                let tau = hi * i as f64 / 256.0;
                peak = peak.max(log_unnorm(tau));
            }
            let mut tau = hi;
            for _ in 0..256 {
                tau *= 0.925;
                peak = peak.max(log_unnorm(tau));
            }
            peak
        };
        let mut log_scale = scan_max(tau_max);

        let floor = (1e-12f64).ln();
        for _ in 0..64 {
            if tau_max >= upper || log_unnorm(tau_max) - log_scale <= floor {
                break;
            }
            tau_max = (tau_max * 2.0).min(upper);
            log_scale = log_scale.max(scan_max(tau_max));
        }

        if !log_scale.is_finite() {
            return Err(PosteriorError::Normalization {
                reason: "posterior density vanishes on the whole support".to_string(),
            });
        }

        let est = quad::integrate(
            |tau| (log_unnorm(tau) - log_scale).exp(),
            0.0,
            tau_max,
            settings,
        )?;
        if !(est.value.is_finite() && est.value > 0.0) {
            return Err(PosteriorError::Normalization {
                reason: format!("normalization integral evaluated to {}", est.value),
            });
        }

        Ok(Self {
            dataset: dataset.clone(),
            prior: prior.clone(),
            settings: *settings,
            tau_max,
            log_scale,
            scaled_norm: est.value,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn prior(&self) -> &HeterogeneityPrior {
        &self.prior
    }

    pub fn settings(&self) -> &QuadratureSettings {
        &self.settings
    }

    /// Upper end of the truncated τ support.
    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    /// Log of the normalization constant of the unnormalized density.
    pub fn log_norm_const(&self) -> f64 {
        self.log_scale + self.scaled_norm.ln()
    }

    /// Unnormalized log density (`-inf` outside the prior support or below 0).
    pub fn log_unnorm(&self, tau: f64) -> f64 {
        if tau < 0.0 {
            return f64::NEG_INFINITY;
        }
        model::tau_log_posterior_unnorm(&self.dataset, &self.prior, tau)
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn log_density(&self, tau: f64) -> f64 {
        self.log_unnorm(tau) - self.log_norm_const()
    }

    pub fn density(&self, tau: f64) -> f64 {
        self.log_density(tau).exp()
    }

    /// Posterior expectation of `h(τ)`.
    pub fn expect<H: Fn(f64) -> f64>(&self, h: H) -> Result<f64, PosteriorError> {
        let est = quad::integrate(
            |tau| h(tau) * (self.log_unnorm(tau) - self.log_scale).exp(),
            0.0,
            self.tau_max,
            &self.settings,
        )?;
        Ok(est.value / self.scaled_norm)
    }

    /// Posterior CDF of τ.
    pub fn cdf(&self, tau: f64) -> Result<f64, PosteriorError> {
        if tau <= 0.0 {
            return Ok(0.0);
        }
        let hi = tau.min(self.tau_max);
        let est = quad::integrate(
            |t| (self.log_unnorm(t) - self.log_scale).exp(),
            0.0,
            hi,
            &self.settings,
        )?;
        Ok(est.value / self.scaled_norm)
    }

    /// Posterior CDF on an ascending τ grid, accumulated segment by segment.
    pub fn cdf_grid(&self, taus: &[f64]) -> Result<Vec<f64>, PosteriorError> {
        let mut out = Vec::with_capacity(taus.len());
        let mut acc = 0.0;
        let mut prev = 0.0;
        for &tau in taus {
            debug_assert!(tau >= prev, "grid must be ascending");
            if tau > prev {
                let est = quad::integrate(
                    |t| (self.log_unnorm(t) - self.log_scale).exp(),
                    prev,
                    tau,
                    &self.settings,
                )?;
                acc += est.value;
                prev = tau;
            }
            out.push(acc / self.scaled_norm);
        }
        Ok(out)
    }
}

/// Alias for [`TauPosterior::fit`].
pub fn fit_tau_posterior(
    dataset: &Dataset,
    prior: &HeterogeneityPrior,
    settings: &QuadratureSettings,
) -> Result<TauPosterior, PosteriorError> {
    TauPosterior::fit(dataset, prior, settings)
}

/// Posterior-expected inverse-variance and shrinkage weights.
#[derive(Debug, Clone)]
pub struct ExpectedWeights {
    /// `E[w_i | data]` for the overall effect.
    pub iv: Vec<f64>,
    /// `E[c_ij | data]`, columns indexed by the target study.
    pub shrink: model::ShrinkageWeights,
}

/// Expected weights by one-dimensional integration against the τ posterior.
pub fn expected_weights(tp: &TauPosterior) -> Result<ExpectedWeights, PosteriorError> {
    let ds = tp.dataset();
    let k = ds.len();
    let mut iv = Vec::with_capacity(k);
    for i in 0..k {
        iv.push(tp.expect(|tau| model::iv_weights(ds, tau).expect("tau valid")[i])?);
    }
    let mut cols = vec![0.0; k * k];
    for j in 0..k {
        for i in 0..k {
            cols[j * k + i] = tp.expect(|tau| {
                model::shrink_matrix(ds, tau).expect("tau valid").get(i, j)
            })?;
        }
    }
    Ok(ExpectedWeights {
        iv,
        shrink: model::ShrinkageWeights::from_columns(k, cols),
    })
}

enum Target {
    Overall,
    Study(usize),
}

/// Marginal posterior of the overall effect or of one study effect, as the
/// τ-mixture of its conditional normals.
struct Marginal<'a> {
    tp: &'a TauPosterior,
    target: Target,
}

impl<'a> Marginal<'a> {
    fn new(tp: &'a TauPosterior, target: Target) -> Result<Self, PosteriorError> {
        if let Target::Study(j) = target {
            tp.dataset().study(j)?;
        }
        Ok(Self { tp, target })
    }

    fn moments_at(&self, tau: f64) -> (f64, f64) {
        match self.target {
            Target::Overall => model::conditional_mu(self.tp.dataset(), tau),
            Target::Study(j) => model::conditional_theta(self.tp.dataset(), j, tau),
        }
        .expect("tau valid")
    }

    fn mean_sd(&self) -> Result<(f64, f64), PosteriorError> {
        let mean = self.tp.expect(|tau| self.moments_at(tau).0)?;
        let mean_sq = self.tp.expect(|tau| {
            let m = self.moments_at(tau).0;
            m * m
        })?;
        let cond_var = self.tp.expect(|tau| self.moments_at(tau).1)?;
        // law of total variance; clamp tiny negative drift from quadrature
        let var = (cond_var + mean_sq - mean * mean).max(0.0);
        Ok((mean, var.sqrt()))
    }

    fn cdf(&self, x: f64) -> Result<f64, PosteriorError> {
        self.tp.expect(|tau| {
            let (m, v) = self.moments_at(tau);
            quad::normal_cdf((x - m) / v.sqrt())
        })
    }

    fn quantile(&self, p: f64, mean: f64, sd: f64) -> Result<f64, PosteriorError> {
        let scale = sd.max(1e-12 * mean.abs()).max(1e-300);
        let mut half_width = 8.0 * scale;
        let (mut lo, mut hi) = (mean - half_width, mean + half_width);
        for _ in 0..64 {
            let (flo, fhi) = (self.cdf(lo)? - p, self.cdf(hi)? - p);
            if flo <= 0.0 && fhi >= 0.0 {
                let tol = 1e-9 * scale;
                let root = quad::find_root(
                    |x| self.cdf(x).map(|c| c - p).unwrap_or(f64::NAN),
                    lo,
                    hi,
                    tol,
                )?;
                return Ok(root);
            }
            half_width *= 2.0;
            lo = mean - half_width;
            hi = mean + half_width;
        }
        Err(PosteriorError::QuantileBracket { p })
    }

    fn interval(
        &self,
        level: f64,
        kind: IntervalKind,
        mean: f64,
        sd: f64,
    ) -> Result<(f64, f64), PosteriorError> {
        match kind {
            IntervalKind::Central => {
                let tail = 0.5 * (1.0 - level);
                Ok((
                    self.quantile(tail, mean, sd)?,
                    self.quantile(1.0 - tail, mean, sd)?,
                ))
            }
            IntervalKind::Shortest => {
                // minimize hi(lo) - lo with hi(lo) = quantile(cdf(lo) + level)
                let eps = 1e-6;
                let lo_min = self.quantile(eps, mean, sd)?;
                let lo_max = self.quantile(1.0 - level - eps, mean, sd)?;
                let width = |lo: f64| -> Result<f64, PosteriorError> {
                    let p_lo = self.cdf(lo)?;
                    let hi = self.quantile((p_lo + level).min(1.0 - eps / 2.0), mean, sd)?;
                    Ok(hi - lo)
                };
                let golden = 0.5 * (3.0 - 5.0f64.sqrt());
                let (mut a, mut b) = (lo_min, lo_max);
                let mut x1 = a + golden * (b - a);
                let mut x2 = b - golden * (b - a);
                let mut f1 = width(x1)?;
                let mut f2 = width(x2)?;
                let tol = 1e-7 * sd.max(1e-12);
                while b - a > tol {
                    if f1 <= f2 {
                        b = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = a + golden * (b - a);
                        f1 = width(x1)?;
                    } else {
                        a = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = b - golden * (b - a);
                        f2 = width(x2)?;
                    }
                }
                let lo = if f1 <= f2 { x1 } else { x2 };
                let w = if f1 <= f2 { f1 } else { f2 };
                Ok((lo, lo + w))
            }
        }
    }

    fn summary(&self, level: f64, kind: IntervalKind) -> Result<MarginalSummary, PosteriorError> {
        if !(level > 0.0 && level < 1.0) {
            return Err(PosteriorError::InvalidLevel { level });
        }
        let (mean, sd) = self.mean_sd()?;
        let (lo, hi) = self.interval(level, kind, mean, sd)?;
        Ok(MarginalSummary {
            mean,
            sd,
            lo,
            hi,
            level,
            kind,
        })
    }
}

/// Marginal mean, posterior SD, and credible interval of one effect.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MarginalSummary {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub kind: IntervalKind,
}

/// Marginal posterior summary of study `j`'s effect.
pub fn marginal_theta(
    tp: &TauPosterior,
    j: usize,
    level: f64,
    kind: IntervalKind,
) -> Result<MarginalSummary, PosteriorError> {
    Marginal::new(tp, Target::Study(j))?.summary(level, kind)
}

/// Marginal posterior summary of the overall effect.
pub fn marginal_mu(
    tp: &TauPosterior,
    level: f64,
    kind: IntervalKind,
) -> Result<MarginalSummary, PosteriorError> {
    Marginal::new(tp, Target::Overall)?.summary(level, kind)
}

/// Marginal CDF of study `j`'s effect at `x`.
pub fn marginal_theta_cdf(tp: &TauPosterior, j: usize, x: f64) -> Result<f64, PosteriorError> {
    Marginal::new(tp, Target::Study(j))?.cdf(x)
}

/// Marginal quantile of study `j`'s effect.
pub fn marginal_theta_quantile(
    tp: &TauPosterior,
    j: usize,
    p: f64,
) -> Result<f64, PosteriorError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(PosteriorError::Quad(QuadError::InvalidProbability { p }));
    }
    let m = Marginal::new(tp, Target::Study(j))?;
    let (mean, sd) = m.mean_sd()?;
    m.quantile(p, mean, sd)
}

/// Marginal CDF of the overall effect at `x`.
pub fn marginal_mu_cdf(tp: &TauPosterior, x: f64) -> Result<f64, PosteriorError> {
    Marginal::new(tp, Target::Overall)?.cdf(x)
}

/// Marginal quantile of the overall effect.
pub fn marginal_mu_quantile(tp: &TauPosterior, p: f64) -> Result<f64, PosteriorError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(PosteriorError::Quad(QuadError::InvalidProbability { p }));
    }
    let m = Marginal::new(tp, Target::Overall)?;
    let (mean, sd) = m.mean_sd()?;
    m.quantile(p, mean, sd)
}

/// One study's row of a shrinkage analysis.
#[derive(Debug, Clone, Serialize)]
pub struct StudySummary {
    pub label: String,
    pub y: f64,
    pub sigma: f64,
    /// `E[c_ij | data]` for i = 1..k (this study is j).
    pub expected_weights: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

/// The overall-effect row of a shrinkage analysis.
#[derive(Debug, Clone, Serialize)]
pub struct OverallSummary {
    /// `E[w_i | data]` for i = 1..k.
    pub expected_weights: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Complete per-study and overall shrinkage analysis.
#[derive(Debug, Clone, Serialize)]
pub struct ShrinkageResult {
    pub level: f64,
    pub kind: IntervalKind,
    pub studies: Vec<StudySummary>,
    pub overall: OverallSummary,
}

/// Runs the full marginal analysis: expected weights plus marginal summaries
/// for every study effect and the overall effect.
pub fn shrinkage_result(
    tp: &TauPosterior,
    level: f64,
    kind: IntervalKind,
) -> Result<ShrinkageResult, PosteriorError> {
    let weights = expected_weights(tp)?;
    let ds = tp.dataset();
    let mut studies = Vec::with_capacity(ds.len());
    for (j, s) in ds.studies().iter().enumerate() {
        let summary = marginal_theta(tp, j, level, kind)?;
        studies.push(StudySummary {
            label: s.label().to_string(),
            y: s.y(),
            sigma: s.sigma(),
            expected_weights: weights.shrink.column(j).to_vec(),
            mean: summary.mean,
            sd: summary.sd,
            lo: summary.lo,
            hi: summary.hi,
        });
    }
    let mu = marginal_mu(tp, level, kind)?;
    Ok(ShrinkageResult {
        level,
        kind,
        studies,
        overall: OverallSummary {
            expected_weights: weights.iv,
            mean: mu.mean,
            sd: mu.sd,
            lo: mu.lo,
            hi: mu.hi,
        },
    })
}
