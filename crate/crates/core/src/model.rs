//! Closed-form kernels of the normal-normal hierarchical model conditional on
//! the heterogeneity τ: inverse-variance weights, conditional means and
//! variances, shrinkage weights, and the unnormalized heterogeneity
//! log-posterior under a uniform effect prior.

use serde::Serialize;
use thiserror::Error;

use crate::quad;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("study `{label}`: standard error must be positive and finite, got {sigma}")]
    InvalidSigma { label: String, sigma: f64 },
    #[error("study `{label}`: estimate must be finite, got {y}")]
    InvalidEstimate { label: String, y: f64 },
    #[error("dataset must contain at least one study")]
    EmptyDataset,
    #[error("duplicate study label `{label}`")]
    DuplicateLabel { label: String },
    #[error("heterogeneity tau must be nonnegative and finite, got {tau}")]
    InvalidTau { tau: f64 },
    #[error("study index {index} out of range for {count} studies")]
    StudyIndexOutOfRange { index: usize, count: usize },
    #[error("operation requires exactly two studies, got {count}")]
    RequiresTwoStudies { count: usize },
    #[error("prior parameter `{name}` must be positive and finite, got {value}")]
    InvalidPriorParameter { name: &'static str, value: f64 },
    #[error("tabulated prior: {reason}")]
    InvalidTable { reason: String },
}

/// One study summary: an effect estimate on a normal-approximation scale
/// (log-HR, log-RR, log-OR, ...) and its standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Study {
    label: String,
    y: f64,
    sigma: f64,
}

impl Study {
    pub fn new(label: impl Into<String>, y: f64, sigma: f64) -> Result<Self, ModelError> {
        let label = label.into();
        if !y.is_finite() {
            return Err(ModelError::InvalidEstimate { label, y });
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(ModelError::InvalidSigma { label, sigma });
        }
        Ok(Self { label, y, sigma })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Ordered collection of studies entering one analysis.
///
/// A single study is accepted: every formula below degenerates exactly to the
/// plain `Normal(y, sigma^2)` summary in that case, which is how lone-study
/// inputs are reported. Indices are zero-based in this API and one-based in
/// rendered reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    studies: Vec<Study>,
}

impl Dataset {
    pub fn new(studies: Vec<Study>) -> Result<Self, ModelError> {
        if studies.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        for (i, s) in studies.iter().enumerate() {
            if studies[..i].iter().any(|t| t.label == s.label) {
                return Err(ModelError::DuplicateLabel {
                    label: s.label.clone(),
                });
            }
        }
        Ok(Self { studies })
    }

    /// Convenience constructor with `1`-based index labels.
    pub fn from_values(ys: &[f64], sigmas: &[f64]) -> Result<Self, ModelError> {
        assert_eq!(ys.len(), sigmas.len(), "ys and sigmas must align");
        let studies = ys
            .iter()
            .zip(sigmas)
            .enumerate()
            .map(|(i, (&y, &sigma))| Study::new((i + 1).to_string(), y, sigma))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(studies)
    }

    pub fn len(&self) -> usize {
        self.studies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }

    pub fn studies(&self) -> &[Study] {
        &self.studies
    }

    pub fn study(&self, j: usize) -> Result<&Study, ModelError> {
        self.studies.get(j).ok_or(ModelError::StudyIndexOutOfRange {
            index: j,
            count: self.studies.len(),
        })
    }

    pub fn ys(&self) -> Vec<f64> {
        self.studies.iter().map(Study::y).collect()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.studies.iter().map(Study::sigma).collect()
    }

    pub fn max_sigma(&self) -> f64 {
        self.studies
            .iter()
            .map(Study::sigma)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_tau(tau: f64) -> Result<(), ModelError> {
    if tau.is_finite() && tau >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidTau { tau })
    }
}

/// Prior distribution for the between-study standard deviation τ.
#[derive(Debug, Clone, PartialEq)]
pub enum HeterogeneityPrior {
    HalfNormal { scale: f64 },
    HalfCauchy { scale: f64 },
    Uniform { upper: f64 },
    Tabulated(TabulatedPrior),
}

fn check_param(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidPriorParameter { name, value })
    }
}

impl HeterogeneityPrior {
    pub fn half_normal(scale: f64) -> Result<Self, ModelError> {
        check_param("scale", scale)?;
        Ok(Self::HalfNormal { scale })
    }

    pub fn half_cauchy(scale: f64) -> Result<Self, ModelError> {
        check_param("scale", scale)?;
        Ok(Self::HalfCauchy { scale })
    }

    pub fn uniform(upper: f64) -> Result<Self, ModelError> {
        check_param("upper", upper)?;
        Ok(Self::Uniform { upper })
    }

    pub fn tabulated(taus: Vec<f64>, densities: Vec<f64>) -> Result<Self, ModelError> {
        Ok(Self::Tabulated(TabulatedPrior::new(taus, densities)?))
    }

    pub fn density(&self, tau: f64) -> f64 {
        if tau < 0.0 {
            return 0.0;
        }
        match self {
            Self::HalfNormal { scale } => {
                (2.0 / std::f64::consts::PI).sqrt() / scale
                    * (-tau * tau / (2.0 * scale * scale)).exp()
            }
            Self::HalfCauchy { scale } => {
                let r = tau / scale;
                2.0 / (std::f64::consts::PI * scale * (1.0 + r * r))
            }
            Self::Uniform { upper } => {
                if tau <= *upper {
                    1.0 / upper
                } else {
                    0.0
                }
            }
            Self::Tabulated(t) => t.density(tau),
        }
    }

    pub fn log_density(&self, tau: f64) -> f64 {
        self.density(tau).ln()
    }

    pub fn cdf(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        match self {
            Self::HalfNormal { scale } => {
                quad::erf(tau / (scale * std::f64::consts::SQRT_2)).min(1.0)
            }
            Self::HalfCauchy { scale } => {
                (2.0 / std::f64::consts::PI) * (tau / scale).atan()
            }
            Self::Uniform { upper } => (tau / upper).min(1.0),
            Self::Tabulated(t) => t.cdf(tau),
        }
    }

    /// Inverse CDF; `p = 0` maps to the support's lower edge and `p = 1` to
    /// its upper edge (possibly infinite).
    pub fn quantile(&self, p: f64) -> f64 {
        assert!((0.0..=1.0).contains(&p), "quantile needs p in [0, 1]");
        match self {
            Self::HalfNormal { scale } => {
                if p == 0.0 {
                    0.0
                } else if p == 1.0 {
                    f64::INFINITY
                } else {
                    scale * quad::normal_quantile((1.0 + p) / 2.0).expect("p in (0,1)")
                }
            }
            Self::HalfCauchy { scale } => {
                if p == 0.0 {
                    0.0
                } else if p == 1.0 {
                    f64::INFINITY
                } else {
                    scale * (std::f64::consts::FRAC_PI_2 * p).tan()
                }
            }
            Self::Uniform { upper } => p * upper,
            Self::Tabulated(t) => t.quantile(p),
        }
    }

    /// Upper end of the support (`+inf` for the unbounded families).
    pub fn support_upper(&self) -> f64 {
        match self {
            Self::HalfNormal { .. } | Self::HalfCauchy { .. } => f64::INFINITY,
            Self::Uniform { upper } => *upper,
            Self::Tabulated(t) => t.upper(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::HalfNormal { scale } => format!("half-normal({scale})"),
            Self::HalfCauchy { scale } => format!("half-cauchy({scale})"),
            Self::Uniform { upper } => format!("uniform(0, {upper})"),
            Self::Tabulated(t) => format!("tabulated({} points)", t.taus.len()),
        }
    }
}

/// Prior given as density values on a τ grid; renormalized by the trapezoid
/// rule at construction, CDF linearly interpolated between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPrior {
    taus: Vec<f64>,
    densities: Vec<f64>,
    cdf: Vec<f64>,
}

impl TabulatedPrior {
    pub fn new(taus: Vec<f64>, densities: Vec<f64>) -> Result<Self, ModelError> {
        let fail = |reason: &str| ModelError::InvalidTable {
            reason: reason.to_string(),
        };
        if taus.len() != densities.len() {
            return Err(fail("grid and density lengths differ"));
        }
        if taus.len() < 2 {
            return Err(fail("need at least two grid points"));
        }
        if taus[0] < 0.0 || taus.iter().any(|t| !t.is_finite()) {
            return Err(fail("grid values must be finite and nonnegative"));
        }
        if taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(fail("grid must be strictly ascending"));
        }
        if densities.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(fail("density values must be finite and nonnegative"));
        }

        let mut cdf = vec![0.0; taus.len()];
        for i in 1..taus.len() {
            cdf[i] = cdf[i - 1]
                + 0.5 * (densities[i] + densities[i - 1]) * (taus[i] - taus[i - 1]);
        }
        let total = cdf[taus.len() - 1];
        if !(total.is_finite() && total > 0.0) {
            return Err(fail("density must have positive total mass"));
        }
        let densities = densities.iter().map(|d| d / total).collect();
        for c in &mut cdf {
            *c /= total;
        }
        *cdf.last_mut().unwrap() = 1.0;
        Ok(Self {
            taus,
            densities,
            cdf,
        })
    }

    fn upper(&self) -> f64 {
        *self.taus.last().unwrap()
    }

    fn density(&self, tau: f64) -> f64 {
        let n = self.taus.len();
        if tau < self.taus[0] || tau > self.taus[n - 1] {
            return 0.0;
        }
        let i = match self.taus.binary_search_by(|t| t.total_cmp(&tau)) {
            Ok(i) => return self.densities[i],
            Err(i) => i,
        };
        let (t0, t1) = (self.taus[i - 1], self.taus[i]);
        let (d0, d1) = (self.densities[i - 1], self.densities[i]);
        d0 + (d1 - d0) * (tau - t0) / (t1 - t0)
    }

    fn cdf(&self, tau: f64) -> f64 {
        let n = self.taus.len();
        if tau <= self.taus[0] {
            return 0.0;
        }
        if tau >= self.taus[n - 1] {
            return 1.0;
        }
        let i = match self.taus.binary_search_by(|t| t.total_cmp(&tau)) {
            Ok(i) => return self.cdf[i],
            Err(i) => i,
        };
        let (t0, t1) = (self.taus[i - 1], self.taus[i]);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        c0 + (c1 - c0) * (tau - t0) / (t1 - t0)
    }

    fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return self.taus[0];
        }
        if p >= 1.0 {
            return self.upper();
        }
        let i = self.cdf.partition_point(|c| *c < p);
        // i >= 1 because cdf[0] = 0 < p
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let (t0, t1) = (self.taus[i - 1], self.taus[i]);
        if c1 > c0 {
            t0 + (t1 - t0) * (p - c0) / (c1 - c0)
        } else {
            t0
        }
    }
}

/// Per-study weights of a shrinkage estimate: `get(i, j)` is the weight of
/// study `i`'s estimate in study `j`'s shrinkage estimate. Columns sum to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShrinkageWeights {
    k: usize,
    // column-major: cols[j * k + i] = c_ij
    cols: Vec<f64>,
}

impl ShrinkageWeights {
    pub(crate) fn from_columns(k: usize, cols: Vec<f64>) -> Self {
        debug_assert_eq!(cols.len(), k * k);
        Self { k, cols }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.k && j < self.k, "index out of range");
        self.cols[j * self.k + i]
    }

    /// Weights of all studies in study `j`'s estimate.
    pub fn column(&self, j: usize) -> &[f64] {
        assert!(j < self.k, "index out of range");
        &self.cols[j * self.k..(j + 1) * self.k]
    }

    /// Self-weights `c_jj`.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.k).map(|j| self.get(j, j)).collect()
    }
}

/// Inverse-variance weights `w_j(tau)`; they sum to one. When `tau^2`
/// overflows, the exact infinite-heterogeneity limit `1/k` is returned.
pub fn iv_weights(dataset: &Dataset, tau: f64) -> Result<Vec<f64>, ModelError> {
    check_tau(tau)?;
    let t2 = tau * tau;
    if !t2.is_finite() {
        return Ok(vec![1.0 / dataset.len() as f64; dataset.len()]);
    }
    let precisions: Vec<f64> = dataset
        .studies()
        .iter()
        .map(|s| 1.0 / (s.sigma() * s.sigma() + t2))
        .collect();
    let total: f64 = precisions.iter().sum();
    Ok(precisions.iter().map(|p| p / total).collect())
}

/// Conditional posterior mean and variance of the overall effect given τ,
/// under the uniform effect prior.
pub fn conditional_mu(dataset: &Dataset, tau: f64) -> Result<(f64, f64), ModelError> {
    check_tau(tau)?;
    let t2 = tau * tau;
    if !t2.is_finite() {
        let k = dataset.len() as f64;
        let mean = dataset.studies().iter().map(Study::y).sum::<f64>() / k;
        return Ok((mean, f64::INFINITY));
    }
    let mut total_precision = 0.0;
    let mut weighted_sum = 0.0;
    for s in dataset.studies() {
        let p = 1.0 / (s.sigma() * s.sigma() + t2);
        total_precision += p;
        weighted_sum += p * s.y();
    }
    Ok((weighted_sum / total_precision, 1.0 / total_precision))
}

/// Weight `b_j(tau)` pulling study `j`'s estimate away from the overall mean;
/// zero at τ = 0 by the exact limit rather than a 0/0 evaluation.
pub fn shrink_b(sigma_j: f64, tau: f64) -> Result<f64, ModelError> {
    if !(sigma_j.is_finite() && sigma_j > 0.0) {
        return Err(ModelError::InvalidSigma {
            label: String::new(),
            sigma: sigma_j,
        });
    }
    check_tau(tau)?;
    if tau == 0.0 {
        return Ok(0.0);
    }
    let t2 = tau * tau;
    if !t2.is_finite() {
        return Ok(1.0);
    }
    Ok(t2 / (sigma_j * sigma_j + t2))
}

/// Full matrix of shrinkage weights `c_ij(tau)`.
pub fn shrink_matrix(dataset: &Dataset, tau: f64) -> Result<ShrinkageWeights, ModelError> {
    let weights = iv_weights(dataset, tau)?;
    let k = dataset.len();
    let mut cols = vec![0.0; k * k];
    for (j, s) in dataset.studies().iter().enumerate() {
        let b = shrink_b(s.sigma(), tau)?;
        for i in 0..k {
            let c = if i == j {
                b + (1.0 - b) * weights[i]
            } else {
                (1.0 - b) * weights[i]
            };
            cols[j * k + i] = c;
        }
    }
    Ok(ShrinkageWeights::from_columns(k, cols))
}

/// Conditional posterior mean and variance of study `j`'s effect given τ.
pub fn conditional_theta(
    dataset: &Dataset,
    j: usize,
    tau: f64,
) -> Result<(f64, f64), ModelError> {
    let study = dataset.study(j)?;
    let (mu_mean, mu_var) = conditional_mu(dataset, tau)?;
    let b = shrink_b(study.sigma(), tau)?;
    let mean = b * study.y() + (1.0 - b) * mu_mean;
    let residual_var = if tau == 0.0 {
        0.0
    } else {
        let s2 = study.sigma() * study.sigma();
        // s2 * t2 / (s2 + t2), stable when tau^2 overflows
        s2 / (1.0 + s2 / (tau * tau))
    };
    let var = if b == 1.0 {
        residual_var
    } else {
        (1.0 - b) * (1.0 - b) * mu_var + residual_var
    };
    Ok((mean, var))
}

/// Data-dependent factor of the two-study heterogeneity posterior; a function
/// of the absolute estimate difference only.
pub fn g_term(dataset: &Dataset, tau: f64) -> Result<f64, ModelError> {
    if dataset.len() != 2 {
        return Err(ModelError::RequiresTwoStudies {
            count: dataset.len(),
        });
    }
    check_tau(tau)?;
    let (a, b) = (&dataset.studies()[0], &dataset.studies()[1]);
    let diff = b.y() - a.y();
    let denom = a.sigma() * a.sigma() + b.sigma() * b.sigma() + 2.0 * tau * tau;
    Ok((-0.5 * diff * diff / denom).exp())
}

/// Log of the unnormalized heterogeneity posterior density,
/// `log p(tau) + log f(tau) + log g(tau)`, under the uniform effect prior.
/// Returns `-inf` where the prior density vanishes.
pub fn tau_log_posterior_unnorm(
    dataset: &Dataset,
    prior: &HeterogeneityPrior,
    tau: f64,
) -> Result<f64, ModelError> {
    check_tau(tau)?;
    let log_prior = prior.log_density(tau);
    if log_prior == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let t2 = tau * tau;
    if !t2.is_finite() {
        // f(tau) -> 0 as tau -> infinity
        return Ok(f64::NEG_INFINITY);
    }
    let mut total_precision = 0.0;
    let mut weighted_sum = 0.0;
    let mut sum_log_var = 0.0;
    for s in dataset.studies() {
        let v = s.sigma() * s.sigma() + t2;
        let p = 1.0 / v;
        total_precision += p;
        weighted_sum += p * s.y();
        sum_log_var += v.ln();
    }
    let mu = weighted_sum / total_precision;
    let log_f = -0.5 * sum_log_var - 0.5 * total_precision.ln();
    let mut quad_form = 0.0;
    for s in dataset.studies() {
        let r = s.y() - mu;
        quad_form += r * r / (s.sigma() * s.sigma() + t2);
    }
    Ok(log_prior + log_f - 0.5 * quad_form)
}

/// Every conditional quantity of the model at a fixed τ.
#[derive(Debug, Clone)]
pub struct ConditionalState {
    pub tau: f64,
    pub mu_cond_mean: f64,
    pub mu_cond_var: f64,
    pub iv_weights: Vec<f64>,
    pub shrink_b: Vec<f64>,
    pub shrink_c: ShrinkageWeights,
}

impl ConditionalState {
    pub fn evaluate(dataset: &Dataset, tau: f64) -> Result<Self, ModelError> {
        let (mu_cond_mean, mu_cond_var) = conditional_mu(dataset, tau)?;
        let iv_weights = iv_weights(dataset, tau)?;
        let shrink_b = dataset
            .studies()
            .iter()
            .map(|s| shrink_b(s.sigma(), tau))
            .collect::<Result<Vec<_>, _>>()?;
        let shrink_c = shrink_matrix(dataset, tau)?;
        Ok(Self {
            tau,
            mu_cond_mean,
            mu_cond_var,
            iv_weights,
            shrink_b,
            shrink_c,
        })
    }
}
