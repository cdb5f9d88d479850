//! Brute-force reference estimates for validating the quadrature pipeline:
//! a dense-grid trapezoid route and a seeded Monte-Carlo sampler. Both avoid
//! the adaptive quadrature machinery entirely and are deliberately slow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::model::{self, Dataset, HeterogeneityPrior};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    Grid,
    MonteCarlo,
}

/// A single reference value with its provenance and, for the Monte-Carlo
/// route, the standard error of the estimate.
#[derive(Debug, Clone, Serialize)]
pub struct OracleEstimate {
    pub value: f64,
    /// Zero for grid estimates.
    pub mc_std_error: f64,
    pub method: OracleMethod,
    /// Grid size or sample count.
    pub size: usize,
    /// Recorded for reproducibility (Monte-Carlo only).
    pub seed: Option<u64>,
}

// Truncation point for the oracle's uniform grids, derived independently of
// the quadrature pipeline's rule.
fn oracle_tau_max(dataset: &Dataset, prior: &HeterogeneityPrior) -> f64 {
    let log_unnorm =
        |tau: f64| model::tau_log_posterior_unnorm(dataset, prior, tau).unwrap_or(f64::NAN);
    let upper = prior.support_upper();
    let mut tau_max = prior.quantile(1.0 - 1e-9).min(upper);
    let mut peak = f64::NEG_INFINITY;
    for i in 0..=4096 {
        peak = peak.max(log_unnorm(tau_max * i as f64 / 4096.0));
    }
    let floor = (1e-13f64).ln();
    for _ in 0..60 {
        if tau_max >= upper || log_unnorm(tau_max) - peak <= floor {
            break;
        }
        tau_max = (tau_max * 2.0).min(upper);
    }
    tau_max
}

// c_ij(tau) without allocating: weight of study i in study j's estimate.
fn c_ij_at(dataset: &Dataset, i: usize, j: usize, tau: f64) -> f64 {
    let t2 = tau * tau;
    let mut total_precision = 0.0;
    for s in dataset.studies() {
        total_precision += 1.0 / (s.sigma() * s.sigma() + t2);
    }
    let sigma_i = dataset.studies()[i].sigma();
    let sigma_j = dataset.studies()[j].sigma();
    let w_i = (1.0 / (sigma_i * sigma_i + t2)) / total_precision;
    let b_j = if tau == 0.0 {
        0.0
    } else {
        t2 / (sigma_j * sigma_j + t2)
    };
    if i == j {
        b_j + (1.0 - b_j) * w_i
    } else {
        (1.0 - b_j) * w_i
    }
}

/// `E[c_ij | data]` by a plain trapezoid sum of the unnormalized posterior on
/// a dense uniform τ grid.
pub fn grid_expected_weight(
    dataset: &Dataset,
    prior: &HeterogeneityPrior,
    i: usize,
    j: usize,
    grid_size: usize,
) -> OracleEstimate {
    assert!(grid_size >= 10_000, "grid oracle needs at least 1e4 points");
    assert!(i < dataset.len() && j < dataset.len(), "index out of range");

    let tau_max = oracle_tau_max(dataset, prior);
    let h = tau_max / (grid_size - 1) as f64;
    let log_unnorm = |tau: f64| {
        model::tau_log_posterior_unnorm(dataset, prior, tau).unwrap_or(f64::NEG_INFINITY)
    };
    let mut peak = f64::NEG_INFINITY;
    for g in 0..grid_size {
        peak = peak.max(log_unnorm(g as f64 * h));
    }

    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for g in 0..grid_size {
        let tau = g as f64 * h;
        let u = (log_unnorm(tau) - peak).exp();
        let w = if g == 0 || g == grid_size - 1 { 0.5 } else { 1.0 };
        numerator += w * u * c_ij_at(dataset, i, j, tau);
        denominator += w * u;
    }

    OracleEstimate {
        value: numerator / denominator,
        mc_std_error: 0.0,
        method: OracleMethod::Grid,
        size: grid_size,
        seed: None,
    }
}

/// Monte-Carlo estimates of the marginal posterior of one study effect.
#[derive(Debug, Clone, Serialize)]
pub struct McThetaSummary {
    pub mean: OracleEstimate,
    pub sd: OracleEstimate,
    /// `(probability, estimate)` pairs for the 2.5%, 50% and 97.5% quantiles.
    pub quantiles: Vec<(f64, OracleEstimate)>,
    /// Effective number of resampling-grid cells carrying posterior mass.
    pub effective_grid_cells: f64,
    /// Set when the posterior concentrates on fewer than 100 grid cells.
    pub low_resolution_warning: bool,
    pub sample_count: usize,
    pub seed: u64,
}

const MC_QUANTILES: [f64; 3] = [0.025, 0.5, 0.975];
const MC_BATCHES: usize = 100;
const MC_GRID_CELLS: usize = 1 << 17;

fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < n {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    } else {
        sorted[n - 1]
    }
}

fn mean_and_sd(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Draws τ by inverting a dense tabulated posterior CDF, then θ_j from its
/// conditional normal. The ChaCha8 generator makes runs reproducible per
/// seed. Standard errors come from batch means over 100 batches.
pub fn mc_theta_distribution(
    dataset: &Dataset,
    prior: &HeterogeneityPrior,
    j: usize,
    n_samples: usize,
    seed: u64,
) -> McThetaSummary {
    assert!(n_samples >= 100_000, "MC oracle needs at least 1e5 samples");
    assert!(j < dataset.len(), "index out of range");

    // tabulate the posterior on a uniform grid: piecewise-uniform resampling
    let tau_max = oracle_tau_max(dataset, prior);
    let h = tau_max / MC_GRID_CELLS as f64;
    let log_unnorm = |tau: f64| {
        model::tau_log_posterior_unnorm(dataset, prior, tau).unwrap_or(f64::NEG_INFINITY)
    };
    let node_values: Vec<f64> = (0..=MC_GRID_CELLS)
        .map(|g| log_unnorm(g as f64 * h))
        .collect();
    let peak = node_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut cum = Vec::with_capacity(MC_GRID_CELLS);
    let mut total = 0.0;
    let mut sum_sq = 0.0;
    for c in 0..MC_GRID_CELLS {
        let mass =
            0.5 * ((node_values[c] - peak).exp() + (node_values[c + 1] - peak).exp()) * h;
        total += mass;
        sum_sq += mass * mass;
        cum.push(total);
    }
    let effective_grid_cells = total * total / sum_sq;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let u: f64 = rng.gen::<f64>() * total;
        let cell = cum.partition_point(|c| *c < u);
        let cell = cell.min(MC_GRID_CELLS - 1);
        let cell_lo = if cell == 0 { 0.0 } else { cum[cell - 1] };
        let cell_mass = cum[cell] - cell_lo;
        let frac = if cell_mass > 0.0 {
            (u - cell_lo) / cell_mass
        } else {
            0.5
        };
        let tau = (cell as f64 + frac) * h;
        let (m, v) = model::conditional_theta(dataset, j, tau).expect("tau valid");
        let z: f64 = rng.sample(StandardNormal);
        samples.push(m + v.sqrt() * z);
    }

    let (mean, sd) = mean_and_sd(&samples);
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let quantile_values: Vec<f64> = MC_QUANTILES
        .iter()
        .map(|&p| sample_quantile(&sorted, p))
        .collect();

    // batch means for the standard errors of every reported statistic
    let batch_len = n_samples / MC_BATCHES;
    let mut batch_means = Vec::with_capacity(MC_BATCHES);
    let mut batch_sds = Vec::with_capacity(MC_BATCHES);
    let mut batch_quantiles = vec![Vec::with_capacity(MC_BATCHES); MC_QUANTILES.len()];
    for b in 0..MC_BATCHES {
        let chunk = &samples[b * batch_len..(b + 1) * batch_len];
        let (m, s) = mean_and_sd(chunk);
        batch_means.push(m);
        batch_sds.push(s);
        let mut sorted_chunk = chunk.to_vec();
        sorted_chunk.sort_by(f64::total_cmp);
        for (qi, &p) in MC_QUANTILES.iter().enumerate() {
            batch_quantiles[qi].push(sample_quantile(&sorted_chunk, p));
        }
    }
    let batch_se = |stats: &[f64]| -> f64 {
        let (_, sd) = mean_and_sd(stats);
        sd / (stats.len() as f64).sqrt()
    };

    let estimate = |value: f64, se: f64| OracleEstimate {
        value,
        mc_std_error: se,
        method: OracleMethod::MonteCarlo,
        size: n_samples,
        seed: Some(seed),
    };

    McThetaSummary {
        mean: estimate(mean, batch_se(&batch_means)),
        sd: estimate(sd, batch_se(&batch_sds)),
        quantiles: MC_QUANTILES
            .iter()
            .zip(quantile_values)
            .enumerate()
            .map(|(qi, (&p, v))| (p, estimate(v, batch_se(&batch_quantiles[qi]))))
            .collect(),
        effective_grid_cells,
        low_resolution_warning: effective_grid_cells < 100.0,
        sample_count: n_samples,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds;
    use crate::model::Study;
    use crate::quad::QuadratureSettings;

    fn cjd() -> Dataset {
        Dataset::new(vec![
            Study::new("observational", -0.499, 0.249).unwrap(),
            Study::new("randomized", -0.173, 0.631).unwrap(),
        ])
        .unwrap()
    }

    fn hn(scale: f64) -> HeterogeneityPrior {
        HeterogeneityPrior::half_normal(scale).unwrap()
    }

    #[test]
    fn grid_recovers_fe_weight_under_a_point_mass_prior() {
        let prior = HeterogeneityPrior::uniform(1e-6).unwrap();
        let ds = cjd();
        let fe = bounds::fe_weights(&ds.sigmas()).unwrap();
        for j in 0..2 {
            let est = grid_expected_weight(&ds, &prior, j, j, 10_000);
            assert!(
                (est.value - fe[j]).abs() < 1e-4,
                "study {j}: {} vs {}",
                est.value,
                fe[j]
            );
        }
    }

    #[test]
    fn grid_matches_coincidence_weights_when_estimates_agree() {
        let sigmas = [0.8, 0.2];
        let ds = Dataset::from_values(&[0.7, 0.7], &sigmas).unwrap();
        let prior = hn(0.5);
        let coincidence =
            bounds::coincidence_weights(&sigmas, &prior, &QuadratureSettings::default()).unwrap();
        for j in 0..2 {
            let est = grid_expected_weight(&ds, &prior, j, j, 200_000);
            assert!(
                (est.value - coincidence[j]).abs() < 1e-4,
                "study {j}: {} vs {}",
                est.value,
                coincidence[j]
            );
        }
    }

    #[test]
    fn mc_is_reproducible_per_seed() {
        let ds = cjd();
        let a = mc_theta_distribution(&ds, &hn(0.5), 1, 100_000, 7);
        let b = mc_theta_distribution(&ds, &hn(0.5), 1, 100_000, 7);
        assert_eq!(a.mean.value, b.mean.value);
        assert_eq!(a.sd.value, b.sd.value);
        let c = mc_theta_distribution(&ds, &hn(0.5), 1, 100_000, 8);
        assert_ne!(a.mean.value, c.mean.value);
    }

    #[test]
    fn mc_single_study_recovers_plain_normal_moments() {
        let ds = Dataset::new(vec![Study::new("only", -0.173, 0.631).unwrap()]).unwrap();
        let summary = mc_theta_distribution(&ds, &hn(0.5), 0, 200_000, 42);
        assert!(
            (summary.mean.value + 0.173).abs() < 3.0 * summary.mean.mc_std_error,
            "mean {} se {}",
            summary.mean.value,
            summary.mean.mc_std_error
        );
        assert!((summary.sd.value - 0.631).abs() < 3.0 * summary.sd.mc_std_error);
        let z = 1.959963984540054;
        let (_, q_lo) = &summary.quantiles[0];
        let (_, q_hi) = &summary.quantiles[2];
        assert!((q_lo.value - (-0.173 - z * 0.631)).abs() < 3.0 * q_lo.mc_std_error);
        assert!((q_hi.value - (-0.173 + z * 0.631)).abs() < 3.0 * q_hi.mc_std_error);
        assert!(!summary.low_resolution_warning);
    }

    #[test]
    fn mc_reports_paper_scale_mean_for_cjd() {
        let summary = mc_theta_distribution(&cjd(), &hn(0.5), 1, 200_000, 1);
        assert!(
            (summary.mean.value - (-0.370)).abs() < 3.0 * summary.mean.mc_std_error + 0.001,
            "mean {} se {}",
            summary.mean.value,
            summary.mean.mc_std_error
        );
    }
}
