//! Learning and inference from summary statistics through a Gaussian working
//! likelihood on the statistics.
//!
//! The central object is a diagonal variance matrix `V_uu` with entries
//! `v(ybar_j) / n_j`, where the variance function `v` encodes the observation
//! model: `v = sigma^2` for Gaussian noise, `v(ybar) = 1/ybar` in log space
//! for Poisson counts (the negative second derivative of the log likelihood
//! at the per-cell maximum likelihood estimate). With `V_uu` in place the
//! marginal likelihood `Q` and the posterior over latent function values are
//! the familiar closed forms of GP regression with a Gaussian likelihood, at
//! cost O(m^3) in the number of cells rather than the number of points.
//!
//! For Gaussian observations the aggregated marginal likelihood `E` (the
//! input-approximated model evaluated on complete outputs) is available in
//! closed form from the summaries alone, because the within-cell sum of
//! squares splits as `n_j (ybar_j - u_j)^2 + n_j s_j^2`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GaussianPosterior;
use crate::kernel::{gram, KernelSpec};
use crate::linalg::{chol_psd, BASE_JITTER};
use crate::summary::SummarizedData;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Likelihood {
    /// Independent Gaussian observation noise with a shared variance.
    Gaussian { variance: f64 },
    /// Poisson counts with a log link.
    Poisson,
}

impl Likelihood {
    pub fn validate(&self) -> Result<()> {
        if let Likelihood::Gaussian { variance } = self {
            if !(*variance > 0.0) || !variance.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "gaussian likelihood variance must be positive, got {variance}"
                )));
            }
        }
        Ok(())
    }

    /// The link g from latent space to observation space.
    pub fn link(&self, f: f64) -> f64 {
        match self {
            Likelihood::Gaussian { .. } => f,
            Likelihood::Poisson => f.exp(),
        }
    }

    /// The inverse link g^{-1} from observation space to latent space.
    pub fn link_inv(&self, y: f64) -> Result<f64> {
        match self {
            Likelihood::Gaussian { .. } => Ok(y),
            Likelihood::Poisson => {
                if y <= 0.0 {
                    Err(Error::Data(format!(
                        "poisson inverse link requires a positive value, got {y}"
                    )))
                } else {
                    Ok(y.ln())
                }
            }
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, Likelihood::Gaussian { .. })
    }
}

/// Diagonal of `V_uu`: per-cell variance of the summary statistic.
#[derive(Debug, Clone)]
pub struct VarianceVector(pub Array1<f64>);

impl VarianceVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn log_det(&self) -> f64 {
        self.0.iter().map(|v| v.ln()).sum()
    }
}

/// Per-cell statistic variances from the variance function of the likelihood,
/// evaluated on a latent-space (already transformed) summary.
pub fn variance_vector(summary_u: &SummarizedData, likelihood: &Likelihood) -> Result<VarianceVector> {
    likelihood.validate()?;
    let m = summary_u.len();
    let mut v = Array1::<f64>::zeros(m);
    for j in 0..m {
        let n_j = summary_u.counts[j] as f64;
        v[j] = match likelihood {
            Likelihood::Gaussian { variance } => variance / n_j,
            Likelihood::Poisson => {
                let rate = summary_u.stats[j].exp();
                if !rate.is_finite() || rate <= 0.0 {
                    return Err(Error::Numerical(format!(
                        "poisson variance function overflowed at cell {j} (u = {})",
                        summary_u.stats[j]
                    )));
                }
                1.0 / (n_j * rate)
            }
        };
        if !(v[j] > 0.0) || !v[j].is_finite() {
            return Err(Error::Numerical(format!(
                "variance function produced a non-positive entry at cell {j}: {}",
                v[j]
            )));
        }
    }
    Ok(VarianceVector(v))
}

fn covariance_with_variance(
    summary_u: &SummarizedData,
    spec: &KernelSpec,
    v: &VarianceVector,
) -> Result<Array2<f64>> {
    let mut s = gram(spec, summary_u.features.view(), summary_u.features.view(), true)?;
    for j in 0..summary_u.len() {
        s[[j, j]] += v.0[j];
    }
    Ok(s)
}

/// Log marginal likelihood of the statistics under the working model
/// N(ybar; mean_const, K_uu + V_uu).
pub fn lml_q(
    summary_u: &SummarizedData,
    spec: &KernelSpec,
    likelihood: &Likelihood,
    mean_const: f64,
) -> Result<f64> {
    let v = variance_vector(summary_u, likelihood)?;
    let s = covariance_with_variance(summary_u, spec, &v)?;
    let factor = chol_psd(s.view(), BASE_JITTER)?;
    let r = summary_u.stats.mapv(|t| t - mean_const);
    let alpha = factor.solve_vec(r.view())?;
    let m = summary_u.len() as f64;
    Ok(-0.5 * m * LN_2PI - 0.5 * factor.log_det() - 0.5 * r.dot(&alpha))
}

/// Exact log marginal likelihood of the complete outputs under the
/// input-approximated model with Gaussian observation noise, computed from
/// summaries alone:
///
/// E = Q + sum_j [ −(n_j/2) log(2π σ²) − n_j s_j² / (2σ²) ]
///       + (m/2) log 2π + (1/2) sum_j log(σ²/n_j),
///
/// where Q uses V_jj = σ²/n_j. Exact because the Gaussian log likelihood is
/// quadratic in the latent values.
pub fn gaussian_aggregated_lml(
    summary: &SummarizedData,
    spec: &KernelSpec,
    likelihood: &Likelihood,
    mean_const: f64,
) -> Result<f64> {
    let sigma2 = match likelihood {
        Likelihood::Gaussian { variance } => *variance,
        Likelihood::Poisson => {
            return Err(Error::Unsupported(
                "the aggregated marginal likelihood is closed-form for Gaussian observations only"
                    .into(),
            ))
        }
    };
    likelihood.validate()?;
    let q = lml_q(summary, spec, likelihood, mean_const)?;
    let m = summary.len() as f64;
    let mut extra = 0.0;
    for j in 0..summary.len() {
        let n_j = summary.counts[j] as f64;
        extra += -0.5 * n_j * (LN_2PI + sigma2.ln())
            - n_j * summary.variances[j] / (2.0 * sigma2)
            + 0.5 * (sigma2 / n_j).ln();
    }
    Ok(q + extra + 0.5 * m * LN_2PI)
}

/// Posterior of the latent function at `xstar` given the summaries.
pub fn posterior_q(
    summary_u: &SummarizedData,
    xstar: ArrayView2<'_, f64>,
    spec: &KernelSpec,
    likelihood: &Likelihood,
    mean_const: f64,
) -> Result<GaussianPosterior> {
    let v = variance_vector(summary_u, likelihood)?;
    let s = covariance_with_variance(summary_u, spec, &v)?;
    let factor = chol_psd(s.view(), BASE_JITTER)?;
    let r = summary_u.stats.mapv(|t| t - mean_const);
    let alpha = factor.solve_vec(r.view())?;

    let k_star_u = gram(spec, xstar, summary_u.features.view(), false)?;
    let mean = k_star_u.dot(&alpha).mapv(|t| t + mean_const);

    let k_u_star = k_star_u.t().to_owned();
    let solved = factor.solve_mat(k_u_star.view())?;
    let k_star_star = gram(spec, xstar, xstar, true)?;
    let covariance = &k_star_star - &k_star_u.dot(&solved);
    GaussianPosterior::new(mean, covariance)
}

/// Posterior mean and variance diagonal, without forming the n*×n*
/// covariance; memory stays O(m · n*).
pub fn posterior_q_mean_and_variance(
    summary_u: &SummarizedData,
    xstar: ArrayView2<'_, f64>,
    spec: &KernelSpec,
    likelihood: &Likelihood,
    mean_const: f64,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let v = variance_vector(summary_u, likelihood)?;
    let s = covariance_with_variance(summary_u, spec, &v)?;
    let factor = chol_psd(s.view(), BASE_JITTER)?;
    let r = summary_u.stats.mapv(|t| t - mean_const);
    let alpha = factor.solve_vec(r.view())?;
    let k_star_u = gram(spec, xstar, summary_u.features.view(), false)?;
    let mean = k_star_u.dot(&alpha).mapv(|t| t + mean_const);

    let solved = factor.solve_mat(k_star_u.t().to_owned().view())?; // m × n*
    let prior_diag = spec.signal_variance + spec.noise_variance;
    let variance = Array1::from_shape_fn(xstar.nrows(), |i| {
        let reduction: f64 = k_star_u
            .row(i)
            .iter()
            .zip(solved.column(i).iter())
            .map(|(a, b)| a * b)
            .sum();
        prior_diag - reduction
    });
    Ok((mean, variance))
}

/// Posterior mean only, without forming the n*×n* covariance.
pub fn posterior_q_mean(
    summary_u: &SummarizedData,
    xstar: ArrayView2<'_, f64>,
    spec: &KernelSpec,
    likelihood: &Likelihood,
    mean_const: f64,
) -> Result<Array1<f64>> {
    let v = variance_vector(summary_u, likelihood)?;
    let s = covariance_with_variance(summary_u, spec, &v)?;
    let factor = chol_psd(s.view(), BASE_JITTER)?;
    let r = summary_u.stats.mapv(|t| t - mean_const);
    let alpha = factor.solve_vec(r.view())?;
    let k_star_u = gram(spec, xstar, summary_u.features.view(), false)?;
    Ok(k_star_u.dot(&alpha).mapv(|t| t + mean_const))
}

/// Map a posterior mean through the link g, elementwise.
pub fn predict_observable(posterior: &GaussianPosterior, likelihood: &Likelihood) -> Array1<f64> {
    predict_observable_mean(posterior.mean.view(), likelihood)
}

/// As [`predict_observable`] for a bare mean vector.
pub fn predict_observable_mean(mean: ArrayView1<'_, f64>, likelihood: &Likelihood) -> Array1<f64> {
    mean.mapv(|f| likelihood.link(f))
}

/// The sample quasi-likelihood implied by `V_uu`:
/// `ell(ybar, u) = −1/2 (ybar − u)ᵀ V⁻¹ (ybar − u)` up to a constant in `u`.
pub fn sample_quasi_loglik(
    ybar: ArrayView1<'_, f64>,
    u: ArrayView1<'_, f64>,
    v: &VarianceVector,
) -> f64 {
    ybar.iter()
        .zip(u.iter())
        .zip(v.0.iter())
        .map(|((y, ui), vi)| -0.5 * (y - ui) * (y - ui) / vi)
        .sum()
}

/// Gradient of [`sample_quasi_loglik`] in `u`: `V⁻¹ (ybar − u)`.
pub fn sample_quasi_grad(
    ybar: ArrayView1<'_, f64>,
    u: ArrayView1<'_, f64>,
    v: &VarianceVector,
) -> Array1<f64> {
    Array1::from_iter(
        ybar.iter()
            .zip(u.iter())
            .zip(v.0.iter())
            .map(|((y, ui), vi)| (y - ui) / vi),
    )
}
