//! Exact complete-data Gaussian GP regression (the reference the summarized
//! path is judged against) and the aggregated Laplace posterior that bridges
//! the two: complete inputs with a Gaussian replacement of the likelihood
//! centered at the per-cell statistics.
//!
//! All formulas run in centered space: `mean_const` is subtracted from the
//! outputs (or statistics) before the solves and added back to predictive
//! means, so a constant mean function composes with the zero-mean closed
//! forms.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::kernel::{gram, KernelSpec};
use crate::linalg::{chol_psd, BASE_JITTER};
use crate::quasi::{variance_vector, Likelihood};
use crate::summary::SummarizedData;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Mean vector and covariance matrix of the latent function at query points.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mean: Array1<f64>,
    pub covariance: Array2<f64>,
}

impl GaussianPosterior {
    /// Enforces symmetry and checks the numerical-PSD slack on the diagonal.
    pub fn new(mean: Array1<f64>, covariance: Array2<f64>) -> Result<Self> {
        if covariance.nrows() != covariance.ncols() || covariance.nrows() != mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "posterior mean has length {} but covariance is {}x{}",
                mean.len(),
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let covariance = 0.5 * (&covariance + &covariance.t());
        if covariance.diag().iter().any(|&v| v < -1e-8) {
            return Err(Error::Numerical(format!(
                "posterior covariance diagonal dips below the PSD slack: min {}",
                covariance.diag().iter().cloned().fold(f64::INFINITY, f64::min)
            )));
        }
        Ok(Self { mean, covariance })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

fn check_xy(x: &ArrayView2<'_, f64>, y: &ArrayView1<'_, f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::Data("no data points".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} input rows but {} outputs",
            x.nrows(),
            y.len()
        )));
    }
    Ok(())
}

fn noisy_gram(
    x: ArrayView2<'_, f64>,
    spec: &KernelSpec,
    sigma2: f64,
) -> Result<Array2<f64>> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "observation noise variance must be positive, got {sigma2}"
        )));
    }
    let mut s = gram(spec, x, x, true)?;
    for i in 0..s.nrows() {
        s[[i, i]] += sigma2;
    }
    Ok(s)
}

/// Log marginal likelihood of a Gaussian-noise GP on complete data:
/// log N(y − mean_const; 0, K_ff + sigma2·I).
pub fn complete_lml_gaussian(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    spec: &KernelSpec,
    sigma2: f64,
    mean_const: f64,
) -> Result<f64> {
    check_xy(&x, &y)?;
    let s = noisy_gram(x, spec, sigma2)?;
    let factor = chol_psd(s.view(), BASE_JITTER)?;
    let r = y.mapv(|v| v - mean_const);
    let alpha = factor.solve_vec(r.view())?;
    let n = y.len() as f64;
    Ok(-0.5 * n * LN_2PI - 0.5 * factor.log_det() - 0.5 * r.dot(&alpha))
}

/// Posterior of the latent function at `xstar` for the complete-data
/// Gaussian-noise GP.
pub fn complete_posterior_gaussian(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    xstar: ArrayView2<'_, f64>,
    spec: &KernelSpec,
    sigma2: f64,
    mean_const: f64,
) -> Result<GaussianPosterior> {
    check_xy(&x, &y)?;
    if xstar.nrows() == 0 {
        return Err(Error::Data("no query points".into()));
    }
    if xstar.ncols() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "training inputs have dimension {} but queries have {}",
            x.ncols(),
            xstar.ncols()
        )));
    }
    let s = noisy_gram(x, spec, sigma2)?;
    let factor = chol_psd(s.view(), BASE_JITTER)?;
    let r = y.mapv(|v| v - mean_const);
    let alpha = factor.solve_vec(r.view())?;

    let k_star_f = gram(spec, xstar, x, false)?;
    let mean = k_star_f.dot(&alpha).mapv(|v| v + mean_const);

    let k_f_star = k_star_f.t().to_owned();
    let solved = factor.solve_mat(k_f_star.view())?;
    let k_star_star = gram(spec, xstar, xstar, true)?;
    let covariance = &k_star_star - &k_star_f.dot(&solved);
    GaussianPosterior::new(mean, covariance)
}

/// Posterior mean only, without forming the n*×n* covariance.
pub fn complete_posterior_mean(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    xstar: ArrayView2<'_, f64>,
    spec: &KernelSpec,
    sigma2: f64,
    mean_const: f64,
) -> Result<Array1<f64>> {
    check_xy(&x, &y)?;
    let s = noisy_gram(x, spec, sigma2)?;
    let factor = chol_psd(s.view(), BASE_JITTER)?;
    let r = y.mapv(|v| v - mean_const);
    let alpha = factor.solve_vec(r.view())?;
    let k_star_f = gram(spec, xstar, x, false)?;
    Ok(k_star_f.dot(&alpha).mapv(|v| v + mean_const))
}

/// 0/1 assignment matrix W with `W[i, omega_i] = 1`.
pub fn assignment_matrix(omega: &[usize], m: usize) -> Result<Array2<f64>> {
    if omega.iter().any(|&j| j >= m) {
        return Err(Error::Data("assignment index out of range".into()));
    }
    let mut w = Array2::zeros((omega.len(), m));
    for (i, &j) in omega.iter().enumerate() {
        w[[i, j]] = 1.0;
    }
    Ok(w)
}

/// Aggregated Laplace posterior: complete inputs, likelihood replaced by a
/// Gaussian in the cell values centered at the statistics with covariance
/// `V_uu`. Validation-only — requires the complete inputs and assignments.
///
/// mean       = mean_const + K_*f G⁻¹ W K_uu (K_uu + V)⁻¹ (u − mean_const)
/// covariance = K_** − K_*f G⁻¹ K_f* + (K_*f G⁻¹ W) T (K_*f G⁻¹ W)ᵀ,
///
/// with T = (V⁻¹ + K_uu⁻¹)⁻¹ = K_uu (K_uu + V)⁻¹ V and G the complete-data
/// Gram matrix. `noise_in_gram` controls whether the kernel's white-noise
/// term sits on the diagonals of G, K_uu, and K_**; the default used by the
/// crate is `true`, matching Gram matrices built from the full kernel.
pub fn laplace_aggregated_posterior(
    x: ArrayView2<'_, f64>,
    omega: &[usize],
    summary_u: &SummarizedData,
    xstar: ArrayView2<'_, f64>,
    spec: &KernelSpec,
    likelihood: &Likelihood,
    mean_const: f64,
    noise_in_gram: bool,
) -> Result<GaussianPosterior> {
    if x.nrows() != omega.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} input rows but {} assignments",
            x.nrows(),
            omega.len()
        )));
    }
    let m = summary_u.len();
    let mut counts = vec![0usize; m];
    for &j in omega {
        if j >= m {
            return Err(Error::Data("assignment index out of range".into()));
        }
        counts[j] += 1;
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::Data(
            "every cell must have at least one assigned point".into(),
        ));
    }

    let v = variance_vector(summary_u, likelihood)?;
    let z = summary_u.features.view();
    let k_uu = gram(spec, z, z, noise_in_gram)?;
    let mut k_uu_plus_v = k_uu.clone();
    for j in 0..m {
        k_uu_plus_v[[j, j]] += v.0[j];
    }
    let s_factor = chol_psd(k_uu_plus_v.view(), BASE_JITTER)?;

    let g = gram(spec, x, x, noise_in_gram)?;
    let g_factor = chol_psd(g.view(), BASE_JITTER)?;

    let w = assignment_matrix(omega, m)?;
    let r = summary_u.stats.mapv(|t| t - mean_const);

    // K_uu (K_uu + V)⁻¹ r
    let smoothed = k_uu.dot(&s_factor.solve_vec(r.view())?);

    let k_star_f = gram(spec, xstar, x, false)?;
    let g_inv_w = g_factor.solve_mat(w.view())?; // G⁻¹ W, n×m
    let p = k_star_f.dot(&g_inv_w); // K_*f G⁻¹ W, n*×m
    let mean = p.dot(&smoothed).mapv(|t| t + mean_const);

    // T = K_uu (K_uu + V)⁻¹ V, symmetrized.
    let v_mat = Array2::from_diag(&v.0);
    let t = k_uu.dot(&s_factor.solve_mat(v_mat.view())?);
    let t = 0.5 * (&t + &t.t());

    let k_f_star = k_star_f.t().to_owned();
    let g_inv_k_f_star = g_factor.solve_mat(k_f_star.view())?;
    let k_star_star = gram(spec, xstar, xstar, noise_in_gram)?;
    let covariance = &k_star_star - &k_star_f.dot(&g_inv_k_f_star) + &p.dot(&t).dot(&p.t());
    GaussianPosterior::new(mean, covariance)
}
