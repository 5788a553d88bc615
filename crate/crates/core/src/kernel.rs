//! Covariance functions, Gram matrices, and the analytic bounds on how much a
//! kernel value can move when inputs are replaced by nearby representatives.
//!
//! Both families are unit kernels scaled by a signal variance `c` and a length
//! scale `theta`: `k(x, x') = c · k_unit(x/theta, x'/theta)`, with optional
//! white noise added on the diagonal of same-point-set Gram matrices.
//!
//! The perturbation bounds `zeta1`/`zeta2` are stated for unit kernels, so
//! distances and the radius `alpha` are divided by `theta` first and the final
//! bound is multiplied by `c`. White noise never enters the bounds: replacing
//! inputs leaves the diagonal noise term unchanged.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// exp(−|x − x'|) on theta-scaled inputs.
    Laplacian,
    /// exp(−½|x − x'|²) on theta-scaled inputs.
    Gaussian,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "laplacian" | "laplace" | "exponential" => Ok(KernelFamily::Laplacian),
            "gaussian" | "rbf" | "squared-exponential" => Ok(KernelFamily::Gaussian),
            other => Err(Error::InvalidArgument(format!(
                "unknown kernel family {other:?} (expected \"laplacian\" or \"gaussian\")"
            ))),
        }
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelFamily::Laplacian => write!(f, "laplacian"),
            KernelFamily::Gaussian => write!(f, "gaussian"),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// theta > 0, in input-space units.
    pub length_scale: f64,
    /// c > 0, the value of k(x, x) without noise.
    pub signal_variance: f64,
    /// sigma_w^2 >= 0, added on the diagonal of same-set Gram matrices only.
    pub noise_variance: f64,
}

impl KernelSpec {
    pub fn new(
        family: KernelFamily,
        length_scale: f64,
        signal_variance: f64,
        noise_variance: f64,
    ) -> Result<Self> {
        if !(length_scale > 0.0) || !length_scale.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "length_scale must be positive and finite, got {length_scale}"
            )));
        }
        if !(signal_variance > 0.0) || !signal_variance.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "signal_variance must be positive and finite, got {signal_variance}"
            )));
        }
        if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise_variance must be non-negative and finite, got {noise_variance}"
            )));
        }
        Ok(Self {
            family,
            length_scale,
            signal_variance,
            noise_variance,
        })
    }

    /// Unit kernel: theta = 1, c = 1, no white noise.
    pub fn unit(family: KernelFamily) -> Self {
        Self {
            family,
            length_scale: 1.0,
            signal_variance: 1.0,
            noise_variance: 0.0,
        }
    }

    /// Unit kernel with a given length scale (toy sweeps).
    pub fn unit_with_length_scale(family: KernelFamily, length_scale: f64) -> Result<Self> {
        Self::new(family, length_scale, 1.0, 0.0)
    }
}

fn unit_eval(family: KernelFamily, dist: f64) -> f64 {
    match family {
        KernelFamily::Laplacian => (-dist).exp(),
        KernelFamily::Gaussian => (-0.5 * dist * dist).exp(),
    }
}

/// Euclidean distance between theta-scaled copies of `x` and `y`.
///
/// Coordinates are divided by theta before differencing so that evaluation
/// with a length scale is bit-identical to unit evaluation at `x/theta`.
fn scaled_distance(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>, theta: f64) -> f64 {
    x.iter()
        .zip(y.iter())
        .map(|(a, b)| {
            let d = a / theta - b / theta;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Covariance between two points. Never includes the white-noise term.
pub fn kernel_eval(spec: &KernelSpec, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel_eval: points have dimensions {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "kernel_eval: non-finite coordinate".into(),
        ));
    }
    Ok(spec.signal_variance * unit_eval(spec.family, scaled_distance(x, y, spec.length_scale)))
}

/// Gram matrix of two point sets; element (i, j) = `kernel_eval(a_i, b_j)`.
///
/// `add_noise` puts sigma_w^2 on the diagonal and is only legal when `a` and
/// `b` are the identical point set.
pub fn gram(
    spec: &KernelSpec,
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    add_noise: bool,
) -> Result<Array2<f64>> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::InvalidArgument("gram: empty point set".into()));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "gram: point sets have dimensions {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    if add_noise && (a.shape() != b.shape() || a != b) {
        return Err(Error::InvalidArgument(
            "gram: add_noise requires identical point sets".into(),
        ));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("gram: non-finite coordinate".into()));
    }
    let (n, m) = (a.nrows(), b.nrows());
    let theta = spec.length_scale;
    let c = spec.signal_variance;
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            out[[i, j]] = c * unit_eval(spec.family, scaled_distance(a.row(i), b.row(j), theta));
        }
    }
    if add_noise {
        for i in 0..n {
            out[[i, i]] += spec.noise_variance;
        }
    }
    Ok(out)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "perturbation radius alpha must be positive and finite, got {alpha}"
        )));
    }
    Ok(())
}

/// Bound on |k(x, x') − k(z, z')| for a unit-variance kernel when x and x'
/// each lie within `alpha` of z and z'. Distances are theta-scaled internally;
/// callers multiply by the signal variance for scaled kernels.
pub fn zeta1(
    family: KernelFamily,
    theta: f64,
    alpha: f64,
    z: ArrayView1<'_, f64>,
    z2: ArrayView1<'_, f64>,
) -> Result<f64> {
    check_alpha(alpha)?;
    let a = alpha / theta;
    Ok(match family {
        KernelFamily::Laplacian => 1.0 - (-2.0 * a).exp(),
        KernelFamily::Gaussian => {
            let r = scaled_distance(z, z2, theta);
            1.0 - (-2.0 * a * (r + a)).exp()
        }
    })
}

/// Bound on |k(x, x*) − k(z, x*)| when only the first argument is perturbed
/// within `alpha` of z. Same scaling conventions as [`zeta1`].
pub fn zeta2(
    family: KernelFamily,
    theta: f64,
    alpha: f64,
    z: ArrayView1<'_, f64>,
    xstar: ArrayView1<'_, f64>,
) -> Result<f64> {
    check_alpha(alpha)?;
    let a = alpha / theta;
    Ok(match family {
        KernelFamily::Laplacian => 1.0 - (-a).exp(),
        KernelFamily::Gaussian => {
            let r = scaled_distance(z, xstar, theta);
            1.0 - (-a * (r + 1.5 * a)).exp()
        }
    })
}

/// Certified uniform bound on kernel-value perturbation under input
/// replacement: the max of `zeta1` over representative pairs, and of `zeta2`
/// against the query points when they are known, scaled by the signal
/// variance. Valid whenever every data point lies within `alpha` of its
/// representative feature.
pub fn beta_bound(
    spec: &KernelSpec,
    z: ArrayView2<'_, f64>,
    alpha: f64,
    xstar: Option<ArrayView2<'_, f64>>,
) -> Result<f64> {
    check_alpha(alpha)?;
    let m = z.nrows();
    if m == 0 {
        return Err(Error::InvalidArgument("beta_bound: empty Z".into()));
    }
    let mut worst = 0.0_f64;
    for i in 0..m {
        for j in i..m {
            worst = worst.max(zeta1(spec.family, spec.length_scale, alpha, z.row(i), z.row(j))?);
        }
    }
    if let Some(xs) = xstar {
        if xs.ncols() != z.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "beta_bound: Z has dimension {} but X* has {}",
                z.ncols(),
                xs.ncols()
            )));
        }
        for i in 0..m {
            for j in 0..xs.nrows() {
                worst =
                    worst.max(zeta2(spec.family, spec.length_scale, alpha, z.row(i), xs.row(j))?);
            }
        }
    }
    Ok(spec.signal_variance * worst)
}
