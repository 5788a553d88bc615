//! C ABI for summarized-data Gaussian process regression.
//!
//! Handles are opaque; every function returns a status code and the last
//! error message is retrievable per thread via [`sqgp_last_error_message`].
//! Matrices cross the boundary as row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ndarray::{Array1, Array2};

use sqgp::error::Error;
use sqgp::hyperopt::{fit_summary, FitConfig, FittedModel};
use sqgp::kernel::KernelFamily;
use sqgp::quasi::{posterior_q_mean, posterior_q_mean_and_variance, Likelihood};
use sqgp::summary::{summarize_dataset, transform_summary, Dataset, GridSpec, SummarizedData};

/// Status codes; nonzero values mirror the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqgpStatus {
    Ok = 0,
    ConfigError = 2,
    DataError = 3,
    NumericalError = 4,
    NullPointer = 5,
    Panic = 6,
}

/// Opaque summarized dataset.
pub struct SqgpSummary {
    inner: SummarizedData,
}

/// Opaque fitted model: kernel, observation model, and the latent-space
/// summary it predicts from.
pub struct SqgpModel {
    model: FittedModel,
    summary_u: SummarizedData,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_last_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_for(err: &Error) -> SqgpStatus {
    match err {
        Error::InvalidArgument(_) | Error::Unsupported(_) | Error::Json(_) => {
            SqgpStatus::ConfigError
        }
        Error::Data(_) | Error::Csv(_) | Error::Io(_) => SqgpStatus::DataError,
        Error::NotPositiveDefinite { .. } | Error::Numerical(_) | Error::DimensionMismatch(_) => {
            SqgpStatus::NumericalError
        }
    }
}

fn run_guarded<F: FnOnce() -> Result<(), Error>>(f: F) -> SqgpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            SqgpStatus::Ok
        }
        Ok(Err(e)) => {
            set_last_error(&e.to_string());
            status_for(&e)
        }
        Err(_) => {
            set_last_error("internal panic");
            SqgpStatus::Panic
        }
    }
}

/// Message describing the most recent failure on this thread. Valid until the
/// next call into the library from the same thread; never free it.
#[no_mangle]
pub extern "C" fn sqgp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Build a summary from raw parts: `z` is m×d row-major, `ybar` has length m,
/// `svar` may be NULL (treated as zeros), `counts` has length m.
///
/// # Safety
/// Pointers must reference buffers of the stated lengths and stay valid for
/// the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn sqgp_summary_create(
    z: *const f64,
    ybar: *const f64,
    svar: *const f64,
    counts: *const u64,
    m: usize,
    d: usize,
    out: *mut *mut SqgpSummary,
) -> SqgpStatus {
    if z.is_null() || ybar.is_null() || counts.is_null() || out.is_null() {
        set_last_error("null pointer argument");
        return SqgpStatus::NullPointer;
    }
    run_guarded(|| {
        let z = std::slice::from_raw_parts(z, m * d);
        let ybar = std::slice::from_raw_parts(ybar, m);
        let counts = std::slice::from_raw_parts(counts, m);
        let svar: Vec<f64> = if svar.is_null() {
            vec![0.0; m]
        } else {
            std::slice::from_raw_parts(svar, m).to_vec()
        };
        let features = Array2::from_shape_vec((m, d), z.to_vec())
            .map_err(|e| Error::Data(format!("bad feature shape: {e}")))?;
        let summary = SummarizedData::new(
            features,
            Array1::from_vec(ybar.to_vec()),
            Array1::from_vec(svar),
            counts.iter().map(|&c| c as usize).collect(),
            None,
        )?;
        *out = Box::into_raw(Box::new(SqgpSummary { inner: summary }));
        Ok(())
    })
}

/// Grid-summarize complete data: `x` is n×d row-major, `y` has length n, and
/// `lo`/`hi`/`cell` are per-dimension grid bounds and cell sizes.
///
/// # Safety
/// Pointers must reference buffers of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn sqgp_summarize_grid(
    x: *const f64,
    y: *const f64,
    n: usize,
    d: usize,
    lo: *const f64,
    hi: *const f64,
    cell: *const f64,
    out: *mut *mut SqgpSummary,
) -> SqgpStatus {
    if x.is_null() || y.is_null() || lo.is_null() || hi.is_null() || cell.is_null() || out.is_null()
    {
        set_last_error("null pointer argument");
        return SqgpStatus::NullPointer;
    }
    run_guarded(|| {
        let x = std::slice::from_raw_parts(x, n * d);
        let y = std::slice::from_raw_parts(y, n);
        let lo = std::slice::from_raw_parts(lo, d);
        let hi = std::slice::from_raw_parts(hi, d);
        let cell = std::slice::from_raw_parts(cell, d);
        let inputs = Array2::from_shape_vec((n, d), x.to_vec())
            .map_err(|e| Error::Data(format!("bad input shape: {e}")))?;
        let ds = Dataset::new(
            inputs,
            Array1::from_vec(y.to_vec()),
            vec![String::new(); d],
        )?;
        let grid = GridSpec::new(
            lo.iter().zip(hi.iter()).map(|(&a, &b)| (a, b)).collect(),
            cell.to_vec(),
        )?;
        let summary = summarize_dataset(&ds, &grid)?;
        *out = Box::into_raw(Box::new(SqgpSummary { inner: summary }));
        Ok(())
    })
}

/// Number of cells in a summary; 0 for NULL.
///
/// # Safety
/// `summary` must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn sqgp_summary_cells(summary: *const SqgpSummary) -> usize {
    if summary.is_null() {
        return 0;
    }
    (*summary).inner.len()
}

/// Input dimension of a summary; 0 for NULL.
///
/// # Safety
/// `summary` must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn sqgp_summary_dim(summary: *const SqgpSummary) -> usize {
    if summary.is_null() {
        return 0;
    }
    (*summary).inner.dim()
}

/// Release a summary handle. NULL is a no-op.
///
/// # Safety
/// The handle must have come from this library and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn sqgp_summary_free(summary: *mut SqgpSummary) {
    if !summary.is_null() {
        drop(Box::from_raw(summary));
    }
}

/// Observation models accepted by [`sqgp_fit`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqgpLikelihood {
    Gaussian = 0,
    Poisson = 1,
}

/// Covariance families accepted by [`sqgp_fit`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqgpKernel {
    Laplacian = 0,
    Gaussian = 1,
}

/// Fit hyperparameters to a summary. `sigma2_fixed` holds the Gaussian
/// observation variance fixed; pass NaN to fit it (ignored for Poisson).
///
/// # Safety
/// `summary` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sqgp_fit(
    summary: *const SqgpSummary,
    likelihood: SqgpLikelihood,
    kernel: SqgpKernel,
    sigma2_fixed: f64,
    out: *mut *mut SqgpModel,
) -> SqgpStatus {
    if summary.is_null() || out.is_null() {
        set_last_error("null pointer argument");
        return SqgpStatus::NullPointer;
    }
    run_guarded(|| {
        let summary = &(*summary).inner;
        let family = match kernel {
            SqgpKernel::Laplacian => KernelFamily::Laplacian,
            SqgpKernel::Gaussian => KernelFamily::Gaussian,
        };
        let lik = match likelihood {
            SqgpLikelihood::Gaussian => Likelihood::Gaussian { variance: 1.0 },
            SqgpLikelihood::Poisson => Likelihood::Poisson,
        };
        let mut cfg = FitConfig::new(family);
        if sigma2_fixed.is_finite() {
            cfg.sigma2_fixed = Some(sigma2_fixed);
        }
        let model = fit_summary(summary, &lik, &cfg)?;
        let summary_u = transform_summary(summary, &lik)?;
        *out = Box::into_raw(Box::new(SqgpModel { model, summary_u }));
        Ok(())
    })
}

/// Fitted parameters, written as
/// `[length_scale, signal_variance, noise_variance, sigma2 (NaN for Poisson), mean_const]`.
///
/// # Safety
/// `out_params` must point to at least 5 doubles.
#[no_mangle]
pub unsafe extern "C" fn sqgp_model_params(
    model: *const SqgpModel,
    out_params: *mut f64,
) -> SqgpStatus {
    if model.is_null() || out_params.is_null() {
        set_last_error("null pointer argument");
        return SqgpStatus::NullPointer;
    }
    let m = &(*model).model;
    let out = std::slice::from_raw_parts_mut(out_params, 5);
    out[0] = m.kernel.length_scale;
    out[1] = m.kernel.signal_variance;
    out[2] = m.kernel.noise_variance;
    out[3] = match m.likelihood {
        Likelihood::Gaussian { variance } => variance,
        Likelihood::Poisson => f64::NAN,
    };
    out[4] = m.mean_const;
    SqgpStatus::Ok
}

/// 1 when the optimizer met its tolerance, 0 otherwise (best iterate is
/// still usable), -1 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn sqgp_model_converged(model: *const SqgpModel) -> c_int {
    if model.is_null() {
        return -1;
    }
    i32::from((*model).model.opt.converged)
}

/// Predict at `nstar` query points (row-major, dimension matching the
/// summary). `out_mean` receives observable-scale predictions. When
/// `out_variance` is non-NULL it receives latent posterior variances
/// (diagonal only; memory stays linear in the number of queries).
///
/// # Safety
/// Buffers must match the stated lengths; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sqgp_predict(
    model: *const SqgpModel,
    xstar: *const f64,
    nstar: usize,
    d: usize,
    out_mean: *mut f64,
    out_variance: *mut f64,
) -> SqgpStatus {
    if model.is_null() || xstar.is_null() || out_mean.is_null() {
        set_last_error("null pointer argument");
        return SqgpStatus::NullPointer;
    }
    run_guarded(|| {
        let handle = &*model;
        let xs = std::slice::from_raw_parts(xstar, nstar * d);
        let queries = Array2::from_shape_vec((nstar, d), xs.to_vec())
            .map_err(|e| Error::Data(format!("bad query shape: {e}")))?;
        if d != handle.summary_u.dim() {
            return Err(Error::DimensionMismatch(format!(
                "queries have dimension {d} but the model was fit in dimension {}",
                handle.summary_u.dim()
            )));
        }
        let mean_out = std::slice::from_raw_parts_mut(out_mean, nstar);
        if out_variance.is_null() {
            let latent = posterior_q_mean(
                &handle.summary_u,
                queries.view(),
                &handle.model.kernel,
                &handle.model.likelihood,
                handle.model.mean_const,
            )?;
            for (dst, f) in mean_out.iter_mut().zip(latent.iter()) {
                *dst = handle.model.likelihood.link(*f);
            }
        } else {
            let (mean, variance) = posterior_q_mean_and_variance(
                &handle.summary_u,
                queries.view(),
                &handle.model.kernel,
                &handle.model.likelihood,
                handle.model.mean_const,
            )?;
            let var_out = std::slice::from_raw_parts_mut(out_variance, nstar);
            for i in 0..nstar {
                mean_out[i] = handle.model.likelihood.link(mean[i]);
                var_out[i] = variance[i];
            }
        }
        Ok(())
    })
}

/// Release a model handle. NULL is a no-op.
///
/// # Safety
/// The handle must have come from this library and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn sqgp_model_free(model: *mut SqgpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
