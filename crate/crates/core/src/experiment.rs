//! End-to-end experiment harness.
//!
//! Every command is deterministic given `(seed, config)`: trial `t` shuffles
//! with a generator seeded by `seed + t`, trials run in parallel over a
//! worker pool, and results are collected in trial order by a single writer.
//!
//! The evaluation pipeline is
//! shuffle → split → grid-summarize → transform → fit → posterior → predict,
//! scored either against the complete-data posterior mean (approximation
//! mode, normalized by the training-output standard deviation) or against
//! the held-out outputs (prediction mode, normalized by the test-output
//! standard deviation).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{bound_report, bound_report_with_route, BoundReport, KappaRoute};
use crate::error::{Error, Result};
use crate::gp::complete_posterior_mean;
use crate::hyperopt::{fit_complete, fit_summary, FitConfig, FittedModel};
use crate::kernel::{gram, KernelFamily, KernelSpec};
use crate::linalg::{chol_psd, BASE_JITTER};
use crate::quasi::{lml_q, posterior_q_mean, variance_vector, Likelihood};
use crate::summary::{
    assign_grid, summarize_dataset, summarize_outputs, transform_summary_with_floor, Dataset,
    GridSpec, SummarizedData,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Latitude × longitude domain of the California housing experiments.
pub fn california_bounds() -> Vec<(f64, f64)> {
    vec![(32.54, 41.95), (-124.35, -114.31)]
}

fn default_input_columns() -> Vec<String> {
    crate::data::default_input_columns()
}

fn default_trials() -> usize {
    1
}

fn default_normalization() -> String {
    "test".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset_path: String,
    pub target_attribute: String,
    pub grid_cell: f64,
    pub likelihood: String,
    pub kernel_family: String,
    pub n_train: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: String,
    #[serde(default = "default_input_columns")]
    pub input_columns: Vec<String>,
    /// Grid bounds per input dimension; the data range when omitted.
    #[serde(default)]
    pub grid_bounds: Option<Vec<(f64, f64)>>,
    /// "train" or "test": which output standard deviation normalizes the RMSE.
    #[serde(default = "default_normalization")]
    pub normalization: String,
    /// Hold the Gaussian observation variance fixed instead of fitting it.
    #[serde(default)]
    pub sigma2_fixed: Option<f64>,
    /// Fit the kernel white-noise term (default: Poisson yes, Gaussian no).
    #[serde(default)]
    pub fit_kernel_noise: Option<bool>,
    /// Clamp non-positive Poisson cell means to this floor instead of erroring.
    #[serde(default)]
    pub poisson_floor: Option<f64>,
    /// Cap on the number of test points per trial (all remaining when omitted).
    #[serde(default)]
    pub n_test: Option<usize>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        if !(self.grid_cell > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid cell must be positive, got {}",
                self.grid_cell
            )));
        }
        if self.n_train == 0 {
            return Err(Error::InvalidArgument("n_train must be >= 1".into()));
        }
        if self.normalization != "train" && self.normalization != "test" {
            return Err(Error::InvalidArgument(format!(
                "normalization must be \"train\" or \"test\", got {:?}",
                self.normalization
            )));
        }
        self.parse_family()?;
        self.parse_likelihood()?;
        Ok(())
    }

    pub fn parse_family(&self) -> Result<KernelFamily> {
        self.kernel_family.parse()
    }

    pub fn parse_likelihood(&self) -> Result<Likelihood> {
        match self.likelihood.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Likelihood::Gaussian { variance: 1.0 }),
            "poisson" => Ok(Likelihood::Poisson),
            other => Err(Error::InvalidArgument(format!(
                "unknown likelihood {other:?} (expected \"gaussian\" or \"poisson\")"
            ))),
        }
    }

    pub fn fit_config(&self) -> Result<FitConfig> {
        let mut cfg = FitConfig::new(self.parse_family()?);
        cfg.sigma2_fixed = self.sigma2_fixed;
        cfg.fit_kernel_noise = self.fit_kernel_noise;
        cfg.poisson_floor = self.poisson_floor;
        Ok(cfg)
    }
}

/// Population standard deviation (divide by n).
pub fn std_dev(values: ArrayView1<'_, f64>) -> f64 {
    let n = values.len() as f64;
    let mean = values.sum() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

pub fn rmse(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let n = a.len() as f64;
    (a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
        .sqrt()
}

fn take_rows(x: ArrayView2<'_, f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), x.ncols()));
    for (row, &i) in idx.iter().enumerate() {
        out.row_mut(row).assign(&x.row(i));
    }
    out
}

fn take_elems(y: ArrayView1<'_, f64>, idx: &[usize]) -> Array1<f64> {
    Array1::from_iter(idx.iter().map(|&i| y[i]))
}

/// One shuffled train/test split.
pub struct TrialSplit {
    pub x_train: Array2<f64>,
    pub y_train: Array1<f64>,
    pub x_test: Array2<f64>,
    pub y_test: Array1<f64>,
}

/// Shuffle with a per-trial generator seeded by `seed + trial` and split.
pub fn split_trial(
    ds: &Dataset,
    n_train: usize,
    n_test: Option<usize>,
    seed: u64,
    trial: usize,
) -> Result<TrialSplit> {
    let n = ds.len();
    if n_train >= n {
        return Err(Error::Data(format!(
            "n_train = {n_train} leaves no test points out of {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let train_idx = &idx[..n_train];
    let rest = &idx[n_train..];
    let n_te = n_test.map_or(rest.len(), |cap| cap.min(rest.len()));
    if n_te == 0 {
        return Err(Error::Data("empty test split".into()));
    }
    let test_idx = &rest[..n_te];
    Ok(TrialSplit {
        x_train: take_rows(ds.x.view(), train_idx),
        y_train: take_elems(ds.y.view(), train_idx),
        x_test: take_rows(ds.x.view(), test_idx),
        y_test: take_elems(ds.y.view(), test_idx),
    })
}

fn grid_for(cfg: &ExperimentConfig, ds: &Dataset, cell: f64) -> Result<GridSpec> {
    let bounds = match &cfg.grid_bounds {
        Some(b) => b.clone(),
        None => (0..ds.dim())
            .map(|k| {
                let col = ds.x.column(k);
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi.max(lo + f64::EPSILON))
            })
            .collect(),
    };
    GridSpec::uniform(bounds, cell)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Normalized RMSE between the summarized and complete-data posterior
    /// means at the test inputs (Gaussian likelihood only).
    Approximation,
    /// Normalized RMSE between predictions and held-out outputs.
    Prediction,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialMetric {
    pub trial: usize,
    pub nrmse: f64,
    pub cells: usize,
    pub fit_converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub grid_cell: f64,
    pub per_trial: Vec<TrialMetric>,
    pub mean_nrmse: f64,
    pub std_nrmse: f64,
}

fn aggregate(per_trial: &[TrialMetric]) -> (f64, f64) {
    let n = per_trial.len() as f64;
    let mean = per_trial.iter().map(|t| t.nrmse).sum::<f64>() / n;
    let var = if per_trial.len() > 1 {
        per_trial
            .iter()
            .map(|t| (t.nrmse - mean) * (t.nrmse - mean))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Fit the summarized model for one training set and predict at `x_test`.
/// Returns the observable-scale predictions, the latent posterior mean, the
/// cell count, and the fitted model.
pub fn fit_and_predict(
    x_train: ArrayView2<'_, f64>,
    y_train: ArrayView1<'_, f64>,
    x_test: ArrayView2<'_, f64>,
    grid: &GridSpec,
    likelihood: &Likelihood,
    fit_cfg: &FitConfig,
) -> Result<(Array1<f64>, Array1<f64>, usize, FittedModel)> {
    let ds = Dataset::new(
        x_train.to_owned(),
        y_train.to_owned(),
        vec![String::new(); x_train.ncols()],
    )?;
    let summary = summarize_dataset(&ds, grid)?;
    let model = fit_summary(&summary, likelihood, fit_cfg)?;
    let summary_u = transform_summary_with_floor(&summary, likelihood, fit_cfg.poisson_floor)?;
    let latent = posterior_q_mean(
        &summary_u,
        x_test,
        &model.kernel,
        &model.likelihood,
        model.mean_const,
    )?;
    let observable = latent.mapv(|f| model.likelihood.link(f));
    Ok((observable, latent, summary.len(), model))
}

/// Run the evaluation pipeline over seeded trials.
pub fn run_eval(ds: &Dataset, cfg: &ExperimentConfig, mode: EvalMode) -> Result<EvalReport> {
    cfg.validate()?;
    let likelihood = cfg.parse_likelihood()?;
    if mode == EvalMode::Approximation && !likelihood.is_gaussian() {
        return Err(Error::Unsupported(
            "approximation comparisons use the Gaussian likelihood".into(),
        ));
    }
    let grid = grid_for(cfg, ds, cfg.grid_cell)?;
    let fit_cfg = cfg.fit_config()?;

    let per_trial: Result<Vec<TrialMetric>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let split = split_trial(ds, cfg.n_train, cfg.n_test, cfg.seed, trial)?;
            let (pred, latent, cells, model) = fit_and_predict(
                split.x_train.view(),
                split.y_train.view(),
                split.x_test.view(),
                &grid,
                &likelihood,
                &fit_cfg,
            )?;
            let nrmse = match mode {
                EvalMode::Prediction => {
                    let denom = match cfg.normalization.as_str() {
                        "train" => std_dev(split.y_train.view()),
                        _ => std_dev(split.y_test.view()),
                    };
                    rmse(pred.view(), split.y_test.view()) / denom
                }
                EvalMode::Approximation => {
                    let complete = fit_complete(
                        split.x_train.view(),
                        split.y_train.view(),
                        &fit_cfg,
                    )?;
                    let complete_sigma2 = match complete.likelihood {
                        Likelihood::Gaussian { variance } => variance,
                        Likelihood::Poisson => unreachable!(),
                    };
                    let reference = complete_posterior_mean(
                        split.x_train.view(),
                        split.y_train.view(),
                        split.x_test.view(),
                        &complete.kernel,
                        complete_sigma2,
                        complete.mean_const,
                    )?;
                    let denom = match cfg.normalization.as_str() {
                        "test" => std_dev(split.y_test.view()),
                        _ => std_dev(split.y_train.view()),
                    };
                    rmse(latent.view(), reference.view()) / denom
                }
            };
            Ok(TrialMetric {
                trial,
                nrmse,
                cells,
                fit_converged: model.opt.converged,
            })
        })
        .collect();
    let per_trial = per_trial?;
    let (mean_nrmse, std_nrmse) = aggregate(&per_trial);
    Ok(EvalReport {
        mode,
        grid_cell: cfg.grid_cell,
        per_trial,
        mean_nrmse,
        std_nrmse,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSweepReport {
    pub grid_cell: f64,
    pub per_trial: Vec<TrialMetric>,
    pub mean_nrmse: f64,
    pub std_nrmse: f64,
}

/// Approximation-error sweep over grid sizes with the complete-data reference
/// fitted once per trial and reused across grids (it does not depend on the
/// summarization).
pub fn run_grid_sweep(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    grid_cells: &[f64],
) -> Result<Vec<GridSweepReport>> {
    cfg.validate()?;
    let likelihood = cfg.parse_likelihood()?;
    if !likelihood.is_gaussian() {
        return Err(Error::Unsupported(
            "the grid sweep compares against the complete-data Gaussian posterior".into(),
        ));
    }
    let fit_cfg = cfg.fit_config()?;

    let trial_rows: Result<Vec<Vec<(f64, TrialMetric)>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let split = split_trial(ds, cfg.n_train, cfg.n_test, cfg.seed, trial)?;
            let complete = fit_complete(split.x_train.view(), split.y_train.view(), &fit_cfg)?;
            let complete_sigma2 = match complete.likelihood {
                Likelihood::Gaussian { variance } => variance,
                Likelihood::Poisson => unreachable!(),
            };
            let reference = complete_posterior_mean(
                split.x_train.view(),
                split.y_train.view(),
                split.x_test.view(),
                &complete.kernel,
                complete_sigma2,
                complete.mean_const,
            )?;
            let denom = match cfg.normalization.as_str() {
                "test" => std_dev(split.y_test.view()),
                _ => std_dev(split.y_train.view()),
            };
            let mut rows = Vec::with_capacity(grid_cells.len());
            for &cell in grid_cells {
                let grid = grid_for(cfg, ds, cell)?;
                let (_, latent, cells, model) = fit_and_predict(
                    split.x_train.view(),
                    split.y_train.view(),
                    split.x_test.view(),
                    &grid,
                    &likelihood,
                    &fit_cfg,
                )?;
                rows.push((
                    cell,
                    TrialMetric {
                        trial,
                        nrmse: rmse(latent.view(), reference.view()) / denom,
                        cells,
                        fit_converged: model.opt.converged,
                    },
                ));
            }
            Ok(rows)
        })
        .collect();
    let trial_rows = trial_rows?;

    let mut reports = Vec::with_capacity(grid_cells.len());
    for (k, &cell) in grid_cells.iter().enumerate() {
        let per_trial: Vec<TrialMetric> =
            trial_rows.iter().map(|rows| rows[k].1.clone()).collect();
        let (mean_nrmse, std_nrmse) = aggregate(&per_trial);
        reports.push(GridSweepReport {
            grid_cell: cell,
            per_trial,
            mean_nrmse,
            std_nrmse,
        });
    }
    Ok(reports)
}

/// Bound report for a dataset summarized at the configured grid (first trial
/// split, training half), evaluated at the kernel fitted to the summaries so
/// the diagnostics describe the model that would actually be used.
pub fn run_bounds(ds: &Dataset, cfg: &ExperimentConfig) -> Result<BoundReport> {
    cfg.validate()?;
    let split = split_trial(ds, cfg.n_train.min(ds.len() - 1), cfg.n_test, cfg.seed, 0)?;
    let grid = grid_for(cfg, ds, cfg.grid_cell)?;
    let train = Dataset::new(
        split.x_train.clone(),
        split.y_train.clone(),
        ds.attribute_names.clone(),
    )?;
    let summary = summarize_dataset(&train, &grid)?;
    let likelihood = cfg.parse_likelihood()?;
    let model = fit_summary(&summary, &likelihood, &cfg.fit_config()?)?;
    let omega = summary.assignments.clone().unwrap_or_default();
    bound_report(
        split.x_train.view(),
        &omega,
        summary.features.view(),
        &model.kernel,
        Some(split.x_test.view()),
    )
}

// ---------------------------------------------------------------------------
// Toy sweeps on [0, 2π]
// ---------------------------------------------------------------------------

/// Equally spaced inputs on [0, 2π], endpoints included.
fn toy_inputs(n: usize) -> Array2<f64> {
    let span = 2.0 * std::f64::consts::PI;
    Array2::from_shape_fn((n, 1), |(i, _)| {
        if n == 1 {
            0.0
        } else {
            span * i as f64 / (n - 1) as f64
        }
    })
}

fn toy_grid(m: usize) -> GridSpec {
    GridSpec::uniform(vec![(0.0, 2.0 * std::f64::consts::PI)], 2.0 * std::f64::consts::PI / m as f64)
        .expect("valid toy grid")
}

#[derive(Debug, Clone, Serialize)]
pub struct EtaRow {
    pub family: String,
    pub theta: f64,
    pub m: usize,
    pub kappa: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub xi_star: f64,
    pub eta: f64,
}

/// Error-scale sweep on the toy model: n equally spaced inputs on [0, 2π],
/// m equally spaced representative features (grid-cell centers), every
/// (family, theta, m) combination.
pub fn toy_eta_sweep(
    n: usize,
    ms: &[usize],
    thetas: &[f64],
    families: &[KernelFamily],
) -> Result<Vec<EtaRow>> {
    let x = toy_inputs(n);
    let mut configs = Vec::new();
    for &family in families {
        for &theta in thetas {
            for &m in ms {
                configs.push((family, theta, m));
            }
        }
    }
    let rows: Result<Vec<EtaRow>> = configs
        .into_par_iter()
        .map(|(family, theta, m)| {
            let grid = toy_grid(m);
            let assignment = assign_grid(x.view(), &grid)?;
            let spec = KernelSpec::unit_with_length_scale(family, theta)?;
            // Local-optimization kappa: on these structured grids the exact
            // SVD infimum is much smaller and would make the error scale grow
            // with m instead of shrinking.
            let report = bound_report_with_route(
                x.view(),
                &assignment.omega,
                assignment.centers.view(),
                &spec,
                None,
                KappaRoute::LocalOptimization,
            )?;
            Ok(EtaRow {
                family: family.to_string(),
                theta,
                m: report.m,
                kappa: report.kappa,
                lambda1: report.lambda1,
                lambda2: report.lambda2,
                xi_star: report.xi_star,
                eta: report.eta,
            })
        })
        .collect();
    rows
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig4Row {
    pub family: String,
    pub theta: f64,
    pub m: usize,
    /// Residual of the exact Gaussian identity |(Q + corrections) − E|.
    pub delta_lml_exact_mean: f64,
    pub delta_lml_exact_max: f64,
    /// |(Q + corrections) − L| against the complete-data marginal likelihood.
    pub delta_lml_mean: f64,
    pub delta_lml_min: f64,
    pub delta_lml_max: f64,
    pub rmse_mean: f64,
    pub rmse_min: f64,
    pub rmse_max: f64,
}

/// Marginal-likelihood and posterior-mean comparison on the toy model:
/// outputs drawn from N(sin x, 1), unit-variance Gaussian likelihood, unit
/// kernels, no hyperparameter fitting.
pub fn toy_fig4(
    n: usize,
    n_star: usize,
    trials: usize,
    ms: &[usize],
    thetas: &[f64],
    families: &[KernelFamily],
    seed: u64,
) -> Result<Vec<Fig4Row>> {
    let x = toy_inputs(n);
    let span = 2.0 * std::f64::consts::PI;

    // Assignments per m are fixed by the inputs.
    let assignments: Vec<(usize, Vec<usize>, Array2<f64>)> = ms
        .iter()
        .map(|&m| {
            let a = assign_grid(x.view(), &toy_grid(m)).expect("toy assignment");
            (m, a.omega, a.centers)
        })
        .collect();

    let mut configs = Vec::new();
    for &family in families {
        for &theta in thetas {
            configs.push((family, theta));
        }
    }

    let rows: Result<Vec<Vec<Fig4Row>>> = configs
        .into_par_iter()
        .map(|(family, theta)| {
            let spec = KernelSpec::unit_with_length_scale(family, theta)?;
            let likelihood = Likelihood::Gaussian { variance: 1.0 };

            // K_ff + I factored once per (family, theta); reused by trials.
            let mut k_ff = gram(&spec, x.view(), x.view(), true)?;
            for i in 0..n {
                k_ff[[i, i]] += 1.0;
            }
            let factor = chol_psd(k_ff.view(), BASE_JITTER)?;
            let log_det = factor.log_det();

            // Accumulators per m: (exact_sum, exact_max, dl_sum, dl_min, dl_max, r_sum, r_min, r_max)
            let mut acc =
                vec![(0.0_f64, 0.0_f64, 0.0_f64, f64::INFINITY, 0.0_f64, 0.0_f64, f64::INFINITY, 0.0_f64); ms.len()];

            for trial in 0..trials {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
                let y = Array1::from_shape_fn(n, |i| {
                    x[[i, 0]].sin() + rng.sample::<f64, _>(StandardNormal)
                });
                let x_star =
                    Array2::from_shape_fn((n_star, 1), |_| rng.gen_range(0.0..span));

                let alpha = factor.solve_vec(y.view())?;
                let lml = -0.5 * n as f64 * LN_2PI - 0.5 * log_det - 0.5 * y.dot(&alpha);
                let k_star_f = gram(&spec, x_star.view(), x.view(), false)?;
                let mu_ref = k_star_f.dot(&alpha);

                for (k, (m, omega, centers)) in assignments.iter().enumerate() {
                    let (means, vars, counts) = summarize_outputs(y.view(), omega, centers.nrows())?;
                    let summary = SummarizedData::new(
                        centers.clone(),
                        means,
                        vars,
                        counts,
                        Some(omega.clone()),
                    )?;
                    let q = lml_q(&summary, &spec, &likelihood, 0.0)?;
                    let v = variance_vector(&summary, &likelihood)?;
                    // log p(y | W u)|_{u = ybar} from the complete outputs.
                    let mut log_p = -0.5 * n as f64 * LN_2PI;
                    for (i, &j) in omega.iter().enumerate() {
                        let d = y[i] - summary.stats[j];
                        log_p -= 0.5 * d * d;
                    }
                    let corrected = q
                        + log_p
                        + 0.5 * summary.len() as f64 * LN_2PI
                        + 0.5 * v.log_det();
                    let e_exact =
                        crate::quasi::gaussian_aggregated_lml(&summary, &spec, &likelihood, 0.0)?;

                    let mu_q = posterior_q_mean(&summary, x_star.view(), &spec, &likelihood, 0.0)?;
                    let r = rmse(mu_ref.view(), mu_q.view());
                    let exact_resid = (corrected - e_exact).abs();
                    let dl = (corrected - lml).abs();

                    let a = &mut acc[k];
                    a.0 += exact_resid;
                    a.1 = a.1.max(exact_resid);
                    a.2 += dl;
                    a.3 = a.3.min(dl);
                    a.4 = a.4.max(dl);
                    a.5 += r;
                    a.6 = a.6.min(r);
                    a.7 = a.7.max(r);
                    let _ = m;
                }
            }

            let t = trials as f64;
            Ok(ms
                .iter()
                .enumerate()
                .map(|(k, &m)| Fig4Row {
                    family: family.to_string(),
                    theta,
                    m,
                    delta_lml_exact_mean: acc[k].0 / t,
                    delta_lml_exact_max: acc[k].1,
                    delta_lml_mean: acc[k].2 / t,
                    delta_lml_min: acc[k].3,
                    delta_lml_max: acc[k].4,
                    rmse_mean: acc[k].5 / t,
                    rmse_min: acc[k].6,
                    rmse_max: acc[k].7,
                })
                .collect())
        })
        .collect();

    Ok(rows?.into_iter().flatten().collect())
}

/// Default m sweep of the error-scale toy. The bound computation at n = 1000
/// is O(n³)-ish per configuration, so the list stays modest.
pub const TOY_ETA_MS: [usize; 8] = [2, 4, 8, 16, 32, 64, 128, 256];
/// Default m sweep of the marginal-likelihood/posterior toy.
pub const TOY_FIG4_MS: [usize; 5] = [8, 16, 32, 64, 128];
/// Default length scales of both toys.
pub const TOY_THETAS: [f64; 3] = [0.1, 1.0, 10.0];
/// Grid sizes of the approximation-performance table.
pub const TABLE2_GRIDS: [f64; 6] = [1.6, 0.8, 0.4, 0.2, 0.1, 0.05];

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 2), |_| rng.gen_range(0.0..4.0));
        let y = Array1::from_shape_fn(n, |i| {
            let (a, b): (f64, f64) = (x[[i, 0]], x[[i, 1]]);
            a.sin() + 0.5 * b.cos() + 0.1 * rng.sample::<f64, _>(StandardNormal)
        });
        Dataset::new(x, y, vec!["a".into(), "b".into()]).unwrap()
    }

    fn base_config() -> ExperimentConfig {
        ExperimentConfig {
            dataset_path: String::new(),
            target_attribute: "y".into(),
            grid_cell: 0.5,
            likelihood: "gaussian".into(),
            kernel_family: "gaussian".into(),
            n_train: 120,
            trials: 3,
            seed: 7,
            output_dir: String::new(),
            input_columns: vec!["a".into(), "b".into()],
            grid_bounds: Some(vec![(0.0, 4.0), (0.0, 4.0)]),
            normalization: "test".into(),
            sigma2_fixed: None,
            fit_kernel_noise: None,
            poisson_floor: None,
            n_test: Some(60),
        }
    }

    #[test]
    fn eval_emits_one_record_per_trial_plus_aggregate() {
        let ds = synthetic_dataset(200, 3);
        let cfg = base_config();
        let report = run_eval(&ds, &cfg, EvalMode::Prediction).unwrap();
        assert_eq!(report.per_trial.len(), 3);
        let mean = report.per_trial.iter().map(|t| t.nrmse).sum::<f64>() / 3.0;
        assert!((report.mean_nrmse - mean).abs() < 1e-12);
    }

    #[test]
    fn eval_is_deterministic() {
        let ds = synthetic_dataset(200, 3);
        let cfg = base_config();
        let a = run_eval(&ds, &cfg, EvalMode::Prediction).unwrap();
        let b = run_eval(&ds, &cfg, EvalMode::Prediction).unwrap();
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn constant_mean_prediction_scores_unit_nrmse() {
        // A dataset whose outputs carry no input signal: predictions collapse
        // to the constant mean and the normalized RMSE lands near 1.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 300;
        let x = Array2::from_shape_fn((n, 2), |_| rng.gen_range(0.0..4.0));
        let y = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        let ds = Dataset::new(x, y, vec!["a".into(), "b".into()]).unwrap();
        let mut cfg = base_config();
        cfg.n_train = 150;
        cfg.n_test = Some(150);
        cfg.trials = 2;
        let report = run_eval(&ds, &cfg, EvalMode::Prediction).unwrap();
        assert!(
            (report.mean_nrmse - 1.0).abs() < 0.15,
            "nrmse = {}",
            report.mean_nrmse
        );
    }

    #[test]
    fn degenerate_split_is_an_error() {
        let ds = synthetic_dataset(50, 3);
        let mut cfg = base_config();
        cfg.n_train = 50;
        assert!(matches!(
            run_eval(&ds, &cfg, EvalMode::Prediction),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn tiny_grid_matches_complete_posterior() {
        // With cells far smaller than the point spacing every point sits in
        // its own cell and the representative is within float noise of it.
        let ds = synthetic_dataset(40, 11);
        let mut cfg = base_config();
        cfg.n_train = 25;
        cfg.n_test = Some(15);
        cfg.trials = 1;
        cfg.grid_cell = 1e-8;
        cfg.normalization = "train".into();
        let report = run_eval(&ds, &cfg, EvalMode::Approximation).unwrap();
        assert!(
            report.mean_nrmse < 1e-6,
            "approximation nrmse = {}",
            report.mean_nrmse
        );
    }

    #[test]
    fn toy_inputs_cover_the_interval() {
        let x = toy_inputs(5);
        assert_eq!(x[[0, 0]], 0.0);
        assert!((x[[4, 0]] - 2.0 * std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn poisson_pipeline_end_to_end() {
        // Counts with a smooth log-rate over space; the Poisson path must
        // transform, fit, and predict better than the constant-rate baseline.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 400;
        let x = Array2::from_shape_fn((n, 2), |_| rng.gen_range(0.0..4.0));
        let y = Array1::from_shape_fn(n, |i| {
            let (a, b): (f64, f64) = (x[[i, 0]], x[[i, 1]]);
            let rate = (1.2 + (a * 1.1).sin() + 0.5 * b.cos()).exp();
            // Poisson by inversion.
            let l = (-rate).exp();
            let mut k = 0u64;
            let mut p = 1.0;
            loop {
                p *= rng.gen::<f64>();
                if p <= l {
                    return k as f64;
                }
                k += 1;
            }
        });
        let ds = Dataset::new(x, y, vec!["a".into(), "b".into()]).unwrap();
        let mut cfg = base_config();
        cfg.likelihood = "poisson".into();
        cfg.kernel_family = "laplacian".into();
        cfg.n_train = 250;
        cfg.n_test = Some(120);
        cfg.trials = 2;
        cfg.grid_cell = 0.4;
        cfg.poisson_floor = Some(1e-3);
        let report = run_eval(&ds, &cfg, EvalMode::Prediction).unwrap();
        assert!(
            report.mean_nrmse < 0.9,
            "poisson prediction nrmse = {}",
            report.mean_nrmse
        );

        // Approximation mode is Gaussian-only.
        assert!(matches!(
            run_eval(&ds, &cfg, EvalMode::Approximation),
            Err(Error::Unsupported(_))
        ));
    }
}
