//! Command-line surface: summarization, fitting, prediction, evaluation,
//! bound reports, and the scripted toy sweeps.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sqgp::data::{self, load_csv};
use sqgp::error::Error;
use sqgp::experiment::{
    self, run_bounds, run_eval, run_grid_sweep, toy_eta_sweep, toy_fig4, EvalMode,
    ExperimentConfig, TABLE2_GRIDS, TOY_ETA_MS, TOY_FIG4_MS, TOY_THETAS,
};
use sqgp::hyperopt::ObjectiveMode;
use sqgp::kernel::KernelFamily;
use sqgp::quasi::{posterior_q_mean_and_variance, predict_observable_mean};
use sqgp::summary::{summarize_dataset, transform_summary_with_floor, GridSpec};

#[derive(Parser)]
#[command(
    name = "sqgp",
    about = "Gaussian process regression from summarized data, with approximation-error diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus command-line overrides shared by the dataset commands.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Target attribute (column name or derived attribute).
    #[arg(long)]
    target: Option<String>,
    /// Grid cell size (same in every dimension).
    #[arg(long)]
    grid: Option<f64>,
    /// Kernel family: laplacian | gaussian.
    #[arg(long)]
    kernel: Option<String>,
    /// Likelihood: gaussian | poisson.
    #[arg(long)]
    likelihood: Option<String>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Hold the Gaussian observation variance at this value.
    #[arg(long)]
    sigma2_fixed: Option<f64>,
    /// Clamp non-positive Poisson cell means to this floor.
    #[arg(long)]
    poisson_floor: Option<f64>,
    /// Use the paper's California lat/lon grid bounds.
    #[arg(long, default_value_t = false)]
    california_bounds: bool,
    /// Cap the number of test points per trial.
    #[arg(long)]
    n_test: Option<usize>,
}

impl ConfigArgs {
    fn build(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg: ExperimentConfig = match &self.config {
            Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
            None => ExperimentConfig {
                dataset_path: String::new(),
                target_attribute: String::new(),
                grid_cell: 1.0,
                likelihood: "gaussian".into(),
                kernel_family: "laplacian".into(),
                n_train: 1000,
                trials: 1,
                seed: 0,
                output_dir: "out".into(),
                input_columns: data::default_input_columns(),
                grid_bounds: None,
                normalization: "test".into(),
                sigma2_fixed: None,
                fit_kernel_noise: None,
                poisson_floor: None,
                n_test: None,
            },
        };
        if let Some(v) = &self.data {
            cfg.dataset_path = v.display().to_string();
        }
        if let Some(v) = &self.target {
            cfg.target_attribute = v.clone();
        }
        if let Some(v) = self.grid {
            cfg.grid_cell = v;
        }
        if let Some(v) = &self.kernel {
            cfg.kernel_family = v.clone();
        }
        if let Some(v) = &self.likelihood {
            cfg.likelihood = v.clone();
        }
        if let Some(v) = self.n_train {
            cfg.n_train = v;
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.display().to_string();
        }
        if let Some(v) = self.sigma2_fixed {
            cfg.sigma2_fixed = Some(v);
        }
        if let Some(v) = self.poisson_floor {
            cfg.poisson_floor = Some(v);
        }
        if let Some(v) = self.n_test {
            cfg.n_test = Some(v);
        }
        if self.california_bounds {
            cfg.grid_bounds = Some(experiment::california_bounds());
        }
        if cfg.dataset_path.is_empty() {
            return Err(Error::InvalidArgument(
                "no dataset path (use --data or a config file)".into(),
            ));
        }
        if cfg.target_attribute.is_empty() {
            return Err(Error::InvalidArgument(
                "no target attribute (use --target or a config file)".into(),
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Grid-summarize a dataset and write the summary as CSV and JSON.
    Summarize(ConfigArgs),
    /// Fit hyperparameters to the summarized dataset and write the model.
    Fit(ConfigArgs),
    /// Fit, then write per-test-point predictions for trial 0.
    Predict(ConfigArgs),
    /// Run seeded trials and report normalized RMSE.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// approximation (vs. complete-data posterior) | prediction (vs. outputs).
        #[arg(long, default_value = "prediction")]
        mode: String,
    },
    /// Approximation-error bound report for the configured summarization.
    Bounds(ConfigArgs),
    /// Toy error-scale sweep: eta over m for both kernels and three length scales.
    ToyEta {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Toy marginal-likelihood/posterior comparison over m, both kernels.
    ToyFig4 {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        n_star: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Approximation-performance sweep over the six grid sizes.
    Table2 {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) | Error::Unsupported(_) | Error::Json(_) => 2,
        Error::Data(_) | Error::Csv(_) | Error::Io(_) => 3,
        Error::NotPositiveDefinite { .. } | Error::Numerical(_) | Error::DimensionMismatch(_) => 4,
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, Error> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)?)?;
    Ok(path)
}

#[derive(Serialize)]
struct ModelReport {
    kernel_family: String,
    length_scale: f64,
    signal_variance: f64,
    noise_variance: f64,
    likelihood: String,
    sigma2: Option<f64>,
    mean_const: f64,
    objective_mode: String,
    negative_log_marginal_likelihood: f64,
    iterations: usize,
    converged: bool,
    gradient_norm: f64,
    cells: usize,
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<sqgp::summary::Dataset, Error> {
    let (ds, rejected) = load_csv(
        Path::new(&cfg.dataset_path),
        &cfg.input_columns,
        &cfg.target_attribute,
    )?;
    if rejected > 0 {
        eprintln!("warning: rejected {rejected} row(s) with missing or non-finite values");
    }
    println!(
        "loaded {} rows x {} input dims from {}",
        ds.len(),
        ds.dim(),
        cfg.dataset_path
    );
    Ok(ds)
}

fn grid_from(cfg: &ExperimentConfig, ds: &sqgp::summary::Dataset) -> Result<GridSpec, Error> {
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
    GridSpec::uniform(bounds, cfg.grid_cell)
}

fn cmd_summarize(cfg: &ExperimentConfig) -> Result<(), Error> {
    let ds = load_dataset(cfg)?;
    let grid = grid_from(cfg, &ds)?;
    let summary = summarize_dataset(&ds, &grid)?;
    let dir = Path::new(&cfg.output_dir);
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("summary.csv");
    let file = fs::File::create(&csv_path)?;
    data::write_summary_csv(&summary, file)?;
    let json_path = write_json(dir, "summary.json", &summary)?;
    println!(
        "summarized {} points into {} cells (alpha = {:.6}); wrote {} and {}",
        ds.len(),
        summary.len(),
        grid.alpha(),
        csv_path.display(),
        json_path.display()
    );
    Ok(())
}

fn fit_first_trial(
    cfg: &ExperimentConfig,
) -> Result<
    (
        sqgp::experiment::TrialSplit,
        sqgp::summary::SummarizedData,
        sqgp::hyperopt::FittedModel,
    ),
    Error,
> {
    let ds = load_dataset(cfg)?;
    let split = experiment::split_trial(&ds, cfg.n_train.min(ds.len() - 1), cfg.n_test, cfg.seed, 0)?;
    let grid = grid_from(cfg, &ds)?;
    let train = sqgp::summary::Dataset::new(
        split.x_train.clone(),
        split.y_train.clone(),
        ds.attribute_names.clone(),
    )?;
    let summary = summarize_dataset(&train, &grid)?;
    let likelihood = cfg.parse_likelihood()?;
    let model = sqgp::hyperopt::fit_summary(&summary, &likelihood, &cfg.fit_config()?)?;
    if !model.opt.converged {
        eprintln!(
            "warning: optimizer stopped before convergence (projected gradient {:.3e}); using best iterate",
            model.opt.gradient_norm
        );
    }
    Ok((split, summary, model))
}

fn model_report(summary_len: usize, model: &sqgp::hyperopt::FittedModel) -> ModelReport {
    ModelReport {
        kernel_family: model.kernel.family.to_string(),
        length_scale: model.kernel.length_scale,
        signal_variance: model.kernel.signal_variance,
        noise_variance: model.kernel.noise_variance,
        likelihood: match model.likelihood {
            sqgp::quasi::Likelihood::Gaussian { .. } => "gaussian".into(),
            sqgp::quasi::Likelihood::Poisson => "poisson".into(),
        },
        sigma2: match model.likelihood {
            sqgp::quasi::Likelihood::Gaussian { variance } => Some(variance),
            sqgp::quasi::Likelihood::Poisson => None,
        },
        mean_const: model.mean_const,
        objective_mode: match model.mode {
            ObjectiveMode::QuasiQ => "quasi".into(),
            ObjectiveMode::GaussianAggregated => "gaussian-aggregated".into(),
            ObjectiveMode::CompleteGaussian => "complete".into(),
        },
        negative_log_marginal_likelihood: model.opt.objective,
        iterations: model.opt.iterations,
        converged: model.opt.converged,
        gradient_norm: model.opt.gradient_norm,
        cells: summary_len,
    }
}

fn cmd_fit(cfg: &ExperimentConfig) -> Result<(), Error> {
    let (_, summary, model) = fit_first_trial(cfg)?;
    let report = model_report(summary.len(), &model);
    let path = write_json(Path::new(&cfg.output_dir), "model.json", &report)?;
    println!(
        "fitted {} kernel on {} cells: theta = {:.6}, c = {:.6}, noise = {:.3e}{}; wrote {}",
        report.kernel_family,
        report.cells,
        report.length_scale,
        report.signal_variance,
        report.noise_variance,
        report
            .sigma2
            .map(|s| format!(", sigma2 = {s:.6}"))
            .unwrap_or_default(),
        path.display()
    );
    Ok(())
}

fn cmd_predict(cfg: &ExperimentConfig) -> Result<(), Error> {
    let (split, summary, model) = fit_first_trial(cfg)?;
    let likelihood = cfg.parse_likelihood()?;
    let summary_u = transform_summary_with_floor(&summary, &likelihood, cfg.poisson_floor)?;
    let (mean, variance) = posterior_q_mean_and_variance(
        &summary_u,
        split.x_test.view(),
        &model.kernel,
        &model.likelihood,
        model.mean_const,
    )?;
    let pred = predict_observable_mean(mean.view(), &model.likelihood);

    let dir = Path::new(&cfg.output_dir);
    fs::create_dir_all(dir)?;
    let path = dir.join("predictions.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let d = split.x_test.ncols();
    let mut header: Vec<String> = (1..=d).map(|k| format!("x_{k}")).collect();
    header.extend([
        "posterior_mean".to_string(),
        "posterior_var".to_string(),
        "prediction".to_string(),
        "actual".to_string(),
    ]);
    w.write_record(&header)?;
    for i in 0..split.x_test.nrows() {
        let mut rec: Vec<String> = split
            .x_test
            .row(i)
            .iter()
            .map(|v| v.to_string())
            .collect();
        rec.push(mean[i].to_string());
        rec.push(variance[i].to_string());
        rec.push(pred[i].to_string());
        rec.push(split.y_test[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    println!(
        "wrote {} predictions to {}",
        split.x_test.nrows(),
        path.display()
    );
    Ok(())
}

fn cmd_eval(cfg: &ExperimentConfig, mode: &str) -> Result<(), Error> {
    let mode = match mode {
        "approximation" => EvalMode::Approximation,
        "prediction" => EvalMode::Prediction,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown eval mode {other:?} (expected approximation | prediction)"
            )))
        }
    };
    let ds = load_dataset(cfg)?;
    let report = run_eval(&ds, cfg, mode)?;
    let path = write_json(Path::new(&cfg.output_dir), "metrics.json", &report)?;
    for t in &report.per_trial {
        println!(
            "trial {:>3}: nrmse = {:.4} ({} cells{})",
            t.trial,
            t.nrmse,
            t.cells,
            if t.fit_converged { "" } else { ", fit not converged" }
        );
    }
    println!(
        "aggregate over {} trial(s): nrmse = {:.4} +/- {:.4}; wrote {}",
        report.per_trial.len(),
        report.mean_nrmse,
        report.std_nrmse,
        path.display()
    );
    Ok(())
}

fn cmd_bounds(cfg: &ExperimentConfig) -> Result<(), Error> {
    let ds = load_dataset(cfg)?;
    let report = run_bounds(&ds, cfg)?;
    let path = write_json(Path::new(&cfg.output_dir), "bound_report.json", &report)?;
    println!(
        "bound report (m = {}, n = {}): beta = {:.4e}, gamma = {:.4e}, kappa = {:.4e}, eta = {:.4e}; wrote {}",
        report.m,
        report.n,
        report.beta,
        report.gamma,
        report.kappa,
        report.eta,
        path.display()
    );
    Ok(())
}

fn cmd_toy_eta(n: usize, out: &Path) -> Result<(), Error> {
    let rows = toy_eta_sweep(
        n,
        &TOY_ETA_MS,
        &TOY_THETAS,
        &[KernelFamily::Laplacian, KernelFamily::Gaussian],
    )?;
    fs::create_dir_all(out)?;
    let path = out.join("eta_curve.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["family", "theta", "m", "kappa", "lambda1", "lambda2", "xi_star", "eta"])?;
    for r in &rows {
        w.write_record(&[
            r.family.clone(),
            r.theta.to_string(),
            r.m.to_string(),
            r.kappa.to_string(),
            r.lambda1.to_string(),
            r.lambda2.to_string(),
            r.xi_star.to_string(),
            r.eta.to_string(),
        ])?;
    }
    w.flush()?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn cmd_toy_fig4(n: usize, n_star: usize, trials: usize, seed: u64, out: &Path) -> Result<(), Error> {
    let rows = toy_fig4(
        n,
        n_star,
        trials,
        &TOY_FIG4_MS,
        &TOY_THETAS,
        &[KernelFamily::Laplacian, KernelFamily::Gaussian],
        seed,
    )?;
    fs::create_dir_all(out)?;
    let path = out.join("fig4.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "family",
        "theta",
        "m",
        "delta_lml_exact_mean",
        "delta_lml_exact_max",
        "delta_lml_mean",
        "delta_lml_min",
        "delta_lml_max",
        "rmse_mean",
        "rmse_min",
        "rmse_max",
    ])?;
    for r in &rows {
        w.write_record(&[
            r.family.clone(),
            r.theta.to_string(),
            r.m.to_string(),
            r.delta_lml_exact_mean.to_string(),
            r.delta_lml_exact_max.to_string(),
            r.delta_lml_mean.to_string(),
            r.delta_lml_min.to_string(),
            r.delta_lml_max.to_string(),
            r.rmse_mean.to_string(),
            r.rmse_min.to_string(),
            r.rmse_max.to_string(),
        ])?;
    }
    w.flush()?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn cmd_table2(cfg: &ExperimentConfig) -> Result<(), Error> {
    let ds = load_dataset(cfg)?;
    let mut cfg = cfg.clone();
    if cfg.normalization != "train" {
        // The approximation table normalizes by the training outputs.
        cfg.normalization = "train".into();
    }
    let reports = run_grid_sweep(&ds, &cfg, &TABLE2_GRIDS)?;
    let dir = Path::new(&cfg.output_dir);
    fs::create_dir_all(dir)?;
    let path = dir.join("table2.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["target", "family", "grid", "trial", "nrmse", "cells"])?;
    for rep in &reports {
        for t in &rep.per_trial {
            w.write_record(&[
                cfg.target_attribute.clone(),
                cfg.kernel_family.clone(),
                rep.grid_cell.to_string(),
                t.trial.to_string(),
                t.nrmse.to_string(),
                t.cells.to_string(),
            ])?;
        }
    }
    w.flush()?;
    let json_path = write_json(dir, "table2.json", &reports)?;
    for rep in &reports {
        println!(
            "grid {:>5}: mean nrmse = {:.4} +/- {:.4}",
            rep.grid_cell, rep.mean_nrmse, rep.std_nrmse
        );
    }
    println!("wrote {} and {}", path.display(), json_path.display());
    Ok(())
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Summarize(args) => cmd_summarize(&args.build()?),
        Command::Fit(args) => cmd_fit(&args.build()?),
        Command::Predict(args) => cmd_predict(&args.build()?),
        Command::Eval { config, mode } => cmd_eval(&config.build()?, mode),
        Command::Bounds(args) => cmd_bounds(&args.build()?),
        Command::ToyEta { n, out } => cmd_toy_eta(*n, out),
        Command::ToyFig4 {
            n,
            n_star,
            trials,
            seed,
            out,
        } => cmd_toy_fig4(*n, *n_star, *trials, *seed, out),
        Command::Table2 { config } => cmd_table2(&config.build()?),
    }
}

fn main() -> ExitCode {
    // Trials parallelize across the worker pool; keep BLAS single-threaded
    // underneath for reproducible, non-oversubscribed runs.
    if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    }
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
