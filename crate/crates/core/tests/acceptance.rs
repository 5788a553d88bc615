//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities (run with `--nocapture` to see them).
//!
//! Two criteria contain sub-assertions that are mathematically unattainable
//! and fail honestly with a quantified diagnostic: the scaled chi-square tail
//! is not monotone at the xi0 boundary for the very first step m = 1 -> 2
//! (criterion 4), and the toy error-scale sweep violates monotonicity and the
//! length-scale ordering at the m ∈ {2, 4} edge where the Schur-complement
//! eigenvalue dominates for any kappa route (criterion 5). Criterion 7 needs
//! the public California housing CSV (see `california_csv` below for the
//! lookup locations) and fails with instructions when it is absent.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sqgp::bounds::{epsilon, kappa, schur_complement};
use sqgp::experiment::{
    run_eval, run_grid_sweep, toy_eta_sweep, toy_fig4, EvalMode, ExperimentConfig,
    TABLE2_GRIDS, TOY_ETA_MS, TOY_FIG4_MS, TOY_THETAS,
};
use sqgp::gp::{assignment_matrix, complete_posterior_gaussian};
use sqgp::hyperopt::{fit_complete, fit_summary, summary_objective, FitConfig, ObjectiveMode};
use sqgp::kernel::{gram, kernel_eval, zeta1, zeta2, KernelFamily, KernelSpec};
use sqgp::linalg::{chol_psd, eig_extremes, BASE_JITTER};
use sqgp::quasi::{gaussian_aggregated_lml, lml_q, posterior_q, variance_vector, Likelihood};
use sqgp::special::{chi2_upper, xi0};
use sqgp::summary::{summarize_outputs, SummarizedData};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn single_threaded_blas() {
    if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    }
}

/// Random 1-D grid summarization with every cell occupied.
struct Instance {
    x: Array2<f64>,
    y: Array1<f64>,
    omega: Vec<usize>,
    summary: SummarizedData,
    spec: KernelSpec,
    sigma2: f64,
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, family: KernelFamily) -> Instance {
    let spec = KernelSpec::new(
        family,
        rng.gen_range(0.6..1.6),
        rng.gen_range(0.5..2.0),
        0.0,
    )
    .unwrap();
    let sigma2 = rng.gen_range(0.3..1.5);
    loop {
        let x = Array2::from_shape_fn((n, 1), |_| rng.gen_range(0.0..(m as f64)));
        let omega: Vec<usize> = (0..n)
            .map(|i| (x[[i, 0]].floor() as usize).min(m - 1))
            .collect();
        let mut counts = vec![0usize; m];
        for &j in &omega {
            counts[j] += 1;
        }
        if counts.iter().any(|&c| c == 0) {
            continue;
        }
        let y = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        let centers = Array2::from_shape_fn((m, 1), |(j, _)| j as f64 + 0.5);
        let (means, vars, counts) = summarize_outputs(y.view(), &omega, m).unwrap();
        let summary =
            SummarizedData::new(centers, means, vars, counts, Some(omega.clone())).unwrap();
        return Instance {
            x,
            y,
            omega,
            summary,
            spec,
            sigma2,
        };
    }
}

// ---------------------------------------------------------------------------
// 1. Exact aggregated-marginal identity for Gaussian observations
// ---------------------------------------------------------------------------
#[test]
fn acceptance_1_exact_gaussian_identity() {
    single_threaded_blas();
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    let mut worst = 0.0_f64;
    for trial in 0..50 {
        let n = rng.gen_range(4..=50);
        let m = rng.gen_range(1..=10.min(n));
        let family = if trial % 2 == 0 {
            KernelFamily::Laplacian
        } else {
            KernelFamily::Gaussian
        };
        let inst = random_instance(&mut rng, n, m, family);
        let lik = Likelihood::Gaussian {
            variance: inst.sigma2,
        };
        let e = gaussian_aggregated_lml(&inst.summary, &inst.spec, &lik, 0.0).unwrap();
        let q = lml_q(&inst.summary, &inst.spec, &lik, 0.0).unwrap();
        // log p(y | W u)|_{u = ybar} from the complete outputs.
        let mut log_p = -0.5 * n as f64 * (LN_2PI + inst.sigma2.ln());
        for (i, &j) in inst.omega.iter().enumerate() {
            let d = inst.y[i] - inst.summary.stats[j];
            log_p -= 0.5 * d * d / inst.sigma2;
        }
        let v = variance_vector(&inst.summary, &lik).unwrap();
        let resid = e - q - log_p - 0.5 * m as f64 * LN_2PI - 0.5 * v.log_det();
        worst = worst.max(resid.abs());
    }
    assert!(
        worst < 1e-8,
        "ACCEPTANCE 1 (exact Gaussian identity): FAIL — worst residual {worst:e}"
    );
    println!("ACCEPTANCE 1 (exact Gaussian identity): PASS — worst residual {worst:.3e} over 50 instances");
}

// ---------------------------------------------------------------------------
// 2. Covariance perturbation bounds are sound
// ---------------------------------------------------------------------------
#[test]
fn acceptance_2_perturbation_bound_soundness() {
    single_threaded_blas();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let configs: Vec<(KernelFamily, f64, Vec<f64>, Vec<f64>)> = vec![
        (KernelFamily::Laplacian, 0.3, vec![0.0, 0.0], vec![1.0, 0.5]),
        (KernelFamily::Laplacian, 1.0, vec![2.0, -1.0], vec![-0.5, 0.7]),
        (KernelFamily::Laplacian, 0.05, vec![0.3, 0.3], vec![0.3, 0.35]),
        (KernelFamily::Gaussian, 0.3, vec![0.0, 0.0], vec![1.0, 0.5]),
        (KernelFamily::Gaussian, 0.8, vec![2.0, -1.0], vec![-0.5, 0.7]),
        (KernelFamily::Gaussian, 0.05, vec![0.3, 0.3], vec![0.3, 0.35]),
    ];
    let mut checked = 0_usize;
    for (family, alpha, z, z2) in configs {
        let spec = KernelSpec::new(family, 1.3, 2.0, 0.0).unwrap();
        let z = Array1::from_vec(z);
        let z2 = Array1::from_vec(z2);
        let b1 = spec.signal_variance
            * zeta1(family, spec.length_scale, alpha, z.view(), z2.view()).unwrap();
        let b2 = spec.signal_variance
            * zeta2(family, spec.length_scale, alpha, z.view(), z2.view()).unwrap();
        let kzz = kernel_eval(&spec, z.view(), z2.view()).unwrap();
        for _ in 0..10_000 {
            // Draw strictly inside the alpha-balls.
            let draw = |rng: &mut ChaCha8Rng, c: &Array1<f64>| loop {
                let off: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm2: f64 = off.iter().map(|v| v * v).sum();
                if norm2 <= 1.0 {
                    let r = rng.gen_range(0.0..0.999_999);
                    return c + &(Array1::from_vec(off) * (alpha * r));
                }
            };
            let x = draw(&mut rng, &z);
            let x2 = draw(&mut rng, &z2);
            let kxx = kernel_eval(&spec, x.view(), x2.view()).unwrap();
            assert!(
                (kxx - kzz).abs() < b1,
                "ACCEPTANCE 2: FAIL — zeta1 violated ({family}, alpha {alpha}): |dk| = {} vs {b1}",
                (kxx - kzz).abs()
            );
            let kxs = kernel_eval(&spec, x.view(), z2.view()).unwrap();
            assert!(
                (kxs - kzz).abs() < b2,
                "ACCEPTANCE 2: FAIL — zeta2 violated ({family}, alpha {alpha}): |dk| = {} vs {b2}",
                (kxs - kzz).abs()
            );
            checked += 1;
        }
    }
    println!("ACCEPTANCE 2 (perturbation bound soundness): PASS — {checked} draws, no violation");
}

// ---------------------------------------------------------------------------
// 3. Chi-square tail bound on the conditional mass (Monte Carlo)
// ---------------------------------------------------------------------------
#[test]
fn acceptance_3_tail_bound_monte_carlo() {
    single_threaded_blas();
    let mut rng = ChaCha8Rng::seed_from_u64(203);
    let n_samples = 100_000_usize;
    let mut nonvacuous = 0_usize;
    for trial in 0..20 {
        let n = rng.gen_range(4..=8);
        let m = rng.gen_range(2..=3.min(n - 1));
        let family = if trial % 2 == 0 {
            KernelFamily::Laplacian
        } else {
            KernelFamily::Gaussian
        };
        let inst = random_instance(&mut rng, n, m, family);
        let z = inst.summary.features.view();
        let k_uu = gram(&inst.spec, z, z, true).unwrap();
        let k_fu = gram(&inst.spec, inst.x.view(), z, false).unwrap();
        let w = assignment_matrix(&inst.omega, m).unwrap();

        let kappa_val = kappa(w.view(), k_fu.view(), k_uu.view()).unwrap();
        let lambda1 = eig_extremes(k_uu.view()).unwrap().1;
        let schur = schur_complement(inst.x.view(), z, &inst.spec).unwrap();
        let lambda2 = eig_extremes(schur.view()).unwrap().1.max(0.0);

        let xi = if trial % 2 == 0 { xi0() } else { 3.0 };
        let delta2 = (xi * lambda2).sqrt();
        let delta1 = if kappa_val.is_infinite() {
            delta2
        } else {
            (xi * lambda1 / kappa_val).sqrt() + delta2
        };
        let eps = epsilon(delta1, delta2, m, n, kappa_val, lambda1, lambda2).unwrap();
        if eps < 0.9 {
            nonvacuous += 1;
        }

        // Joint samples from p(u) p(f | u).
        let u_factor = chol_psd(k_uu.view(), BASE_JITTER).unwrap();
        let s_factor = chol_psd(schur.view(), BASE_JITTER).unwrap();
        let interp = u_factor.solve_mat(k_fu.t().to_owned().view()).unwrap(); // K_uu^{-1} K_uf
        let mut exceed = 0_usize;
        let threshold = (n as f64).sqrt() * delta1;
        for _ in 0..n_samples {
            let eps_u = Array1::from_shape_fn(m, |_| rng.sample::<f64, _>(StandardNormal));
            let u = u_factor.lower().dot(&eps_u);
            let mean_f = interp.t().dot(&u);
            let eps_f = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
            let f = &mean_f + &s_factor.lower().dot(&eps_f);
            let wu = w.dot(&u);
            let dist = (&f - &wu).mapv(|d| d * d).sum().sqrt();
            if dist > threshold {
                exceed += 1;
            }
        }
        let p_hat = exceed as f64 / n_samples as f64;
        let stderr = (p_hat * (1.0 - p_hat) / n_samples as f64).sqrt();
        assert!(
            p_hat <= eps + 3.0 * stderr + 1e-12,
            "ACCEPTANCE 3: FAIL — trial {trial}: empirical {p_hat} vs bound {eps} (+3se {stderr})"
        );
    }
    assert!(nonvacuous >= 5, "too few non-vacuous bounds ({nonvacuous}/20)");
    println!(
        "ACCEPTANCE 3 (tail bound Monte Carlo): PASS — 20 instances, {nonvacuous} with bound < 0.9"
    );
}

// ---------------------------------------------------------------------------
// 4. Scaled-tail monotonicity and closed forms
// ---------------------------------------------------------------------------
#[test]
fn acceptance_4_scaled_tail_monotonicity_and_closed_forms() {
    single_threaded_blas();
    // Closed forms first.
    for i in 0..80 {
        let b = 0.25 * i as f64;
        let f2 = chi2_upper(2, b).unwrap();
        assert!(
            (f2 - (-b / 2.0).exp()).abs() < 1e-10,
            "ACCEPTANCE 4: FAIL — F(2, {b}) off closed form"
        );
        let f4 = chi2_upper(4, b).unwrap();
        assert!(
            (f4 - (-b / 2.0).exp() * (1.0 + b / 2.0)).abs() < 1e-10,
            "ACCEPTANCE 4: FAIL — F(4, {b}) off closed form"
        );
    }

    // Monotonicity in m for xi in {xi0, 2, 5} over m = 1..200, as stated.
    let mut violations = Vec::new();
    for xi in [xi0(), 2.0, 5.0] {
        let mut prev = chi2_upper(1, xi).unwrap();
        for m in 2..=200_u64 {
            let cur = chi2_upper(m, xi * m as f64).unwrap();
            if cur > prev + 1e-13 {
                violations.push((xi, m, prev, cur));
            }
            prev = cur;
        }
    }
    assert!(
        violations.is_empty(),
        "ACCEPTANCE 4 (scaled-tail monotonicity): FAIL — F(m, xi*m) increases at {violations:?}. \
         This is a genuine property of the chi-square tail at the xi0 boundary: \
         F(1, xi0) = erfc(sqrt(xi0/2)) ~= 0.22885 < exp(-xi0) = F(2, 2*xi0) ~= 0.23410, \
         because the pointwise bound 2*sqrt(pi*t)*exp(-t) <= 1 behind the monotonicity \
         argument holds only for t >= xi0 while the tail integral starts at xi/2 = xi0/2. \
         Monotonicity does hold for every step from m = 2 on, and for all steps at xi = 2 and 5."
    );
    println!("ACCEPTANCE 4 (scaled-tail monotonicity + closed forms): PASS");
}

// ---------------------------------------------------------------------------
// 5. Toy error-scale sweep: monotone in m, ordered in the length scale
// ---------------------------------------------------------------------------
#[test]
fn acceptance_5_toy_error_scale_sweep() {
    single_threaded_blas();
    let rows = toy_eta_sweep(
        1000,
        &TOY_ETA_MS,
        &TOY_THETAS,
        &[KernelFamily::Laplacian, KernelFamily::Gaussian],
    )
    .unwrap();
    let mut table: std::collections::BTreeMap<(String, u64), Vec<(usize, f64)>> =
        std::collections::BTreeMap::new();
    for r in &rows {
        table
            .entry((r.family.clone(), r.theta.to_bits()))
            .or_default()
            .push((r.m, r.eta));
    }
    println!("  family     theta      m ->  eta");
    for ((family, theta_bits), curve) in &table {
        let theta = f64::from_bits(*theta_bits);
        let pretty: Vec<String> = curve.iter().map(|(m, e)| format!("{m}:{e:.4}")).collect();
        println!("  {family:10} {theta:5} {}", pretty.join("  "));
    }

    let mut violations = Vec::new();
    for ((family, theta_bits), curve) in &table {
        let mut sorted = curve.clone();
        sorted.sort_by_key(|(m, _)| *m);
        for w in sorted.windows(2) {
            if w[1].1 > w[0].1 + 1e-12 {
                violations.push(format!(
                    "eta increased for ({family}, theta {}): m {} -> {}: {:.4} -> {:.4}",
                    f64::from_bits(*theta_bits),
                    w[0].0,
                    w[1].0,
                    w[0].1,
                    w[1].1
                ));
            }
        }
    }
    let eta_at = |family: &str, theta: f64, m: usize| -> f64 {
        table[&(family.to_string(), theta.to_bits())]
            .iter()
            .find(|(mm, _)| *mm == m)
            .unwrap()
            .1
    };
    for family in ["laplacian", "gaussian"] {
        for &m in &TOY_ETA_MS {
            let (e01, e1, e10) = (
                eta_at(family, 0.1, m),
                eta_at(family, 1.0, m),
                eta_at(family, 10.0, m),
            );
            if !(e10 <= e1 && e1 <= e01) {
                violations.push(format!(
                    "length-scale ordering violated at ({family}, m {m}): eta(0.1) = {e01:.4}, eta(1) = {e1:.4}, eta(10) = {e10:.4}"
                ));
            }
        }
    }
    assert!(
        violations.is_empty(),
        "ACCEPTANCE 5 (toy error-scale sweep): FAIL — {} violation(s):\n  {}\n\
         All violations sit at the m in {{2, 4}} edge of the sweep, where the \
         Schur-complement eigenvalue lambda2 (independent of the kappa route) \
         dominates the error scale: conditioning on two centers leaves most of \
         the prior variance, which is larger for theta = 1 than theta = 0.1. \
         Monotonicity and the full length-scale ordering hold on all six curves \
         from m = 8 through 256.",
        violations.len(),
        violations.join("\n  ")
    );
    println!("ACCEPTANCE 5 (toy error-scale sweep): PASS");
}

// ---------------------------------------------------------------------------
// 6. Toy marginal-likelihood/posterior comparison at 20 trials
// ---------------------------------------------------------------------------
#[test]
fn acceptance_6_toy_marginal_and_posterior() {
    single_threaded_blas();
    let rows = toy_fig4(
        1000,
        1000,
        20,
        &TOY_FIG4_MS,
        &TOY_THETAS,
        &[KernelFamily::Laplacian, KernelFamily::Gaussian],
        0,
    )
    .unwrap();
    let worst_exact = rows
        .iter()
        .map(|r| r.delta_lml_exact_max)
        .fold(0.0_f64, f64::max);
    assert!(
        worst_exact < 1e-8,
        "ACCEPTANCE 6: FAIL — exact-identity residual {worst_exact:e}"
    );
    let rmse_at = |family: &str, theta: f64, m: usize| -> f64 {
        rows.iter()
            .find(|r| r.family == family && r.theta == theta && r.m == m)
            .unwrap()
            .rmse_mean
    };
    for family in ["laplacian", "gaussian"] {
        for theta in [1.0, 10.0] {
            let (first, last) = (rmse_at(family, theta, 8), rmse_at(family, theta, 128));
            assert!(
                last < first,
                "ACCEPTANCE 6: FAIL — posterior RMSE did not decrease ({family}, theta {theta}): {first} -> {last}"
            );
        }
        for &m in &TOY_FIG4_MS {
            assert!(
                rmse_at(family, 10.0, m) <= rmse_at(family, 0.1, m),
                "ACCEPTANCE 6: FAIL — theta ordering violated at ({family}, m {m})"
            );
        }
    }
    println!(
        "ACCEPTANCE 6 (toy marginal/posterior, 20 trials): PASS — identity residual {worst_exact:.2e}, RMSE decreases m = 8 -> 128 for theta in {{1, 10}}, both kernels"
    );
}

// ---------------------------------------------------------------------------
// 7. Desk-scale reproduction on the California housing data
// ---------------------------------------------------------------------------
fn california_csv() -> Option<std::path::PathBuf> {
    if let Some(p) = std::env::var_os("CALIFORNIA_HOUSING_CSV") {
        let p = std::path::PathBuf::from(p);
        if p.exists() {
            return Some(p);
        }
    }
    let fallback = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/california_housing.csv");
    fallback.exists().then_some(fallback)
}

#[test]
fn acceptance_7_california_housing_desk_scale() {
    single_threaded_blas();
    let Some(csv) = california_csv() else {
        panic!(
            "ACCEPTANCE 7 (California housing desk scale): FAIL — dataset not available. \
             This sandbox has no network egress and the public California housing CSV \
             cannot be fetched. Supply it as a headered CSV (raw columns longitude, \
             latitude, housingMedianAge, totalRooms, totalBedrooms, population, \
             households, medianIncome, medianHouseValue) at data/california_housing.csv \
             under the workspace root, or point CALIFORNIA_HOUSING_CSV at it \
             (sklearn: fetch_california_housing gives the same fields). \
             The pipeline this criterion exercises is tested end to end on synthetic \
             spatial data in the cli and experiment suites."
        );
    };

    let cfg = ExperimentConfig {
        dataset_path: csv.display().to_string(),
        target_attribute: "MedValue".into(),
        grid_cell: 1.6,
        likelihood: "gaussian".into(),
        kernel_family: "laplacian".into(),
        n_train: 1000,
        trials: 20,
        seed: 0,
        output_dir: String::new(),
        input_columns: vec!["latitude".into(), "longitude".into()],
        grid_bounds: Some(sqgp::experiment::california_bounds()),
        normalization: "train".into(),
        sigma2_fixed: None,
        fit_kernel_noise: None,
        poisson_floor: None,
        n_test: None,
    };
    let (ds, _) = sqgp::data::load_csv(
        std::path::Path::new(&cfg.dataset_path),
        &cfg.input_columns,
        &cfg.target_attribute,
    )
    .unwrap();
    assert!(
        ds.len() > 20_000,
        "expected the full 20640-row dataset, got {}",
        ds.len()
    );

    // Approximation table: six grids, complete-data reference reused per trial.
    let reports = run_grid_sweep(&ds, &cfg, &TABLE2_GRIDS).unwrap();
    for rep in &reports {
        println!(
            "  grid {:>5}: mean nrmse = {:.4} +/- {:.4}",
            rep.grid_cell, rep.mean_nrmse, rep.std_nrmse
        );
    }
    let mean_at = |cell: f64| -> f64 {
        reports
            .iter()
            .find(|r| r.grid_cell == cell)
            .unwrap()
            .mean_nrmse
    };
    assert!(
        (mean_at(1.6) - 0.79).abs() <= 0.10,
        "ACCEPTANCE 7: FAIL — grid 1.6 mean {} vs 0.79 +/- 0.10",
        mean_at(1.6)
    );
    assert!(
        (mean_at(0.05) - 0.32).abs() <= 0.10,
        "ACCEPTANCE 7: FAIL — grid 0.05 mean {} vs 0.32 +/- 0.10",
        mean_at(0.05)
    );
    let means: Vec<f64> = TABLE2_GRIDS.iter().map(|&g| mean_at(g)).collect();
    let inversions = means.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(
        inversions <= 1,
        "ACCEPTANCE 7: FAIL — {inversions} adjacent inversions in {means:?}"
    );

    // Prediction side: Gaussian kernel, grid 0.4, n = 10000, 10 trials.
    let mut pred_cfg = cfg.clone();
    pred_cfg.kernel_family = "gaussian".into();
    pred_cfg.grid_cell = 0.4;
    pred_cfg.n_train = 10_000;
    pred_cfg.trials = 10;
    pred_cfg.normalization = "test".into();
    let report = run_eval(&ds, &pred_cfg, EvalMode::Prediction).unwrap();
    println!(
        "  prediction: mean nrmse = {:.4} +/- {:.4}",
        report.mean_nrmse, report.std_nrmse
    );
    assert!(
        (report.mean_nrmse - 0.904).abs() <= 0.05,
        "ACCEPTANCE 7: FAIL — prediction mean {} vs 0.904 +/- 0.05",
        report.mean_nrmse
    );
    println!(
        "ACCEPTANCE 7 (California housing desk scale): PASS — approx {:.3} @1.6, {:.3} @0.05; prediction {:.3}",
        mean_at(1.6),
        mean_at(0.05),
        report.mean_nrmse
    );
}

// ---------------------------------------------------------------------------
// 8. Analytic gradients against central finite differences
// ---------------------------------------------------------------------------
#[test]
fn acceptance_8_gradient_checks() {
    single_threaded_blas();
    let mut rng = ChaCha8Rng::seed_from_u64(208);
    let mut check = |mode: ObjectiveMode, label: &str| {
        let mut worst = 0.0_f64;
        for trial in 0..50 {
            let m = rng.gen_range(3..=8);
            let family = if trial % 2 == 0 {
                KernelFamily::Laplacian
            } else {
                KernelFamily::Gaussian
            };
            let inst = random_instance(&mut rng, m * 3, m, family);
            let mut cfg = FitConfig::new(family);
            cfg.mode = Some(mode);
            let (problem, _) = summary_objective(
                &inst.summary,
                &Likelihood::Gaussian { variance: 1.0 },
                &cfg,
            )
            .unwrap();
            let p: Vec<f64> = (0..problem.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, grad) = problem.eval(&p);
            for k in 0..p.len() {
                let h = 1e-5;
                let mut up = p.clone();
                let mut dn = p.clone();
                up[k] += h;
                dn[k] -= h;
                let fd = (problem.eval(&up).0 - problem.eval(&dn).0) / (2.0 * h);
                let rel = (grad[k] - fd).abs() / fd.abs().max(1e-8);
                worst = worst.max(rel);
                assert!(
                    rel < 1e-5,
                    "ACCEPTANCE 8: FAIL — {label} component {k} rel err {rel:e} (trial {trial})"
                );
            }
        }
        worst
    };
    let worst_q = check(ObjectiveMode::QuasiQ, "negative Q");
    let worst_e = check(ObjectiveMode::GaussianAggregated, "negative E");
    println!(
        "ACCEPTANCE 8 (gradient checks): PASS — worst rel err {worst_q:.2e} (Q), {worst_e:.2e} (E)"
    );
}

// ---------------------------------------------------------------------------
// 9. Identity summarization reproduces the complete-data model
// ---------------------------------------------------------------------------
#[test]
fn acceptance_9_identity_summarization_equivalence() {
    single_threaded_blas();
    let mut rng = ChaCha8Rng::seed_from_u64(209);
    let n = 40;
    let x = Array2::from_shape_fn((n, 1), |_| rng.gen_range(0.0..6.0));
    let spec_true = KernelSpec::new(KernelFamily::Gaussian, 1.0, 1.0, 0.0).unwrap();
    let k = gram(&spec_true, x.view(), x.view(), true).unwrap();
    let factor = chol_psd(k.view(), BASE_JITTER).unwrap();
    let eps = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
    let f = factor.lower().dot(&eps);
    let y = Array1::from_shape_fn(n, |i| f[i] + 0.4 * rng.sample::<f64, _>(StandardNormal));

    let summary = SummarizedData::identity(x.view(), y.view()).unwrap();
    let cfg = FitConfig::new(KernelFamily::Gaussian);
    let lik = Likelihood::Gaussian { variance: 1.0 };
    let model_e = fit_summary(&summary, &lik, &cfg).unwrap();
    let model_l = fit_complete(x.view(), y.view(), &cfg).unwrap();

    let d_theta = (model_e.params.log_length_scale - model_l.params.log_length_scale).abs();
    let d_c = (model_e.params.log_signal_variance - model_l.params.log_signal_variance).abs();
    let d_s2 = (model_e.params.log_sigma2.unwrap() - model_l.params.log_sigma2.unwrap()).abs();
    assert!(
        d_theta < 1e-4 && d_c < 1e-4 && d_s2 < 1e-4,
        "ACCEPTANCE 9: FAIL — fitted log-params differ: theta {d_theta:e}, c {d_c:e}, sigma2 {d_s2:e}"
    );

    // Posterior means with the complete-data fit, through both formulas.
    let sigma2 = match model_l.likelihood {
        Likelihood::Gaussian { variance } => variance,
        Likelihood::Poisson => unreachable!(),
    };
    let xstar = Array2::from_shape_fn((30, 1), |_| rng.gen_range(0.0..6.0));
    let quasi = posterior_q(
        &summary,
        xstar.view(),
        &model_l.kernel,
        &Likelihood::Gaussian { variance: sigma2 },
        model_l.mean_const,
    )
    .unwrap();
    let complete = complete_posterior_gaussian(
        x.view(),
        y.view(),
        xstar.view(),
        &model_l.kernel,
        sigma2,
        model_l.mean_const,
    )
    .unwrap();
    let worst = quasi
        .mean
        .iter()
        .zip(complete.mean.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max);
    assert!(
        worst < 1e-6,
        "ACCEPTANCE 9: FAIL — posterior means differ by {worst:e}"
    );
    println!(
        "ACCEPTANCE 9 (identity summarization equivalence): PASS — mean gap {worst:.2e}, log-param gaps ({d_theta:.2e}, {d_c:.2e}, {d_s2:.2e})"
    );
}
