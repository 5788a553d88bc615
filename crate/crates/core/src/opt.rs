//! Bounded quasi-Newton minimization: limited-memory BFGS with gradient
//! projection onto a box and an Armijo backtracking line search along the
//! projected path.
//!
//! Deterministic given the starting point: no randomness, fixed memory size,
//! fixed step-halving schedule. Convergence is declared when the infinity
//! norm of the projected gradient drops below `pg_tol`.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidArgument(
                "box bounds have mismatched lengths".into(),
            ));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo <= hi) {
                return Err(Error::InvalidArgument(format!(
                    "box bound {i} has lower {lo} > upper {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same [lo, hi] interval in every coordinate.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| v.clamp(self.lower[i], self.upper[i]))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }
}

#[derive(Debug, Clone)]
pub struct OptOptions {
    pub max_iter: usize,
    /// Infinity-norm tolerance on the projected gradient.
    pub pg_tol: f64,
    /// Number of (s, y) pairs kept for the inverse-Hessian approximation.
    pub memory: usize,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub max_backtracks: usize,
}

impl Default for OptOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            pg_tol: 1e-5,
            memory: 10,
            c1: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Infinity norm of the projected gradient at the returned point.
    pub gradient_norm: f64,
    /// Objective value after each accepted step (starts with the initial value).
    pub objective_trace: Vec<f64>,
}

fn projected_gradient_norm(x: &[f64], g: &[f64], bounds: &BoxBounds) -> f64 {
    x.iter()
        .zip(g.iter())
        .enumerate()
        .map(|(i, (&xi, &gi))| {
            let stepped = (xi - gi).clamp(bounds.lower[i], bounds.upper[i]);
            (xi - stepped).abs()
        })
        .fold(0.0, f64::max)
}

/// Mask gradient components that push out of the box at active bounds.
fn free_gradient(x: &[f64], g: &[f64], bounds: &BoxBounds) -> Vec<f64> {
    x.iter()
        .zip(g.iter())
        .enumerate()
        .map(|(i, (&xi, &gi))| {
            let eps = 1e-12 * (1.0 + xi.abs());
            let at_lower = xi <= bounds.lower[i] + eps && gi > 0.0;
            let at_upper = xi >= bounds.upper[i] - eps && gi < 0.0;
            if at_lower || at_upper {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

/// Two-loop recursion for the L-BFGS direction −H·g.
fn lbfgs_direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let n = g.len();
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for i in 0..n {
            q[i] -= a * y[i];
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for i in 0..n {
            q[i] += (a - b) * s[i];
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Minimize a smooth objective over a box.
///
/// The callback returns the objective value and its gradient. Accepted
/// iterates have non-increasing objective values.
pub fn minimize_bounded<F>(
    mut objective: F,
    x0: &[f64],
    bounds: &BoxBounds,
    opts: &OptOptions,
) -> Result<OptResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    if n == 0 || n != bounds.dim() {
        return Err(Error::InvalidArgument(format!(
            "minimize_bounded: point has dimension {n} but box has {}",
            bounds.dim()
        )));
    }
    if !bounds.contains(x0) {
        return Err(Error::InvalidArgument(
            "minimize_bounded: starting point outside the box".into(),
        ));
    }

    let mut x = x0.to_vec();
    let (mut fx, mut g) = objective(&x);
    if !fx.is_finite() {
        return Err(Error::Numerical(
            "objective is non-finite at the starting point".into(),
        ));
    }
    let mut trace = vec![fx];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut converged = false;
    let mut line_search_failed = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        iterations = iter;
        if projected_gradient_norm(&x, &g, bounds) < opts.pg_tol {
            converged = true;
            break;
        }

        let g_free = free_gradient(&x, &g, bounds);
        let mut d = lbfgs_direction(&g_free, &history);
        for i in 0..n {
            if g_free[i] == 0.0 && g[i] != 0.0 {
                d[i] = 0.0; // stay on the active face
            }
        }
        let descent = dot(&d, &g_free);
        if !(descent < -1e-14 * norm_inf(&d) * norm_inf(&g_free)) || d.iter().any(|v| !v.is_finite()) {
            history.clear();
            d = g_free.iter().map(|v| -v).collect();
        }
        if norm_inf(&d) == 0.0 {
            converged = projected_gradient_norm(&x, &g, bounds) < opts.pg_tol;
            break;
        }

        // First step without curvature information: scale to a unit move.
        let mut t = if history.is_empty() {
            (1.0 / norm_inf(&d)).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<f64> = (0..n)
                .map(|i| (x[i] + t * d[i]).clamp(bounds.lower[i], bounds.upper[i]))
                .collect();
            let step: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
            if norm_inf(&step) == 0.0 {
                break;
            }
            let (f_trial, g_trial) = objective(&trial);
            let dir_deriv = dot(&g, &step).min(0.0);
            if f_trial.is_finite() && f_trial <= fx + opts.c1 * dir_deriv {
                accepted = Some((trial, step, f_trial, g_trial));
                break;
            }
            t *= 0.5;
        }

        let Some((x_new, step, f_new, g_new)) = accepted else {
            line_search_failed = true;
            break;
        };

        let y_diff: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&step, &y_diff);
        if sy > 1e-10 * norm_inf(&step) * norm_inf(&y_diff) {
            history.push_back((step, y_diff, 1.0 / sy));
            if history.len() > opts.memory {
                history.pop_front();
            }
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(fx);
        iterations = iter + 1;
    }

    let gradient_norm = projected_gradient_norm(&x, &g, bounds);
    if !converged {
        converged = !line_search_failed && gradient_norm < opts.pg_tol;
    }
    Ok(OptResult {
        x,
        objective: fx,
        iterations,
        converged,
        gradient_norm,
        objective_trace: trace,
    })
}
