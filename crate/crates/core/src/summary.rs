//! Turning complete data into summarized data.
//!
//! A summarization groups data points into grid cells, keeps the geometric
//! cell centers of the occupied cells as representative features, and reduces
//! the outputs of each cell to a sample mean, a (biased, divide-by-n) sample
//! variance, and a count. Empty cells are dropped. The half cell diagonal is a
//! certified radius: every point lies within it of its representative.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quasi::Likelihood;

/// Complete data: inputs, outputs, and the input column names.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub attribute_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, attribute_names: Vec<String>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "dataset has {} input rows but {} outputs",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(Self {
            x,
            y,
            attribute_names,
        })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// Axis-aligned grid over a box: per-dimension bounds and cell sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: Vec<(f64, f64)>,
    pub cell_size: Vec<f64>,
}

impl GridSpec {
    pub fn new(bounds: Vec<(f64, f64)>, cell_size: Vec<f64>) -> Result<Self> {
        if bounds.is_empty() || bounds.len() != cell_size.len() {
            return Err(Error::InvalidArgument(format!(
                "grid has {} bound pairs but {} cell sizes",
                bounds.len(),
                cell_size.len()
            )));
        }
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "grid bounds in dimension {k} must satisfy lo < hi, got [{lo}, {hi}]"
                )));
            }
            if !(cell_size[k] > 0.0) || !cell_size[k].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "grid cell size in dimension {k} must be positive, got {}",
                    cell_size[k]
                )));
            }
        }
        Ok(Self { bounds, cell_size })
    }

    /// Same cell size in every dimension.
    pub fn uniform(bounds: Vec<(f64, f64)>, cell: f64) -> Result<Self> {
        let d = bounds.len();
        Self::new(bounds, vec![cell; d])
    }

    /// Number of cells along each dimension.
    pub fn cells_per_dim(&self) -> Vec<usize> {
        self.bounds
            .iter()
            .zip(&self.cell_size)
            .map(|(&(lo, hi), &c)| (((hi - lo) / c).ceil() as usize).max(1))
            .collect()
    }

    /// Half the cell diagonal: the worst-case distance from a point to the
    /// center of its cell.
    pub fn alpha(&self) -> f64 {
        0.5 * self
            .cell_size
            .iter()
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt()
    }
}

/// Representative features plus per-cell summary statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummarizedData {
    /// Representative features Z, one row per occupied cell.
    pub features: Array2<f64>,
    /// Per-cell summary statistics (sample means, or their transform).
    pub stats: Array1<f64>,
    /// Per-cell biased sample variances (divide by n_j).
    pub variances: Array1<f64>,
    /// Points per cell, all >= 1.
    pub counts: Vec<usize>,
    /// Optional cell index per original data point (0-based).
    pub assignments: Option<Vec<usize>>,
}

impl SummarizedData {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn total_count(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Count-weighted mean of the statistics: equals the complete-data output
    /// mean when the statistics are sample means.
    pub fn weighted_stat_mean(&self) -> f64 {
        let total: f64 = self.counts.iter().map(|&c| c as f64).sum();
        self.stats
            .iter()
            .zip(&self.counts)
            .map(|(s, &c)| s * c as f64)
            .sum::<f64>()
            / total
    }

    fn validate(&self) -> Result<()> {
        let m = self.len();
        if m == 0 {
            return Err(Error::Data("summarized data has no cells".into()));
        }
        if self.stats.len() != m || self.variances.len() != m || self.counts.len() != m {
            return Err(Error::DimensionMismatch(
                "summarized data fields have inconsistent lengths".into(),
            ));
        }
        if self.counts.iter().any(|&c| c == 0) {
            return Err(Error::Data("summarized data has an empty cell".into()));
        }
        if self.variances.iter().any(|&v| v < 0.0) {
            return Err(Error::Data("negative sample variance".into()));
        }
        if let Some(omega) = &self.assignments {
            if omega.iter().any(|&j| j >= m) {
                return Err(Error::Data("assignment index out of range".into()));
            }
        }
        Ok(())
    }

    pub fn new(
        features: Array2<f64>,
        stats: Array1<f64>,
        variances: Array1<f64>,
        counts: Vec<usize>,
        assignments: Option<Vec<usize>>,
    ) -> Result<Self> {
        let s = Self {
            features,
            stats,
            variances,
            counts,
            assignments,
        };
        s.validate()?;
        Ok(s)
    }

    /// Identity summarization: every point is its own cell with itself as the
    /// representative feature.
    pub fn identity(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<Self> {
        Self::new(
            x.to_owned(),
            y.to_owned(),
            Array1::zeros(y.len()),
            vec![1; y.len()],
            Some((0..y.len()).collect()),
        )
    }
}

/// Result of assigning points to grid cells.
#[derive(Debug, Clone)]
pub struct GridAssignment {
    /// Cell index for each point (0-based, into `centers`).
    pub omega: Vec<usize>,
    /// Centers of the occupied cells, ordered by grid index.
    pub centers: Array2<f64>,
    /// Certified within-cell radius (half the cell diagonal).
    pub alpha: f64,
}

/// Assign each point to its grid cell. Points on the upper boundary of the
/// last cell fold into it; points outside the bounds are an error.
pub fn assign_grid(x: ArrayView2<'_, f64>, grid: &GridSpec) -> Result<GridAssignment> {
    let d = grid.bounds.len();
    if x.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "points have dimension {} but grid has {}",
            x.ncols(),
            d
        )));
    }
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Data("assign_grid: no points".into()));
    }
    let cells = grid.cells_per_dim();

    let mut offenders = Vec::new();
    let mut flat_index = vec![0_usize; n];
    for i in 0..n {
        let mut flat = 0_usize;
        let mut outside = false;
        for k in 0..d {
            let (lo, hi) = grid.bounds[k];
            let v = x[[i, k]];
            if v < lo || v > hi {
                outside = true;
                break;
            }
            let mut idx = ((v - lo) / grid.cell_size[k]).floor() as isize;
            if idx < 0 {
                idx = 0;
            }
            if idx as usize >= cells[k] {
                idx = cells[k] as isize - 1; // upper-boundary fold
            }
            flat = flat * cells[k] + idx as usize;
        }
        if outside {
            offenders.push(i);
        } else {
            flat_index[i] = flat;
        }
    }
    if !offenders.is_empty() {
        let shown: Vec<String> = offenders.iter().take(10).map(|i| i.to_string()).collect();
        return Err(Error::Data(format!(
            "{} point(s) outside grid bounds (rows {}{})",
            offenders.len(),
            shown.join(", "),
            if offenders.len() > 10 { ", ..." } else { "" }
        )));
    }

    // Compact occupied cells, ordered by flat grid index.
    let mut occupied: Vec<usize> = flat_index.clone();
    occupied.sort_unstable();
    occupied.dedup();
    let m = occupied.len();
    let cell_rank = |flat: usize| occupied.binary_search(&flat).expect("occupied cell");

    let mut centers = Array2::zeros((m, d));
    for (row, &flat) in occupied.iter().enumerate() {
        let mut rem = flat;
        let mut idx = vec![0_usize; d];
        for k in (0..d).rev() {
            idx[k] = rem % cells[k];
            rem /= cells[k];
        }
        for k in 0..d {
            centers[[row, k]] = grid.bounds[k].0 + (idx[k] as f64 + 0.5) * grid.cell_size[k];
        }
    }

    let omega: Vec<usize> = flat_index.iter().map(|&f| cell_rank(f)).collect();
    Ok(GridAssignment {
        omega,
        centers,
        alpha: grid.alpha(),
    })
}

/// Per-cell sample means, biased sample variances, and counts.
///
/// `omega` values must cover preconditions 0..m with every cell non-empty.
pub fn summarize_outputs(
    y: ArrayView1<'_, f64>,
    omega: &[usize],
    m: usize,
) -> Result<(Array1<f64>, Array1<f64>, Vec<usize>)> {
    if y.len() != omega.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} outputs but {} assignments",
            y.len(),
            omega.len()
        )));
    }
    if omega.iter().any(|&j| j >= m) {
        return Err(Error::Data("assignment index out of range".into()));
    }
    let mut counts = vec![0_usize; m];
    let mut means = Array1::<f64>::zeros(m);
    for (i, &j) in omega.iter().enumerate() {
        counts[j] += 1;
        means[j] += y[i];
    }
    if let Some(j) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Data(format!("cell {j} is empty")));
    }
    for j in 0..m {
        means[j] /= counts[j] as f64;
    }
    let mut vars = Array1::<f64>::zeros(m);
    for (i, &j) in omega.iter().enumerate() {
        let d = y[i] - means[j];
        vars[j] += d * d;
    }
    for j in 0..m {
        vars[j] /= counts[j] as f64;
    }
    Ok((means, vars, counts))
}

/// Grid-summarize a dataset in one step, keeping the assignments and checking
/// the alpha certificate (every point within half a cell diagonal of its
/// representative).
pub fn summarize_dataset(ds: &Dataset, grid: &GridSpec) -> Result<SummarizedData> {
    let assignment = assign_grid(ds.x.view(), grid)?;
    let m = assignment.centers.nrows();
    let (means, vars, counts) = summarize_outputs(ds.y.view(), &assignment.omega, m)?;

    let alpha = assignment.alpha * (1.0 + 1e-12);
    for i in 0..ds.len() {
        let z = assignment.centers.row(assignment.omega[i]);
        let dist = ds
            .x
            .row(i)
            .iter()
            .zip(z.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist > alpha {
            return Err(Error::Numerical(format!(
                "alpha certificate violated: point {i} is {dist} from its representative (alpha {})",
                assignment.alpha
            )));
        }
    }

    SummarizedData::new(
        assignment.centers,
        means,
        vars,
        counts,
        Some(assignment.omega),
    )
}

/// Map summary statistics through the inverse link of the likelihood:
/// identity for Gaussian, log for Poisson. Counts and variances pass through.
pub fn transform_summary(summary: &SummarizedData, likelihood: &Likelihood) -> Result<SummarizedData> {
    transform_summary_with_floor(summary, likelihood, None)
}

/// As [`transform_summary`], with an opt-in floor for non-positive Poisson
/// cell means. Without the floor such cells are an error; with it they are
/// clamped to the floor before the log.
pub fn transform_summary_with_floor(
    summary: &SummarizedData,
    likelihood: &Likelihood,
    poisson_floor: Option<f64>,
) -> Result<SummarizedData> {
    match likelihood {
        Likelihood::Gaussian { .. } => Ok(summary.clone()),
        Likelihood::Poisson => {
            let bad: Vec<usize> = summary
                .stats
                .iter()
                .enumerate()
                .filter(|(_, &s)| s <= 0.0)
                .map(|(j, _)| j)
                .collect();
            let stats = match (bad.is_empty(), poisson_floor) {
                (true, _) => summary.stats.clone(),
                (false, Some(floor)) if floor > 0.0 => summary.stats.mapv(|s| s.max(floor)),
                (false, Some(floor)) => {
                    return Err(Error::InvalidArgument(format!(
                        "poisson floor must be positive, got {floor}"
                    )))
                }
                (false, None) => {
                    let shown: Vec<String> = bad.iter().take(10).map(|j| j.to_string()).collect();
                    return Err(Error::Data(format!(
                        "poisson transform requires positive cell means; {} cell(s) violate (cells {}{})",
                        bad.len(),
                        shown.join(", "),
                        if bad.len() > 10 { ", ..." } else { "" }
                    )));
                }
            };
            let mut out = summary.clone();
            out.stats = stats.mapv(f64::ln);
            Ok(out)
        }
    }
}
