//! Problem data model: multi-task datasets, coefficient matrices, augmented
//! vectors, empirical and population second moments, norms, risks, and
//! sparsity summaries.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra;

/// One regression task: an `m x p` design with rows `x_ij^T` and the length-m
/// response.
#[derive(Debug, Clone)]
pub struct Task {
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
}

impl Task {
    pub fn new(design: DMatrix<f64>, response: DVector<f64>) -> Result<Self> {
        if design.nrows() != response.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows but response has {} entries",
                design.nrows(),
                response.len()
            )));
        }
        if design.nrows() == 0 || design.ncols() == 0 {
            return Err(Error::DimensionMismatch(
                "task needs at least one row and one column".into(),
            ));
        }
        if design.iter().any(|v| !v.is_finite()) || response.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("task data".into()));
        }
        Ok(Task { design, response })
    }

    pub fn rows(&self) -> usize {
        self.design.nrows()
    }
}

/// A collection of n tasks sharing the column count p; row counts may vary.
#[derive(Debug, Clone)]
pub struct MultiTaskDataset {
    tasks: Vec<Task>,
    p: usize,
}

impl MultiTaskDataset {
    pub fn new(tasks: Vec<Task>) -> Result<Self> {
        let p = match tasks.first() {
            Some(t) => t.design.ncols(),
            None => {
                return Err(Error::DimensionMismatch(
                    "dataset needs at least one task".into(),
                ))
            }
        };
        for (i, t) in tasks.iter().enumerate() {
            if t.design.ncols() != p {
                return Err(Error::DimensionMismatch(format!(
                    "task {i} has {} columns, expected {p}",
                    t.design.ncols()
                )));
            }
        }
        Ok(MultiTaskDataset { tasks, p })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn n_features(&self) -> usize {
        self.p
    }

    /// Checks the balanced-design normalization `sum_j x_ijl^2 = m` for every
    /// task i and column l, within `1e-8 * m`.
    pub fn is_column_normalized(&self) -> bool {
        self.tasks.iter().all(|t| {
            let m = t.rows() as f64;
            (0..self.p).all(|l| {
                let s: f64 = t.design.column(l).iter().map(|v| v * v).sum();
                (s - m).abs() <= 1e-8 * m
            })
        })
    }

    pub fn check_coef(&self, b: &CoefMatrix) -> Result<()> {
        if b.values.nrows() != self.p || b.values.ncols() != self.n_tasks() {
            return Err(Error::DimensionMismatch(format!(
                "coefficients are {}x{}, dataset wants {}x{}",
                b.values.nrows(),
                b.values.ncols(),
                self.p,
                self.n_tasks()
            )));
        }
        Ok(())
    }
}

/// The p x n coefficient matrix; column i holds the coefficients of task i.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefMatrix {
    pub values: DMatrix<f64>,
}

impl CoefMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficient matrix".into()));
        }
        Ok(CoefMatrix { values })
    }

    pub fn zeros(p: usize, n: usize) -> Self {
        CoefMatrix {
            values: DMatrix::zeros(p, n),
        }
    }

    pub fn task_coef(&self, i: usize) -> DVector<f64> {
        self.values.column(i).clone_owned()
    }

    /// Default numerical-zero threshold `1e-8 * max|B|`.
    pub fn default_zero_threshold(&self) -> f64 {
        1e-8 * self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// The augmented vector `(-1, beta^T)^T` that turns prediction risk into a
/// quadratic form in the joint (y, x) second-moment matrix.
#[derive(Debug, Clone)]
pub struct AugmentedCoef(DVector<f64>);

impl AugmentedCoef {
    pub fn from_coef(beta: &DVector<f64>) -> Self {
        let mut v = DVector::zeros(beta.len() + 1);
        v[0] = -1.0;
        v.rows_mut(1, beta.len()).copy_from(beta);
        AugmentedCoef(v)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }
}

/// Per-task empirical second-moment matrices of `z_ij = (y_ij, x_ij^T)^T`.
#[derive(Debug, Clone)]
pub struct EmpCov {
    pub matrices: Vec<DMatrix<f64>>,
}

/// Ground-truth generative description used by simulations and bound checks.
#[derive(Debug, Clone)]
pub struct PopTruth {
    pub true_b: CoefMatrix,
    pub sigma: f64,
    /// Population second-moment matrices of `(y_i, x_i)`, one per task.
    pub pop_cov: Vec<DMatrix<f64>>,
    /// Moment bound V on `E max (Z_l Z_k)^2`.
    pub moment_bound: f64,
}

impl PopTruth {
    pub fn new(
        true_b: CoefMatrix,
        sigma: f64,
        pop_cov: Vec<DMatrix<f64>>,
        moment_bound: f64,
    ) -> Result<Self> {
        if sigma < 0.0 {
            return Err(Error::InvalidInputs("sigma must be >= 0".into()));
        }
        if moment_bound <= 0.0 {
            return Err(Error::InvalidInputs("moment bound must be > 0".into()));
        }
        Ok(PopTruth {
            true_b,
            sigma,
            pop_cov,
            moment_bound,
        })
    }
}

/// Grouping axis for [`lpq_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormAxis {
    Rows,
    Columns,
}

/// The `l_{p,q}` norm of the rows or columns of a matrix:
/// `[sum_groups (sum_members |z|^p)^{q/p}]^{1/q}`.
///
/// With `(p, q) = (2, 1)` over rows this is the group-lasso penalty
/// `sum_l ||b_l||_2`.
pub fn lpq_norm(b: &DMatrix<f64>, p_exp: f64, q_exp: f64, axis: NormAxis) -> f64 {
    let groups: Vec<Vec<f64>> = match axis {
        NormAxis::Rows => (0..b.nrows())
            .map(|r| b.row(r).iter().copied().collect())
            .collect(),
        NormAxis::Columns => (0..b.ncols())
            .map(|c| b.column(c).iter().copied().collect())
            .collect(),
    };
    let total: f64 = groups
        .iter()
        .map(|g| {
            let inner: f64 = g.iter().map(|z| z.abs().powf(p_exp)).sum();
            inner.powf(q_exp / p_exp)
        })
        .sum();
    total.powf(1.0 / q_exp)
}

/// Uncentered empirical second moments `m^{-1} sum_j z_ij z_ij^T` of
/// `z = (y, x)`; `center` subtracts the sample mean first (for real data, the
/// theory assumes mean-zero variables).
pub fn empirical_cov_with(task: &Task, center: bool) -> DMatrix<f64> {
    let m = task.rows();
    let p = task.design.ncols();
    let mut z = DMatrix::zeros(m, p + 1);
    z.column_mut(0).copy_from(&task.response);
    z.columns_mut(1, p).copy_from(&task.design);
    if center {
        let means: DVector<f64> = DVector::from_iterator(p + 1, (0..p + 1).map(|c| z.column(c).mean()));
        for r in 0..m {
            for c in 0..p + 1 {
                z[(r, c)] -= means[c];
            }
        }
    }
    z.transpose() * z / m as f64
}

/// Uncentered empirical second-moment matrix of one task.
pub fn empirical_cov(task: &Task) -> DMatrix<f64> {
    empirical_cov_with(task, false)
}

/// Empirical second moments of every task.
pub fn empirical_cov_all(dataset: &MultiTaskDataset) -> EmpCov {
    EmpCov {
        matrices: dataset.tasks().iter().map(empirical_cov).collect(),
    }
}

/// Total squared residual `sum_i sum_j (y_ij - x_ij^T beta_i)^2`.
pub fn empirical_risk(b: &CoefMatrix, dataset: &MultiTaskDataset) -> Result<f64> {
    dataset.check_coef(b)?;
    let mut total = 0.0;
    for (i, task) in dataset.tasks().iter().enumerate() {
        let r = &task.response - &task.design * b.values.column(i);
        total += r.norm_squared();
    }
    Ok(total)
}

/// Population prediction risk `sum_i beta~_i^T Sigma~_i beta~_i`.
pub fn population_risk(b: &CoefMatrix, truth: &PopTruth) -> Result<f64> {
    if b.values.ncols() != truth.pop_cov.len() {
        return Err(Error::DimensionMismatch(format!(
            "coefficients have {} tasks, truth has {}",
            b.values.ncols(),
            truth.pop_cov.len()
        )));
    }
    let mut total = 0.0;
    for (i, sigma) in truth.pop_cov.iter().enumerate() {
        if sigma.nrows() != b.values.nrows() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "population matrix {i} is {}x{}, expected {}",
                sigma.nrows(),
                sigma.ncols(),
                b.values.nrows() + 1
            )));
        }
        let aug = AugmentedCoef::from_coef(&b.values.column(i).clone_owned());
        total += quadratic_form(sigma, aug.as_vector());
    }
    Ok(total)
}

pub(crate) fn quadratic_form(a: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (v.transpose() * a * v)[(0, 0)]
}

/// The deviation `delta_n = max_i || S~_i - Sigma~_i ||_infty` between the
/// empirical and population second moments, entrywise.
pub fn sup_norm_gap(dataset: &MultiTaskDataset, truth: &PopTruth) -> Result<f64> {
    if dataset.n_tasks() != truth.pop_cov.len() {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {} tasks, truth has {}",
            dataset.n_tasks(),
            truth.pop_cov.len()
        )));
    }
    let mut delta = 0.0f64;
    for (task, sigma) in dataset.tasks().iter().zip(&truth.pop_cov) {
        let s = empirical_cov(task);
        if s.nrows() != sigma.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "population matrix is {}x{}, empirical is {}x{}",
                sigma.nrows(),
                sigma.ncols(),
                s.nrows(),
                s.ncols()
            )));
        }
        delta = (&s - sigma)
            .iter()
            .fold(delta, |acc, v| acc.max(v.abs()));
    }
    Ok(delta)
}

/// Support and rank summary of a coefficient matrix at a numerical-zero
/// threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparsitySummary {
    /// Indices of active coordinates per task.
    pub per_task_support: Vec<Vec<usize>>,
    /// Cardinality of each task support.
    pub per_task_count: Vec<usize>,
    /// Rows with at least one active entry.
    pub row_support: Vec<usize>,
    /// Singular values above `threshold * max singular value`.
    pub rank: usize,
}

/// Summarizes supports and the numerical rank; entries with
/// `|value| <= threshold` count as zero, and the rank counts singular values
/// above `threshold * max singular value`.
pub fn sparsity_summary(b: &CoefMatrix, threshold: f64) -> Result<SparsitySummary> {
    let values = &b.values;
    let per_task_support: Vec<Vec<usize>> = (0..values.ncols())
        .map(|i| {
            (0..values.nrows())
                .filter(|&l| values[(l, i)].abs() > threshold)
                .collect()
        })
        .collect();
    let per_task_count = per_task_support.iter().map(Vec::len).collect();
    let row_support = (0..values.nrows())
        .filter(|&l| values.row(l).iter().any(|v| v.abs() > threshold))
        .collect();
    let decomposition = spectra::svd(values)?;
    let max_sv = decomposition.singulars.iter().fold(0.0f64, |m, v| m.max(*v));
    let rank = decomposition
        .singulars
        .iter()
        .filter(|&&s| s > threshold * max_sv)
        .count();
    Ok(SparsitySummary {
        per_task_support,
        per_task_count,
        row_support,
        rank,
    })
}
