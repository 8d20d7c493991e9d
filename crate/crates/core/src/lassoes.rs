//! The lassoes estimator: per-task least squares penalized by a power of the
//! task's l1 norm, `sum_i [ ||y_i - X_i b_i||^2 + lambda * N_i(b_i)^alpha ]`,
//! coupled across tasks only through the shared multiplier.
//!
//! Each outer step freezes the weight `w = lambda * alpha * N^(alpha-1)` and
//! solves the resulting weighted lasso by cyclic coordinate descent with
//! soft-thresholding at `w/2`. The weight's norm argument is then driven to
//! its fixed point by bracketing: the map from frozen norm to fitted norm is
//! monotone decreasing, so the fixed point is unique and bisection converges
//! where the raw alternation can fall into a two-cycle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoefMatrix, MultiTaskDataset, Task};
use crate::report::{FitReport, Termination};

/// Which l1 norm enters the penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    /// `N(b) = 1 + ||b||_1`, the norm of the augmented vector `(-1, b)`.
    Augmented,
    /// `N(b) = ||b||_1`.
    Plain,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoesOptions {
    /// Penalty exponent, `alpha >= 1`.
    pub alpha: f64,
    /// Shared multiplier, `lambda >= 0`.
    pub lambda: f64,
    pub norm_mode: NormMode,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Relative objective-change tolerance.
    pub tol: f64,
}

impl Default for LassoesOptions {
    fn default() -> Self {
        LassoesOptions {
            alpha: 1.0,
            lambda: 0.0,
            norm_mode: NormMode::Augmented,
            max_outer: 100,
            max_inner: 10_000,
            tol: 1e-9,
        }
    }
}

impl LassoesOptions {
    fn validate(&self) -> Result<()> {
        if self.alpha < 1.0 {
            return Err(Error::InvalidInputs("alpha must be >= 1".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidInputs("lambda must be >= 0".into()));
        }
        if self.tol <= 0.0 {
            return Err(Error::InvalidInputs("tol must be > 0".into()));
        }
        Ok(())
    }

    fn norm(&self, beta: &DVector<f64>) -> f64 {
        let l1: f64 = beta.iter().map(|v| v.abs()).sum();
        match self.norm_mode {
            NormMode::Augmented => 1.0 + l1,
            NormMode::Plain => l1,
        }
    }

    /// Frozen majorization weight `lambda * alpha * N^(alpha-1)`, floored at
    /// `1e-12 * lambda` so a zero norm with `alpha > 1` is not a flat trap.
    fn weight(&self, norm: f64) -> f64 {
        let w = self.lambda * self.alpha * norm.powf(self.alpha - 1.0);
        w.max(1e-12 * self.lambda)
    }

    fn task_objective(&self, task: &Task, beta: &DVector<f64>) -> f64 {
        let r = &task.response - &task.design * beta;
        r.norm_squared() + self.lambda * self.norm(beta).powf(self.alpha)
    }

    fn describe(&self) -> String {
        format!(
            "lassoes(alpha={}, lambda={}, norm={})",
            self.alpha,
            self.lambda,
            match self.norm_mode {
                NormMode::Augmented => "augmented",
                NormMode::Plain => "plain",
            }
        )
    }
}

fn soft_threshold(z: f64, tau: f64) -> f64 {
    if z > tau {
        z - tau
    } else if z < -tau {
        z + tau
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for `||y - X b||^2 + w ||b||_1`, warm-started.
/// Returns the number of sweeps used.
fn weighted_lasso_cd(
    task: &Task,
    col_sq: &[f64],
    beta: &mut DVector<f64>,
    residual: &mut DVector<f64>,
    w: f64,
    max_sweeps: usize,
    tol: f64,
) -> usize {
    let p = beta.len();
    for sweep in 1..=max_sweeps {
        let mut max_change = 0.0f64;
        let mut max_coef = 0.0f64;
        for l in 0..p {
            if col_sq[l] == 0.0 {
                continue;
            }
            let old = beta[l];
            let col = task.design.column(l);
            let z = col.dot(residual) + col_sq[l] * old;
            let new = soft_threshold(z, 0.5 * w) / col_sq[l];
            if new != old {
                residual.axpy(old - new, &col.clone_owned(), 1.0);
                beta[l] = new;
            }
            max_change = max_change.max((new - old).abs());
            max_coef = max_coef.max(new.abs());
        }
        if max_change <= tol * (1.0 + max_coef) {
            return sweep;
        }
    }
    max_sweeps
}

struct TaskFit {
    beta: DVector<f64>,
    trace: Vec<f64>,
    outer: usize,
    inner: usize,
    converged: bool,
}

fn fit_task(task: &Task, opts: &LassoesOptions, warm: Option<&DVector<f64>>) -> TaskFit {
    let p = task.design.ncols();
    let col_sq: Vec<f64> = (0..p)
        .map(|l| task.design.column(l).norm_squared())
        .collect();
    let inner_tol = (opts.tol * 1e-2).max(1e-14);

    let mut beta = warm.cloned().unwrap_or_else(|| DVector::zeros(p));
    let mut residual = &task.response - &task.design * &beta;
    let mut inner_total = 0;
    let mut trace = Vec::new();

    // alpha = 1 or lambda = 0: the weight does not depend on the iterate, a
    // single weighted solve is exact.
    let fixed_weight = opts.alpha == 1.0 || opts.lambda == 0.0;

    let mut best = beta.clone();
    let mut best_obj = opts.task_objective(task, &beta);
    let mut frozen_norm = opts.norm(&beta);
    // Bracket for the fixed point of the frozen-norm -> fitted-norm map.
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    let mut converged = false;
    let mut outer = 0;

    while outer < opts.max_outer {
        outer += 1;
        let w = if fixed_weight {
            if opts.lambda == 0.0 {
                0.0
            } else {
                opts.lambda
            }
        } else {
            opts.weight(frozen_norm)
        };
        inner_total += weighted_lasso_cd(
            task,
            &col_sq,
            &mut beta,
            &mut residual,
            w,
            opts.max_inner,
            inner_tol,
        );
        let fitted_norm = opts.norm(&beta);
        let obj = opts.task_objective(task, &beta);
        if obj < best_obj {
            best_obj = obj;
            best.copy_from(&beta);
        }
        trace.push(best_obj);

        if fixed_weight {
            converged = true;
            break;
        }
        let gap = (fitted_norm - frozen_norm).abs();
        if gap <= opts.tol * (1.0 + frozen_norm) {
            converged = true;
            break;
        }
        // The map is monotone decreasing, so the crossing with the identity
        // lies between the frozen and fitted norms.
        if fitted_norm > frozen_norm {
            lo = lo.max(frozen_norm);
            hi = hi.min(fitted_norm);
        } else {
            hi = hi.min(frozen_norm);
            lo = lo.max(fitted_norm);
        }
        if hi - lo <= opts.tol * (1.0 + lo) {
            converged = true;
            break;
        }
        frozen_norm = if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            fitted_norm
        };
    }

    TaskFit {
        beta: best,
        trace,
        outer,
        inner: inner_total,
        converged,
    }
}

/// Fits the lassoes estimator. Tasks are independent given `lambda`, so they
/// are solved one by one; warm starts may be supplied column-wise.
pub fn fit_lassoes(
    dataset: &MultiTaskDataset,
    opts: &LassoesOptions,
) -> Result<(CoefMatrix, FitReport)> {
    fit_lassoes_warm(dataset, opts, None)
}

pub fn fit_lassoes_warm(
    dataset: &MultiTaskDataset,
    opts: &LassoesOptions,
    warm: Option<&CoefMatrix>,
) -> Result<(CoefMatrix, FitReport)> {
    opts.validate()?;
    if let Some(w) = warm {
        dataset.check_coef(w)?;
    }
    let p = dataset.n_features();
    let n = dataset.n_tasks();
    let mut coefs = DMatrix::zeros(p, n);
    let mut fits = Vec::with_capacity(n);
    for (i, task) in dataset.tasks().iter().enumerate() {
        let warm_col = warm.map(|w| w.values.column(i).clone_owned());
        let fit = fit_task(task, opts, warm_col.as_ref());
        coefs.set_column(i, &fit.beta);
        fits.push(fit);
    }

    // Aggregate traces in lockstep, padding finished tasks with their final
    // objective so the sum stays nonincreasing.
    let depth = fits.iter().map(|f| f.trace.len()).max().unwrap_or(0);
    let objective_trace: Vec<f64> = (0..depth)
        .map(|t| {
            fits.iter()
                .map(|f| *f.trace.get(t).or(f.trace.last()).unwrap_or(&0.0))
                .sum()
        })
        .collect();

    let b = CoefMatrix::new(coefs)?;
    let kkt = lassoes_kkt_residual(&b, dataset, opts)?;
    let active: Vec<usize> = (0..n)
        .map(|i| b.values.column(i).iter().filter(|v| **v != 0.0).count())
        .collect();
    let all_converged = fits.iter().all(|f| f.converged);
    let report = FitReport {
        penalty: opts.describe(),
        objective_trace,
        outer_iterations: fits.iter().map(|f| f.outer).max().unwrap_or(0),
        inner_sweeps: fits.iter().map(|f| f.inner).sum(),
        kkt_residuals: kkt,
        active_set_sizes: active,
        sparsity: None,
        termination: if all_converged {
            Termination::Converged
        } else {
            Termination::IterationLimit
        },
    };
    Ok((b, report))
}

/// Per-task l-infinity distance from zero to the subdifferential of the task
/// objective at the given coefficients.
pub fn lassoes_kkt_residual(
    b: &CoefMatrix,
    dataset: &MultiTaskDataset,
    opts: &LassoesOptions,
) -> Result<Vec<f64>> {
    opts.validate()?;
    dataset.check_coef(b)?;
    let mut out = Vec::with_capacity(dataset.n_tasks());
    for (i, task) in dataset.tasks().iter().enumerate() {
        let beta = b.values.column(i).clone_owned();
        let residual = &task.response - &task.design * &beta;
        let w = opts.lambda * opts.alpha * opts.norm(&beta).powf(opts.alpha - 1.0);
        let mut worst = 0.0f64;
        for l in 0..beta.len() {
            let corr = 2.0 * task.design.column(l).dot(&residual);
            let r = if beta[l] != 0.0 {
                (-corr + w * beta[l].signum()).abs()
            } else {
                (corr.abs() - w).max(0.0)
            };
            worst = worst.max(r);
        }
        out.push(worst);
    }
    Ok(out)
}

/// One evaluated point on the lambda-selection path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaPathPoint {
    pub lambda: f64,
    /// `g(lambda) = n^{-1} sum_i ||b_i||_1^2` (plain l1 norms).
    pub g: f64,
    /// The matching level `lambda^{-2/alpha}`.
    pub target: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub chosen: f64,
    /// False when g never reached the target on the grid; the smallest grid
    /// lambda is returned in that case.
    pub crossed: bool,
    pub path: Vec<LambdaPathPoint>,
}

/// Data-driven lambda rule for `alpha > 2`: walk a decreasing grid with warm
/// starts and stop at the largest lambda where
/// `n^{-1} sum_i ||b_i||_1^2` reaches `lambda^{-2/alpha}`.
pub fn select_lambda_lassoes(
    dataset: &MultiTaskDataset,
    opts: &LassoesOptions,
    grid: &[f64],
) -> Result<LambdaSelection> {
    opts.validate()?;
    if opts.alpha <= 2.0 {
        return Err(Error::InvalidInputs(
            "lambda selection requires alpha > 2".into(),
        ));
    }
    if grid.len() < 3 {
        return Err(Error::InvalidInputs("grid needs at least 3 points".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) || grid.iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidInputs(
            "grid must be strictly decreasing and positive".into(),
        ));
    }

    let n = dataset.n_tasks() as f64;
    let mut warm: Option<CoefMatrix> = None;
    let mut path = Vec::with_capacity(grid.len());
    let mut chosen = None;
    for &lambda in grid {
        let step_opts = LassoesOptions {
            lambda,
            ..opts.clone()
        };
        let (b, _) = fit_lassoes_warm(dataset, &step_opts, warm.as_ref())?;
        let g = (0..b.values.ncols())
            .map(|i| {
                let l1: f64 = b.values.column(i).iter().map(|v| v.abs()).sum();
                l1 * l1
            })
            .sum::<f64>()
            / n;
        let target = lambda.powf(-2.0 / opts.alpha);
        path.push(LambdaPathPoint { lambda, g, target });
        if chosen.is_none() && g >= target {
            chosen = Some(lambda);
        }
        warm = Some(b);
    }
    Ok(match chosen {
        Some(lambda) => LambdaSelection {
            chosen: lambda,
            crossed: true,
            path,
        },
        None => LambdaSelection {
            chosen: *grid.last().expect("non-empty grid"),
            crossed: false,
            path,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Task;

    fn two_point_task() -> MultiTaskDataset {
        let task = Task::new(
            DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        MultiTaskDataset::new(vec![task]).unwrap()
    }

    #[test]
    fn lambda_zero_recovers_ols() {
        let task = Task::new(
            DMatrix::from_row_slice(4, 2, &[1.0, 0.3, -0.5, 1.1, 0.2, -0.7, 1.4, 0.9]),
            DVector::from_vec(vec![0.7, -0.2, 1.1, 0.4]),
        )
        .unwrap();
        let x = task.design.clone();
        let y = task.response.clone();
        let ds = MultiTaskDataset::new(vec![task]).unwrap();
        let opts = LassoesOptions {
            lambda: 0.0,
            ..Default::default()
        };
        let (b, report) = fit_lassoes(&ds, &opts).unwrap();
        let ols = (x.transpose() * &x)
            .lu()
            .solve(&(x.transpose() * &y))
            .unwrap();
        assert!((b.values.column(0) - ols).norm() < 1e-8);
        assert!(report.converged());
    }

    #[test]
    fn one_dim_alpha1_closed_forms() {
        let ds = two_point_task();
        let opts = LassoesOptions {
            alpha: 1.0,
            lambda: 1.0,
            norm_mode: NormMode::Plain,
            ..Default::default()
        };
        let (b, _) = fit_lassoes(&ds, &opts).unwrap();
        assert!(
            (b.values[(0, 0)] - 0.75).abs() < 1e-9,
            "got {}",
            b.values[(0, 0)]
        );

        // |2 sum x y| = 4 <= lambda: threshold exactly reached
        let opts4 = LassoesOptions {
            lambda: 4.0,
            ..opts
        };
        let (b4, _) = fit_lassoes(&ds, &opts4).unwrap();
        assert_eq!(b4.values[(0, 0)], 0.0);
    }

    #[test]
    fn one_dim_alpha2_stationarity() {
        let ds = two_point_task();
        let opts = LassoesOptions {
            alpha: 2.0,
            lambda: 1.0,
            norm_mode: NormMode::Plain,
            ..Default::default()
        };
        let (b, report) = fit_lassoes(&ds, &opts).unwrap();
        // -4(1 - b) + 2 lambda b = 0  =>  b = 2/3
        assert!(
            (b.values[(0, 0)] - 2.0 / 3.0).abs() < 1e-6,
            "got {}",
            b.values[(0, 0)]
        );
        assert!(report.converged());
    }

    #[test]
    fn single_observation_alpha2_does_not_cycle() {
        // One observation, alpha = 2: the raw freeze-weight alternation
        // two-cycles between 0 and the OLS solution with equal objectives.
        let task = Task::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let ds = MultiTaskDataset::new(vec![task]).unwrap();
        let opts = LassoesOptions {
            alpha: 2.0,
            lambda: 1.0,
            norm_mode: NormMode::Plain,
            ..Default::default()
        };
        let (b, _) = fit_lassoes(&ds, &opts).unwrap();
        // stationarity: -2(1 - b) + 2 b = 0  =>  b = 1/2
        assert!(
            (b.values[(0, 0)] - 0.5).abs() < 1e-6,
            "got {}",
            b.values[(0, 0)]
        );
    }

    #[test]
    fn augmented_and_plain_modes_differ_for_alpha2() {
        let ds = two_point_task();
        let plain = LassoesOptions {
            alpha: 2.0,
            lambda: 1.0,
            norm_mode: NormMode::Plain,
            ..Default::default()
        };
        let augmented = LassoesOptions {
            norm_mode: NormMode::Augmented,
            ..plain.clone()
        };
        let (bp, _) = fit_lassoes(&ds, &plain).unwrap();
        let (ba, _) = fit_lassoes(&ds, &augmented).unwrap();
        // augmented: -4(1 - b) + 2(1 + b) = 0  =>  b = 1/3
        assert!((ba.values[(0, 0)] - 1.0 / 3.0).abs() < 1e-6);
        assert!((bp.values[(0, 0)] - ba.values[(0, 0)]).abs() > 0.1);
    }

    #[test]
    fn kkt_residual_examples() {
        let ds = two_point_task();
        let opts = LassoesOptions {
            alpha: 1.0,
            lambda: 1.0,
            norm_mode: NormMode::Plain,
            ..Default::default()
        };
        let optimum = CoefMatrix::new(DMatrix::from_element(1, 1, 0.75)).unwrap();
        let r = lassoes_kkt_residual(&optimum, &ds, &opts).unwrap();
        assert!(r[0] <= 1e-6);

        let perturbed = CoefMatrix::new(DMatrix::from_element(1, 1, 0.85)).unwrap();
        let r = lassoes_kkt_residual(&perturbed, &ds, &opts).unwrap();
        assert!(r[0] > 0.1);

        let ols = CoefMatrix::new(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let opts0 = LassoesOptions {
            lambda: 0.0,
            ..opts
        };
        let r = lassoes_kkt_residual(&ols, &ds, &opts0).unwrap();
        assert!(r[0] <= 1e-8);
    }

    #[test]
    fn objective_trace_is_nonincreasing() {
        let task = Task::new(
            DMatrix::from_row_slice(5, 3, &[
                0.8, -0.4, 0.1, 1.2, 0.5, -0.9, -0.3, 0.7, 0.6, 0.4, -1.1, 0.2, 0.9, 0.3, -0.5,
            ]),
            DVector::from_vec(vec![1.0, -0.5, 0.8, 0.1, -0.9]),
        )
        .unwrap();
        let ds = MultiTaskDataset::new(vec![task]).unwrap();
        let opts = LassoesOptions {
            alpha: 3.0,
            lambda: 0.7,
            norm_mode: NormMode::Plain,
            ..Default::default()
        };
        let (_, report) = fit_lassoes(&ds, &opts).unwrap();
        for w in report.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn tasks_decouple_under_permutation() {
        let t1 = Task::new(
            DMatrix::from_row_slice(3, 2, &[1.0, 0.2, -0.4, 0.9, 0.8, -0.3]),
            DVector::from_vec(vec![0.5, -0.1, 0.7]),
        )
        .unwrap();
        let t2 = Task::new(
            DMatrix::from_row_slice(3, 2, &[0.3, -0.8, 1.1, 0.4, -0.6, 0.5]),
            DVector::from_vec(vec![-0.2, 0.9, 0.3]),
        )
        .unwrap();
        let opts = LassoesOptions {
            alpha: 2.0,
            lambda: 0.4,
            ..Default::default()
        };
        let ds = MultiTaskDataset::new(vec![t1.clone(), t2.clone()]).unwrap();
        let ds_swapped = MultiTaskDataset::new(vec![t2, t1]).unwrap();
        let (b, _) = fit_lassoes(&ds, &opts).unwrap();
        let (bs, _) = fit_lassoes(&ds_swapped, &opts).unwrap();
        assert!((b.values.column(0) - bs.values.column(1)).norm() < 1e-10);
        assert!((b.values.column(1) - bs.values.column(0)).norm() < 1e-10);
    }

    #[test]
    fn select_lambda_flags_no_crossing_on_zero_response() {
        let task = Task::new(
            DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.7, 0.9, 0.3, -0.2]),
            DVector::zeros(3),
        )
        .unwrap();
        let ds = MultiTaskDataset::new(vec![task]).unwrap();
        let opts = LassoesOptions {
            alpha: 3.0,
            norm_mode: NormMode::Plain,
            ..Default::default()
        };
        let grid = [8.0, 4.0, 2.0, 1.0, 0.5];
        let sel = select_lambda_lassoes(&ds, &opts, &grid).unwrap();
        assert!(!sel.crossed);
        assert_eq!(sel.chosen, 0.5);
        assert!(sel.path.iter().all(|pt| pt.g == 0.0));
    }

    #[test]
    fn select_lambda_path_g_monotone() {
        let task = Task::new(
            DMatrix::from_row_slice(6, 2, &[
                1.0, 0.1, -0.8, 1.2, 0.5, -0.4, 1.1, 0.6, -0.2, 0.9, 0.7, -1.0,
            ]),
            DVector::from_vec(vec![2.0, -1.0, 0.8, 1.5, 0.4, -0.6]),
        )
        .unwrap();
        let ds = MultiTaskDataset::new(vec![task]).unwrap();
        let opts = LassoesOptions {
            alpha: 3.0,
            norm_mode: NormMode::Plain,
            ..Default::default()
        };
        let grid = [16.0, 8.0, 4.0, 2.0, 1.0, 0.5, 0.25];
        let sel = select_lambda_lassoes(&ds, &opts, &grid).unwrap();
        for w in sel.path.windows(2) {
            assert!(w[1].g >= w[0].g - 1e-9, "g must grow as lambda decreases");
        }
    }

    #[test]
    fn rejects_bad_options() {
        let ds = two_point_task();
        let opts = LassoesOptions {
            alpha: 0.5,
            ..Default::default()
        };
        assert!(fit_lassoes(&ds, &opts).is_err());
    }
}
