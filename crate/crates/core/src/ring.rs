//! RING (rotation-invariant group) lasso: least squares penalized by the
//! nuclear norm of the coefficient matrix, fitted by an iterative adaptive
//! ridge. Each task takes a damped step of
//! `(X_i^T X_i + (lambda/2) (B B^T)^{+1/2})^{-1} X_i^T (y_i - X_i b_i)`,
//! the accumulation matrix `B B^T` is maintained by rank-one updates and
//! re-decomposed (and rebuilt exactly) every few tasks, and `lambda` can be
//! auto-tuned toward a target rank by a multiplicative rule.
//!
//! The stationarity system uses `lambda/2` throughout so converged fits
//! satisfy the subgradient certificate exactly.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{lambda_star, LambdaStar};
use crate::model::{CoefMatrix, MultiTaskDataset};
use crate::report::Termination;
use crate::spectra;

/// Relative singular-value threshold for numerical rank.
pub const RANK_TOL_REL: f64 = 1e-6;

/// Cadence of the basis-rotated group polish inside the fitting loop.
const POLISH_EVERY: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RingOptions {
    /// Penalty multiplier (the starting value when a target rank is set).
    pub lambda: f64,
    /// Damping of the per-task step, in (0, 1].
    pub gamma: f64,
    /// Coordinate mean-square level counted by the lambda-update test.
    pub zero_tol: f64,
    /// When set, lambda is tuned multiplicatively toward this coordinate count.
    pub target_rank: Option<usize>,
    /// Multiplicative lambda step, > 1.
    pub lambda_factor: f64,
    /// Full eigendecomposition refresh cadence, in tasks.
    pub svd_refresh_every: usize,
    /// Coefficients start iid uniform in [-init_scale, init_scale].
    pub init_scale: f64,
    pub max_passes: usize,
    /// Max-coefficient-change tolerance.
    pub tol: f64,
    /// Seed for the random initialization.
    pub seed: u64,
}

impl Default for RingOptions {
    fn default() -> Self {
        RingOptions {
            lambda: 0.0,
            gamma: 0.5,
            zero_tol: 1e-6,
            target_rank: None,
            lambda_factor: 1.1,
            svd_refresh_every: 10,
            init_scale: 1e-3,
            max_passes: 500,
            tol: 1e-8,
            seed: 0,
        }
    }
}

impl RingOptions {
    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidInputs("gamma must be in (0, 1]".into()));
        }
        if self.lambda_factor <= 1.0 {
            return Err(Error::InvalidInputs("lambda_factor must be > 1".into()));
        }
        if self.zero_tol <= 0.0 {
            return Err(Error::InvalidInputs("zero_tol must be > 0".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidInputs("lambda must be >= 0".into()));
        }
        if self.svd_refresh_every == 0 {
            return Err(Error::InvalidInputs(
                "svd_refresh_every must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Trace and certificates of one RING fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RingReport {
    /// Objective (at the then-current lambda) after each pass.
    pub objective_trace: Vec<f64>,
    /// Numerical rank after each pass.
    pub rank_trace: Vec<usize>,
    /// Coordinate-basis count `#{j : n^{-1} sum_i b_ij^2 > eps}` per pass,
    /// the quantity driving the lambda update.
    pub coord_count_trace: Vec<usize>,
    /// Final lambda (differs from the input when auto-tuned).
    pub final_lambda: f64,
    /// Per-active-direction KKT residuals at the returned iterate.
    pub kkt_active: Vec<f64>,
    /// Per-complementary-direction slacks (should be <= 0 at an optimum).
    pub kkt_inactive: Vec<f64>,
    pub passes: usize,
    pub termination: Termination,
}

/// Numerical rank: singular values above `RANK_TOL_REL` times the largest.
pub fn numerical_rank(b: &DMatrix<f64>) -> usize {
    let svd = b
        .clone()
        .try_svd(false, false, f64::EPSILON, 10_000)
        .expect("svd of finite matrix");
    let max = svd.singular_values.iter().fold(0.0f64, |m, v| m.max(*v));
    if max == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL_REL * max)
        .count()
}

/// Regularization floor added to the accumulation matrix before the inverse
/// square root: `max(1e-10 * trace(A)/p, 1e-12)`.
fn reg_floor(a: &DMatrix<f64>) -> f64 {
    (1e-10 * a.trace() / a.nrows() as f64).max(1e-12)
}

fn pinv_sqrt_regularized(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    pinv_sqrt_smoothed(a, 0.0)
}

/// Inverse square root of `A + (floor + smoothing) I`. The smoothing term is
/// annealed toward zero across passes; without it the 1/sigma weights pin
/// small singular values and the iteration crawls at rank boundaries.
fn pinv_sqrt_smoothed(a: &DMatrix<f64>, smoothing: f64) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    let mut reg = a.clone();
    let bump = reg_floor(a) + smoothing;
    for i in 0..p {
        reg[(i, i)] += bump;
    }
    spectra::pinv_sqrt(&reg)
}

/// One adaptive ridge step: solves
/// `(X^T X + (lambda/2) (A + floor I)^{+1/2}) delta = X^T residual`.
pub fn ridge_step(
    x: &DMatrix<f64>,
    residual: &DVector<f64>,
    a: &DMatrix<f64>,
    lambda: f64,
) -> Result<DVector<f64>> {
    if lambda < 0.0 {
        return Err(Error::InvalidInputs("lambda must be >= 0".into()));
    }
    if x.nrows() != residual.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, residual has {}",
            x.nrows(),
            residual.len()
        )));
    }
    let mut m = x.transpose() * x;
    if lambda > 0.0 {
        m += pinv_sqrt_regularized(a)? * (lambda / 2.0);
    }
    let rhs = x.transpose() * residual;
    solve_spd(&m, &rhs)
}

fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    match m.clone().cholesky() {
        Some(chol) => Ok(chol.solve(rhs)),
        None => Err(Error::SingularRidge),
    }
}

/// The projected-residual matrix `R = (X_1^T r_1, ..., X_n^T r_n)`.
fn residual_matrix(dataset: &MultiTaskDataset, b: &DMatrix<f64>) -> DMatrix<f64> {
    let p = dataset.n_features();
    let n = dataset.n_tasks();
    let mut r = DMatrix::zeros(p, n);
    for (i, t) in dataset.tasks().iter().enumerate() {
        let res = &t.response - &t.design * b.column(i);
        r.set_column(i, &(t.design.transpose() * res));
    }
    r
}

/// Subgradient certificates of the nuclear-norm problem at `B`.
///
/// Active directions (singular triples above the rank tolerance) report
/// `|| u_xi^T R - (lambda/2) v_xi^T ||_2`, which vanishes at an optimum.
/// Complementary directions report the singular values of the doubly
/// projected residual minus `lambda/2`, which are nonpositive at an optimum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RingKkt {
    pub active: Vec<f64>,
    pub inactive_slack: Vec<f64>,
}

pub fn kkt_residuals(
    b: &CoefMatrix,
    dataset: &MultiTaskDataset,
    lambda: f64,
) -> Result<RingKkt> {
    dataset.check_coef(b)?;
    let r = residual_matrix(dataset, &b.values);
    let svd = spectra::svd(&b.values)?;
    let max_sv = svd.singulars.iter().fold(0.0f64, |m, v| m.max(*v));
    let active_count = svd
        .singulars
        .iter()
        .filter(|&&s| s > RANK_TOL_REL * max_sv)
        .count();

    let mut active = Vec::with_capacity(active_count);
    for xi in 0..active_count {
        let u = svd.left.column(xi);
        let v = svd.right.column(xi);
        let lhs = u.transpose() * &r;
        let diff = lhs - (lambda / 2.0) * v.transpose();
        active.push(diff.norm());
    }

    // residual projected off the active row/column spaces
    let p = b.values.nrows();
    let n = b.values.ncols();
    let mut projected = r.clone();
    if active_count > 0 {
        let u_act = svd.left.columns(0, active_count).clone_owned();
        let v_act = svd.right.columns(0, active_count).clone_owned();
        projected = &projected - &u_act * (u_act.transpose() * &projected);
        projected = &projected - (&projected * &v_act) * v_act.transpose();
    }
    let inactive_slack = if active_count < p.min(n) {
        let proj_svd = projected
            .try_svd(false, false, f64::EPSILON, 10_000)
            .ok_or(Error::ConvergenceFailure)?;
        let mut vals: Vec<f64> = proj_svd.singular_values.iter().copied().collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        vals.truncate(p.min(n) - active_count);
        vals.into_iter().map(|s| s - lambda / 2.0).collect()
    } else {
        Vec::new()
    };

    Ok(RingKkt {
        active,
        inactive_slack,
    })
}

/// One warm-started block sweep cycle of the row-wise group objective in the
/// rotated basis `U`, which upper-bounds the nuclear-norm objective and
/// touches it at the iterate's own singular basis. Escapes the slow subspace
/// rotation of the adaptive ridge near rank drops.
fn group_polish(
    dataset: &MultiTaskDataset,
    u: &DMatrix<f64>,
    b: &mut DMatrix<f64>,
    lambda: f64,
    max_sweeps: usize,
    tol: f64,
) -> Result<()> {
    let p = b.nrows();
    let n = b.ncols();
    let rotated: Vec<DMatrix<f64>> = dataset
        .tasks()
        .iter()
        .map(|t| &t.design * u)
        .collect();
    let mut gamma = u.transpose() * &*b;
    let mut residuals: Vec<nalgebra::DVector<f64>> = dataset
        .tasks()
        .iter()
        .enumerate()
        .map(|(i, t)| &t.response - &rotated[i] * gamma.column(i))
        .collect();
    let energy: Vec<Vec<f64>> = (0..p)
        .map(|l| rotated.iter().map(|x| x.column(l).norm_squared()).collect())
        .collect();
    for _ in 0..max_sweeps {
        let mut max_change = 0.0f64;
        let mut max_coef = 0.0f64;
        for l in 0..p {
            let inner: Vec<f64> = (0..n)
                .map(|i| rotated[i].column(l).dot(&residuals[i]) + gamma[(l, i)] * energy[l][i])
                .collect();
            let new_row: Vec<f64> = match lambda_star(&inner, &energy[l], lambda)? {
                LambdaStar::BlockZero => vec![0.0; n],
                LambdaStar::Root(t) => inner
                    .iter()
                    .zip(&energy[l])
                    .map(|(&ai, &ei)| ai / (t + ei))
                    .collect(),
            };
            for i in 0..n {
                let delta = new_row[i] - gamma[(l, i)];
                if delta != 0.0 {
                    residuals[i].axpy(-delta, &rotated[i].column(l).clone_owned(), 1.0);
                    gamma[(l, i)] = new_row[i];
                }
                max_change = max_change.max(delta.abs());
                max_coef = max_coef.max(new_row[i].abs());
            }
        }
        if max_change <= tol * (1.0 + max_coef) {
            break;
        }
    }
    *b = u * gamma;
    Ok(())
}

/// Completes the left singular basis of `b` to a full orthogonal matrix.
fn full_left_basis(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = b.nrows();
    let svd = spectra::svd(b)?;
    let rank = svd.rank();
    let mut extended = DMatrix::<f64>::zeros(p, p + rank);
    extended.columns_mut(0, rank).copy_from(&svd.left);
    extended
        .columns_mut(rank, p)
        .copy_from(&DMatrix::<f64>::identity(p, p));
    Ok(extended.qr().q().columns(0, p).clone_owned())
}

struct BestIterate {
    coefs: DMatrix<f64>,
    risk: f64,
    nuclear: f64,
}

impl BestIterate {
    fn objective(&self, lambda: f64) -> f64 {
        self.risk + lambda * self.nuclear
    }
}

/// Fits the RING lasso. With `target_rank` unset this is the fixed-lambda
/// published loop; with it set, lambda multiplies or divides by
/// `lambda_factor` once per pass according to the coordinate count test.
/// Returns the iterate with the lowest recorded objective.
pub fn fit_ring(
    dataset: &MultiTaskDataset,
    opts: &RingOptions,
) -> Result<(CoefMatrix, RingReport)> {
    fit_ring_warm(dataset, opts, None)
}

pub fn fit_ring_warm(
    dataset: &MultiTaskDataset,
    opts: &RingOptions,
    warm: Option<&CoefMatrix>,
) -> Result<(CoefMatrix, RingReport)> {
    opts.validate()?;
    if let Some(w) = warm {
        dataset.check_coef(w)?;
    }
    let p = dataset.n_features();
    let n = dataset.n_tasks();
    let gamma = opts.gamma;

    // Exact zero short-circuit: 0 is optimal when lambda/2 dominates the
    // spectral norm of the residual matrix at 0 (fixed-lambda mode only).
    if opts.target_rank.is_none() && opts.lambda > 0.0 {
        let r0 = residual_matrix(dataset, &DMatrix::zeros(p, n));
        let top = r0
            .try_svd(false, false, f64::EPSILON, 10_000)
            .ok_or(Error::ConvergenceFailure)?
            .singular_values
            .iter()
            .fold(0.0f64, |m, v| m.max(*v));
        if opts.lambda / 2.0 > top {
            let risk: f64 = dataset
                .tasks()
                .iter()
                .map(|t| t.response.norm_squared())
                .sum();
            return Ok((
                CoefMatrix::zeros(p, n),
                RingReport {
                    objective_trace: vec![risk],
                    rank_trace: vec![0],
                    coord_count_trace: vec![0],
                    final_lambda: opts.lambda,
                    kkt_active: Vec::new(),
                    kkt_inactive: vec![top - opts.lambda / 2.0],
                    passes: 0,
                    termination: Termination::ZeroCertificate,
                },
            ));
        }
    }

    let xtx: Vec<DMatrix<f64>> = dataset
        .tasks()
        .iter()
        .map(|t| t.design.transpose() * &t.design)
        .collect();
    let xty: Vec<DVector<f64>> = dataset
        .tasks()
        .iter()
        .map(|t| t.design.transpose() * &t.response)
        .collect();

    let mut b = match warm {
        Some(w) => w.values.clone(),
        None => {
            let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
            DMatrix::from_fn(p, n, |_, _| rng.gen_range(-opts.init_scale..=opts.init_scale))
        }
    };
    let mut a = &b * b.transpose();
    let mut lambda = opts.lambda;
    let mut lambda_frozen = opts.target_rank.is_none();
    let mut prev_direction = 0i8;
    let mut flip_lambdas: Vec<f64> = Vec::new();
    // the multiplicative rule adapts for at most half the budget, then lambda
    // freezes so the coefficients can settle; a floor guards against an
    // unattainable count target walking lambda into a singular ridge
    let adapt_limit = (opts.max_passes / 2).max(1);
    let lambda_floor = opts.lambda * 1e-4;

    let mut report = RingReport {
        objective_trace: Vec::new(),
        rank_trace: Vec::new(),
        coord_count_trace: Vec::new(),
        final_lambda: lambda,
        kkt_active: Vec::new(),
        kkt_inactive: Vec::new(),
        passes: 0,
        termination: Termination::IterationLimit,
    };

    let objective_parts = |b: &DMatrix<f64>| -> Result<(f64, f64)> {
        let risk: f64 = dataset
            .tasks()
            .iter()
            .enumerate()
            .map(|(i, t)| (&t.response - &t.design * b.column(i)).norm_squared())
            .sum();
        Ok((risk, spectra::nuclear_norm(b)?))
    };

    let (risk0, nuclear0) = objective_parts(&b)?;
    let mut best = BestIterate {
        coefs: b.clone(),
        risk: risk0,
        nuclear: nuclear0,
    };

    // annealed spectral smoothing: starts at the mean eigenvalue scale and
    // decays geometrically, ending at the bare floor
    let mut smoothing = 1e-2 * a.trace() / p as f64;
    let mut weight = if lambda > 0.0 {
        Some(pinv_sqrt_smoothed(&a, smoothing)?)
    } else {
        None
    };

    for pass in 1..=opts.max_passes {
        report.passes = pass;
        smoothing *= 0.9;
        if smoothing < 1e-14 {
            smoothing = 0.0;
        }
        let mut max_step = 0.0f64;
        for i in 0..n {
            if lambda > 0.0 && i % opts.svd_refresh_every == 0 {
                // rebuild A exactly and refresh its decomposition
                a = &b * b.transpose();
                weight = Some(pinv_sqrt_smoothed(&a, smoothing * a.trace() / p as f64)?);
            }
            let beta_i = b.column(i).clone_owned();
            let mut m = xtx[i].clone();
            if let Some(w) = &weight {
                m += w * (lambda / 2.0);
            }
            // step toward the adaptive ridge solution; the increment carries
            // both the data residual and the penalty pull, so the fixed
            // point satisfies the stationarity system
            let ridge_solution = solve_spd(&m, &xty[i])?;
            let delta = &ridge_solution - &beta_i;

            // rank-one downdate / update of the accumulation matrix
            a.ger(-1.0, &beta_i, &beta_i, 1.0);
            let beta_new = &beta_i + gamma * &delta;
            a.ger(1.0, &beta_new, &beta_new, 1.0);
            b.set_column(i, &beta_new);
            max_step = max_step.max((gamma * &delta).amax());
        }

        if lambda > 0.0 && pass % POLISH_EVERY == 0 {
            let basis = full_left_basis(&b)?;
            group_polish(dataset, &basis, &mut b, lambda, 60, opts.tol)?;
            a = &b * b.transpose();
            weight = Some(pinv_sqrt_smoothed(&a, smoothing * a.trace() / p as f64)?);
        }

        let (risk, nuclear) = objective_parts(&b)?;
        let obj = risk + lambda * nuclear;
        if obj < best.objective(lambda) {
            best = BestIterate {
                coefs: b.clone(),
                risk,
                nuclear,
            };
        }
        report.objective_trace.push(obj);
        report.rank_trace.push(numerical_rank(&b));
        let coord_count = (0..p)
            .filter(|&j| b.row(j).norm_squared() / n as f64 > opts.zero_tol)
            .count();
        report.coord_count_trace.push(coord_count);

        if let (Some(k), false) = (opts.target_rank, lambda_frozen) {
            let direction: i8 = match coord_count.cmp(&k) {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Equal => 0,
            };
            if pass >= adapt_limit {
                lambda_frozen = true;
            } else if direction != 0 {
                if prev_direction != 0 && direction != prev_direction {
                    flip_lambdas.push(lambda);
                    if flip_lambdas.len() >= 4 {
                        // oscillating around the target: settle at the
                        // geometric mean of the recent flip values
                        let tail = &flip_lambdas[flip_lambdas.len() - 4..];
                        let log_mean =
                            tail.iter().map(|l| l.ln()).sum::<f64>() / tail.len() as f64;
                        lambda = log_mean.exp();
                        lambda_frozen = true;
                    }
                }
                if !lambda_frozen {
                    if direction > 0 {
                        lambda *= opts.lambda_factor;
                    } else {
                        lambda /= opts.lambda_factor;
                        if lambda < lambda_floor {
                            lambda = lambda_floor;
                            lambda_frozen = true;
                        }
                    }
                    prev_direction = direction;
                }
            }
        }

        if max_step < opts.tol && (lambda_frozen || opts.target_rank.is_none()) {
            report.termination = Termination::Converged;
            break;
        }
    }

    report.final_lambda = lambda;
    // return the best iterate under the final lambda
    let (risk_last, nuclear_last) = objective_parts(&b)?;
    let final_coefs = if risk_last + lambda * nuclear_last <= best.objective(lambda) {
        b
    } else {
        best.coefs
    };
    let coef = CoefMatrix::new(final_coefs)?;
    let kkt = kkt_residuals(&coef, dataset, lambda)?;
    report.kkt_active = kkt.active;
    report.kkt_inactive = kkt.inactive_slack;
    Ok((coef, report))
}

/// Warm-started fits along an increasing lambda grid, reporting the numerical
/// rank of each fit.
pub fn rank_path(
    dataset: &MultiTaskDataset,
    opts: &RingOptions,
    lambda_grid: &[f64],
) -> Result<Vec<(f64, usize)>> {
    if lambda_grid.len() < 2 {
        return Err(Error::InvalidInputs("grid needs at least 2 points".into()));
    }
    if lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInputs("grid must be increasing".into()));
    }
    let mut out = Vec::with_capacity(lambda_grid.len());
    let mut warm: Option<CoefMatrix> = None;
    for &lambda in lambda_grid {
        let step = RingOptions {
            lambda,
            target_rank: None,
            ..opts.clone()
        };
        let (b, _) = fit_ring_warm(dataset, &step, warm.as_ref())?;
        out.push((lambda, numerical_rank(&b.values)));
        warm = Some(b);
    }
    Ok(out)
}
