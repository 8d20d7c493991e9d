//! Shared test oracles, independent of the library's solver and
//! decomposition paths.

#![allow(dead_code)]

use mtsparse::model::{MultiTaskDataset, Task};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha12Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

/// Haar-ish orthogonal matrix via sign-corrected QR of a Gaussian draw.
pub fn random_orthogonal(rng: &mut ChaCha12Rng, n: usize) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let g = DMatrix::from_fn(n, n, |_, _| -> f64 { StandardNormal.sample(rng) });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            for row in 0..n {
                q[(row, k)] = -q[(row, k)];
            }
        }
    }
    q
}

pub fn random_dataset(rng: &mut ChaCha12Rng, n: usize, p: usize, m: usize) -> MultiTaskDataset {
    let tasks = (0..n)
        .map(|_| {
            Task::new(
                random_matrix(rng, m, p),
                DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0)),
            )
            .unwrap()
        })
        .collect();
    MultiTaskDataset::new(tasks).unwrap()
}

// ---- independent cyclic Jacobi eigensolver -------------------------------

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
/// nonincreasing. Deliberately independent of the library's eigensolver.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _ in 0..200 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(m[(i, j)].abs());
            }
        }
        if off < 1e-14 * (1.0 + m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig
}

/// Nuclear norm through the independent route: eigenvalues of `B B^T` via
/// Jacobi, square-rooted and summed.
pub fn nuclear_norm_jacobi(b: &DMatrix<f64>) -> f64 {
    let gram = b * b.transpose();
    let eig = jacobi_eigenvalues(&gram);
    let top = eig.first().copied().unwrap_or(0.0).max(0.0);
    // eigenvalue dust below numerical rank would blow up under the sqrt
    let tol = gram.nrows() as f64 * f64::EPSILON * top;
    eig.iter()
        .map(|&c| if c > tol { c.sqrt() } else { 0.0 })
        .sum()
}

// ---- proximal-gradient oracles -------------------------------------------

fn max_gram_eigenvalue(dataset: &MultiTaskDataset) -> f64 {
    dataset
        .tasks()
        .iter()
        .map(|t| {
            let gram = t.design.transpose() * &t.design;
            jacobi_eigenvalues(&gram)[0]
        })
        .fold(0.0f64, f64::max)
}

fn soft(z: f64, tau: f64) -> f64 {
    z.signum() * (z.abs() - tau).max(0.0)
}

/// ISTA for a single task's weighted lasso `||y - X b||^2 + w ||b||_1`.
pub fn lasso_ista(x: &DMatrix<f64>, y: &DVector<f64>, w: f64, iters: usize) -> DVector<f64> {
    let gram = x.transpose() * x;
    let step = 1.0 / (2.0 * jacobi_eigenvalues(&gram)[0]);
    let xty = x.transpose() * y;
    let mut beta = DVector::zeros(x.ncols());
    for _ in 0..iters {
        let grad = &gram * &beta - &xty;
        let v = &beta - 2.0 * step * grad;
        beta = v.map(|z| soft(z, step * w));
    }
    beta
}

/// Block proximal gradient for the group lasso objective.
pub fn group_ista(dataset: &MultiTaskDataset, lambda: f64, iters: usize) -> DMatrix<f64> {
    let p = dataset.n_features();
    let n = dataset.n_tasks();
    let step = 1.0 / (2.0 * max_gram_eigenvalue(dataset));
    let mut b = DMatrix::<f64>::zeros(p, n);
    for _ in 0..iters {
        let mut grad = DMatrix::<f64>::zeros(p, n);
        for (i, t) in dataset.tasks().iter().enumerate() {
            let r = &t.response - &t.design * b.column(i);
            grad.set_column(i, &(-2.0 * t.design.transpose() * r));
        }
        let v = &b - step * grad;
        for l in 0..p {
            let row_norm = v.row(l).norm();
            let scale = if row_norm > 0.0 {
                (1.0 - step * lambda / row_norm).max(0.0)
            } else {
                0.0
            };
            for i in 0..n {
                b[(l, i)] = v[(l, i)] * scale;
            }
        }
    }
    b
}

/// Proximal gradient with singular-value soft-thresholding for the
/// nuclear-norm objective.
pub fn ring_svt(dataset: &MultiTaskDataset, lambda: f64, iters: usize) -> DMatrix<f64> {
    let p = dataset.n_features();
    let n = dataset.n_tasks();
    let step = 1.0 / (2.0 * max_gram_eigenvalue(dataset));
    let mut b = DMatrix::<f64>::zeros(p, n);
    for _ in 0..iters {
        let mut grad = DMatrix::<f64>::zeros(p, n);
        for (i, t) in dataset.tasks().iter().enumerate() {
            let r = &t.response - &t.design * b.column(i);
            grad.set_column(i, &(-2.0 * t.design.transpose() * r));
        }
        let v = &b - step * grad;
        let svd = v.svd(true, true);
        let shrunk = DVector::from_iterator(
            svd.singular_values.len(),
            svd.singular_values.iter().map(|s| (s - step * lambda).max(0.0)),
        );
        b = svd.u.as_ref().unwrap() * DMatrix::from_diagonal(&shrunk) * svd.v_t.as_ref().unwrap();
    }
    b
}

// ---- objective evaluators --------------------------------------------------

pub fn residual_risk(dataset: &MultiTaskDataset, b: &DMatrix<f64>) -> f64 {
    dataset
        .tasks()
        .iter()
        .enumerate()
        .map(|(i, t)| (&t.response - &t.design * b.column(i)).norm_squared())
        .sum()
}

pub fn group_objective(dataset: &MultiTaskDataset, b: &DMatrix<f64>, lambda: f64) -> f64 {
    let penalty: f64 = (0..b.nrows()).map(|l| b.row(l).norm()).sum();
    residual_risk(dataset, b) + lambda * penalty
}

pub fn ring_objective(dataset: &MultiTaskDataset, b: &DMatrix<f64>, lambda: f64) -> f64 {
    residual_risk(dataset, b) + lambda * nuclear_norm_jacobi(b)
}

pub fn lassoes_objective(
    dataset: &MultiTaskDataset,
    b: &DMatrix<f64>,
    lambda: f64,
    alpha: f64,
    augmented: bool,
) -> f64 {
    let mut total = residual_risk(dataset, b);
    for i in 0..b.ncols() {
        let l1: f64 = b.column(i).iter().map(|v| v.abs()).sum();
        let norm = if augmented { 1.0 + l1 } else { l1 };
        total += lambda * norm.powf(alpha);
    }
    total
}

// ---- powered-l1 oracle via the norm profile --------------------------------

fn project_l1(v: &mut DVector<f64>, radius: f64) {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return;
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cumulative += m;
        let t = (cumulative - radius) / (k + 1) as f64;
        if m <= t {
            break;
        }
        theta = t;
    }
    for x in v.iter_mut() {
        *x = x.signum() * (x.abs() - theta).max(0.0);
    }
}

/// `min_{||b||_1 <= t} ||y - X b||^2` by projected gradient.
fn constrained_ls(x: &DMatrix<f64>, y: &DVector<f64>, t: f64, iters: usize) -> f64 {
    let gram = x.transpose() * x;
    let step = 1.0 / (2.0 * jacobi_eigenvalues(&gram)[0]);
    let xty = x.transpose() * y;
    let mut beta = DVector::zeros(x.ncols());
    for _ in 0..iters {
        let grad = &gram * &beta - &xty;
        beta -= 2.0 * step * grad;
        project_l1(&mut beta, t);
    }
    (y - x * beta).norm_squared()
}

/// Independent oracle for one task of the powered-l1 objective: golden-section
/// search over the l1 radius of the convex profile
/// `t -> min_{||b||_1 <= t} ||y - Xb||^2 + lambda N(t)^alpha`.
pub fn lassoes_task_oracle(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    alpha: f64,
    augmented: bool,
) -> f64 {
    let profile = |t: f64| -> f64 {
        let fit = constrained_ls(x, y, t, 4000);
        let norm = if augmented { 1.0 + t } else { t };
        fit + lambda * norm.powf(alpha)
    };
    // bracket: the solution's norm never exceeds the unpenalized one
    let gram = x.transpose() * x;
    let ols = gram
        .clone()
        .svd(true, true)
        .solve(&(x.transpose() * y), 1e-12)
        .unwrap();
    let hi0 = ols.iter().map(|v| v.abs()).sum::<f64>() * 1.5 + 1.0;
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0f64, hi0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = profile(x1);
    let mut f2 = profile(x2);
    for _ in 0..80 {
        if f1 > f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = profile(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = profile(x1);
        }
    }
    f1.min(f2)
}

/// Exhaustive 1-D grid search for `(y - x b)^2`-type objectives.
pub fn grid_search_1d<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, step: f64) -> (f64, f64) {
    let mut best_x = lo;
    let mut best = f(lo);
    let mut x = lo;
    while x <= hi {
        let v = f(x);
        if v < best {
            best = v;
            best_x = x;
        }
        x += step;
    }
    (best_x, best)
}
