//! Seeded simulation designs, the nuclear-norm prior sampler, and the
//! estimation/prediction error metrics.
//!
//! All generators are pure functions of (config, seed), built on ChaCha12 — a
//! counter-based stream cipher generator with cheap jump-ahead — so replicate
//! streams are independent and runs are bit-reproducible.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoefMatrix, MultiTaskDataset, PopTruth, Task};
use crate::ring::{fit_ring, RingOptions};

/// Index convention for the coefficient-variance decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexOrigin {
    Zero,
    One,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    /// Coefficient j has variance `exp(-decay_rate * j)`.
    pub decay_rate: f64,
    pub index_origin: IndexOrigin,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 60,
            p: 60,
            m: 25,
            decay_rate: 0.4,
            index_origin: IndexOrigin::Zero,
            noise_sigma: 1.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.m == 0 {
            return Err(Error::InvalidInputs("n, p, m must be >= 1".into()));
        }
        if self.decay_rate <= 0.0 {
            return Err(Error::InvalidInputs("decay_rate must be > 0".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidInputs("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha12Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Population second moments of `(y, x)` when `Cov(x) = I` and
/// `y = x^T beta + noise`.
fn identity_design_pop_cov(beta: &DVector<f64>, sigma: f64) -> DMatrix<f64> {
    let p = beta.len();
    let mut cov = DMatrix::zeros(p + 1, p + 1);
    cov[(0, 0)] = beta.norm_squared() + sigma * sigma;
    for l in 0..p {
        cov[(0, l + 1)] = beta[l];
        cov[(l + 1, 0)] = beta[l];
        cov[(l + 1, l + 1)] = 1.0;
    }
    cov
}

/// The decaying-variance design: `beta_ij ~ N(0, exp(-decay_rate * j))`,
/// standard normal regressors, Gaussian noise.
pub fn gen_decay(config: &SimConfig) -> Result<(MultiTaskDataset, PopTruth)> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let origin = match config.index_origin {
        IndexOrigin::Zero => 0usize,
        IndexOrigin::One => 1usize,
    };
    let stds: Vec<f64> = (0..config.p)
        .map(|l| (-(config.decay_rate) * (l + origin) as f64 / 2.0).exp())
        .collect();

    let true_b = DMatrix::from_fn(config.p, config.n, |l, _| stds[l] * normal(&mut rng));
    let mut tasks = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let design = DMatrix::from_fn(config.m, config.p, |_, _| normal(&mut rng));
        let beta = true_b.column(i);
        let noise = DVector::from_fn(config.m, |_, _| config.noise_sigma * normal(&mut rng));
        let response = &design * beta + noise;
        tasks.push(Task::new(design, response)?);
    }
    let dataset = MultiTaskDataset::new(tasks)?;

    let pop_cov: Vec<DMatrix<f64>> = (0..config.n)
        .map(|i| identity_design_pop_cov(&true_b.column(i).clone_owned(), config.noise_sigma))
        .collect();
    // conservative Gaussian fourth-moment bound for Assumption-F style uses
    let max_diag = pop_cov
        .iter()
        .flat_map(|c| (0..c.nrows()).map(move |k| c[(k, k)]))
        .fold(0.0f64, f64::max);
    let v = 3.0 * (config.n as f64) * ((config.p + 1) as f64).powi(2) * max_diag * max_diag;
    let truth = PopTruth::new(CoefMatrix::new(true_b)?, config.noise_sigma, pop_cov, v)?;
    Ok((dataset, truth))
}

/// A bounded-support variant (regressors and noise uniform, variance one)
/// for which the Assumption-F moment bound is pointwise:
/// `V = max(3 ||beta||_1^2 + 3 sigma^2, 3)^2` covers `E max (Z_l Z_k)^2`.
pub fn gen_bounded(config: &SimConfig) -> Result<(MultiTaskDataset, PopTruth)> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let half_width = 3.0f64.sqrt(); // uniform on [-sqrt(3), sqrt(3)] has variance 1
    let origin = match config.index_origin {
        IndexOrigin::Zero => 0usize,
        IndexOrigin::One => 1usize,
    };
    let stds: Vec<f64> = (0..config.p)
        .map(|l| (-(config.decay_rate) * (l + origin) as f64 / 2.0).exp())
        .collect();
    let true_b = DMatrix::from_fn(config.p, config.n, |l, _| {
        stds[l] * rng.gen_range(-half_width..=half_width)
    });

    let mut tasks = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let design =
            DMatrix::from_fn(config.m, config.p, |_, _| rng.gen_range(-half_width..=half_width));
        let beta = true_b.column(i);
        let noise = DVector::from_fn(config.m, |_, _| {
            config.noise_sigma * rng.gen_range(-half_width..=half_width)
        });
        let response = &design * beta + noise;
        tasks.push(Task::new(design, response)?);
    }
    let dataset = MultiTaskDataset::new(tasks)?;

    let uniform_second_moment = 1.0; // variance of the regressors and scaled noise
    let pop_cov: Vec<DMatrix<f64>> = (0..config.n)
        .map(|i| {
            let beta = true_b.column(i).clone_owned();
            let mut cov = DMatrix::zeros(config.p + 1, config.p + 1);
            cov[(0, 0)] = beta.norm_squared() * uniform_second_moment
                + config.noise_sigma * config.noise_sigma;
            for l in 0..config.p {
                cov[(0, l + 1)] = beta[l] * uniform_second_moment;
                cov[(l + 1, 0)] = beta[l] * uniform_second_moment;
                cov[(l + 1, l + 1)] = uniform_second_moment;
            }
            cov
        })
        .collect();

    let max_b_l1 = (0..config.n)
        .map(|i| true_b.column(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let max_abs_y = half_width * max_b_l1 + half_width * config.noise_sigma;
    let max_abs_z = max_abs_y.max(half_width);
    let v = (max_abs_z * max_abs_z).powi(2);
    let truth = PopTruth::new(CoefMatrix::new(true_b)?, config.noise_sigma, pop_cov, v)?;
    Ok((dataset, truth))
}

/// Draws a coefficient matrix from the nuclear-norm prior: radii
/// `r_j ~ Gamma(n, lambda)`, principal-component columns uniform on the
/// radius-`r_j` sphere, and a Haar orthonormal basis recombining them.
/// Returns the matrix and the radii.
pub fn sample_ring_prior(
    n: usize,
    p: usize,
    lambda: f64,
    seed: u64,
) -> Result<(CoefMatrix, Vec<f64>)> {
    if lambda <= 0.0 {
        return Err(Error::InvalidInputs("lambda must be > 0".into()));
    }
    if n == 0 || p == 0 {
        return Err(Error::InvalidInputs("n and p must be >= 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let gamma = Gamma::new(n as f64, 1.0 / lambda)
        .map_err(|e| Error::InvalidInputs(format!("gamma distribution: {e}")))?;
    let radii: Vec<f64> = (0..p).map(|_| gamma.sample(&mut rng)).collect();

    // principal components: column j uniform on the sphere of radius r_j
    let mut gamma_coords = DMatrix::zeros(n, p);
    for j in 0..p {
        let mut g = DVector::from_fn(n, |_, _| normal(&mut rng));
        let norm = g.norm();
        if norm == 0.0 {
            g[0] = 1.0;
        }
        g *= radii[j] / g.norm();
        gamma_coords.set_column(j, &g);
    }

    // Haar orthonormal basis via sign-corrected QR of a Gaussian matrix
    let frame = DMatrix::from_fn(p, p, |_, _| normal(&mut rng));
    let qr = frame.qr();
    let mut basis = qr.q();
    let r = qr.r();
    for k in 0..p {
        if r[(k, k)] < 0.0 {
            for row in 0..p {
                basis[(row, k)] = -basis[(row, k)];
            }
        }
    }

    let b = &basis * gamma_coords.transpose();
    Ok((CoefMatrix::new(b)?, radii))
}

/// The two error ratios `L_par` and `L_pre`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Metrics {
    /// `sum_i ||b^_i - b_i||_inf / sum_i ||b_i||_inf`
    pub l_par: f64,
    /// `sum_i ||X_i (b^_i - b_i)||_inf / sum_i ||X_i b_i||_inf`
    pub l_pre: f64,
}

fn linf(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Computes the error metrics; a zero denominator is an explicit error, never
/// a NaN.
pub fn compute_metrics(
    truth: &PopTruth,
    estimate: &CoefMatrix,
    dataset: &MultiTaskDataset,
) -> Result<Metrics> {
    dataset.check_coef(estimate)?;
    dataset.check_coef(&truth.true_b)?;
    let n = dataset.n_tasks();
    let mut num_par = 0.0;
    let mut den_par = 0.0;
    let mut num_pre = 0.0;
    let mut den_pre = 0.0;
    for i in 0..n {
        let beta = truth.true_b.values.column(i).clone_owned();
        let beta_hat = estimate.values.column(i).clone_owned();
        let diff = &beta_hat - &beta;
        num_par += linf(&diff);
        den_par += linf(&beta);
        let x = &dataset.tasks()[i].design;
        num_pre += linf(&(x * &diff));
        den_pre += linf(&(x * &beta));
    }
    if den_par == 0.0 {
        return Err(Error::UndefinedMetric("sum_i ||b_i||_inf is zero".into()));
    }
    if den_pre == 0.0 {
        return Err(Error::UndefinedMetric("sum_i ||X_i b_i||_inf is zero".into()));
    }
    Ok(Metrics {
        l_par: num_par / den_par,
        l_pre: num_pre / den_pre,
    })
}

/// One aggregated row of the reproduction table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1Row {
    pub m: usize,
    pub l_par_mean: f64,
    pub l_par_sd: f64,
    pub l_pre_mean: f64,
    pub l_pre_sd: f64,
    pub replicates: usize,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Generates, fits (auto-tuned nuclear-norm penalty), and scores `replicates`
/// datasets per row-count; replicates run in parallel on derived seeds and
/// aggregate deterministically by index.
pub fn run_table1(
    template: &SimConfig,
    ring: &RingOptions,
    m_values: &[usize],
    replicates: usize,
) -> Result<Vec<Table1Row>> {
    if replicates == 0 {
        return Err(Error::InvalidInputs("replicates must be >= 1".into()));
    }
    if m_values.is_empty() {
        return Err(Error::InvalidInputs("need at least one m value".into()));
    }
    let mut rows = Vec::with_capacity(m_values.len());
    for (mi, &m) in m_values.iter().enumerate() {
        let metrics: Vec<Metrics> = (0..replicates)
            .into_par_iter()
            .map(|rep| -> Result<Metrics> {
                let config = SimConfig {
                    m,
                    seed: template
                        .seed
                        .wrapping_add(1_000_003 * (mi as u64 + 1))
                        .wrapping_add(rep as u64),
                    ..template.clone()
                };
                let (dataset, truth) = gen_decay(&config)?;
                let opts = RingOptions {
                    seed: config.seed ^ 0x0ff5e7,
                    ..ring.clone()
                };
                let (fit, _) = fit_ring(&dataset, &opts)?;
                compute_metrics(&truth, &fit, &dataset)
            })
            .collect::<Result<Vec<_>>>()?;
        let (l_par_mean, l_par_sd) = mean_sd(&metrics.iter().map(|m| m.l_par).collect::<Vec<_>>());
        let (l_pre_mean, l_pre_sd) = mean_sd(&metrics.iter().map(|m| m.l_pre).collect::<Vec<_>>());
        rows.push(Table1Row {
            m,
            l_par_mean,
            l_par_sd,
            l_pre_mean,
            l_pre_sd,
            replicates,
        });
    }
    Ok(rows)
}
