//! Restricted-eigenvalue constant estimation and evaluators for the
//! closed-form prediction/estimation/sparsity/persistence bounds.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MultiTaskDataset;
use crate::spectra;

/// Cone norm index of an RE estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeNorm {
    /// `l_{1,1}` cone (entrywise l1).
    Q1,
    /// `l_{2,1}` cone (per-task l2, summed).
    Q2,
    /// Low-dimensional-subspace cone with nuclear norms.
    Subspace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReMethod {
    Enumeration,
    Sampled,
}

/// A restricted-eigenvalue constant estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct REEstimate {
    pub s: usize,
    pub c0: f64,
    pub q: ConeNorm,
    pub kappa: f64,
    /// True only for exhaustive small-p enumeration with agreeing restarts.
    pub certified: bool,
    pub method: ReMethod,
    /// Set when the tasks-share-a-support restriction binds (n > 1).
    pub shared_support: bool,
}

/// Optimizer knobs for the RE estimators.
#[derive(Debug, Clone)]
pub struct ReOptions {
    pub restarts: usize,
    pub steps: usize,
    pub step_size: f64,
    /// Support samples in sampled mode / subspace samples for RE2.
    pub samples: usize,
    pub seed: u64,
}

impl Default for ReOptions {
    fn default() -> Self {
        ReOptions {
            restarts: 64,
            steps: 2000,
            step_size: 1e-2,
            samples: 200,
            seed: 0,
        }
    }
}

const ENUMERATION_MAX_P: usize = 12;

/// Projects `v` onto the l1 ball of the given radius, preserving signs.
fn project_l1_ball(v: &mut [f64], radius: f64) {
    if radius <= 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
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

/// Scales group magnitudes so their l1 norm fits the radius (projection onto
/// the l_{2,1} ball), returning per-group scale factors.
fn group_scales(norms: &[f64], radius: f64) -> Vec<f64> {
    let mut shrunk: Vec<f64> = norms.to_vec();
    project_l1_ball(&mut shrunk, radius);
    norms
        .iter()
        .zip(&shrunk)
        .map(|(&n, &s)| if n > 0.0 { s / n } else { 0.0 })
        .collect()
}

struct SparseCone<'a> {
    grams: &'a [DMatrix<f64>],
    inv_m: &'a [f64],
    support: &'a [usize],
    complement: &'a [usize],
    c0: f64,
    q: ConeNorm,
}

impl SparseCone<'_> {
    fn quad(&self, delta: &DMatrix<f64>) -> f64 {
        let mut total = 0.0;
        for (i, g) in self.grams.iter().enumerate() {
            let col = delta.column(i);
            total += (col.transpose() * g * col)[(0, 0)] * self.inv_m[i];
        }
        total
    }

    fn quad_grad(&self, delta: &DMatrix<f64>) -> DMatrix<f64> {
        let mut grad = DMatrix::zeros(delta.nrows(), delta.ncols());
        for (i, g) in self.grams.iter().enumerate() {
            grad.set_column(i, &(g * delta.column(i) * (2.0 * self.inv_m[i])));
        }
        grad
    }

    fn support_norm_sq(&self, delta: &DMatrix<f64>) -> f64 {
        self.support
            .iter()
            .map(|&l| delta.row(l).norm_squared())
            .sum()
    }

    fn ratio(&self, delta: &DMatrix<f64>) -> f64 {
        let d = self.support_norm_sq(delta);
        if d <= 0.0 {
            return f64::INFINITY;
        }
        (self.quad(delta) / d).sqrt()
    }

    fn ratio_grad(&self, delta: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.support_norm_sq(delta);
        let r_sq = self.quad(delta) / d;
        let mut grad = self.quad_grad(delta);
        for &l in self.support {
            for i in 0..delta.ncols() {
                grad[(l, i)] -= 2.0 * r_sq * delta[(l, i)];
            }
        }
        grad / d
    }

    fn lq1(&self, delta: &DMatrix<f64>, rows: &[usize]) -> f64 {
        match self.q {
            ConeNorm::Q1 => (0..delta.ncols())
                .map(|i| rows.iter().map(|&l| delta[(l, i)].abs()).sum::<f64>())
                .sum(),
            ConeNorm::Q2 => (0..delta.ncols())
                .map(|i| {
                    rows.iter()
                        .map(|&l| delta[(l, i)] * delta[(l, i)])
                        .sum::<f64>()
                        .sqrt()
                })
                .sum(),
            ConeNorm::Subspace => unreachable!("subspace cone handled separately"),
        }
    }

    /// Projects the complement block onto the cone and rescales the support
    /// block to unit Frobenius norm (both constraints are scale-compatible).
    fn project(&self, delta: &mut DMatrix<f64>) {
        let radius = self.c0 * self.lq1(delta, self.support);
        match self.q {
            ConeNorm::Q1 => {
                let mut flat: Vec<f64> = Vec::with_capacity(self.complement.len() * delta.ncols());
                for &l in self.complement {
                    for i in 0..delta.ncols() {
                        flat.push(delta[(l, i)]);
                    }
                }
                project_l1_ball(&mut flat, radius);
                let mut it = flat.into_iter();
                for &l in self.complement {
                    for i in 0..delta.ncols() {
                        delta[(l, i)] = it.next().expect("projection length");
                    }
                }
            }
            ConeNorm::Q2 => {
                let norms: Vec<f64> = (0..delta.ncols())
                    .map(|i| {
                        self.complement
                            .iter()
                            .map(|&l| delta[(l, i)] * delta[(l, i)])
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect();
                let scales = group_scales(&norms, radius);
                for (i, scale) in scales.iter().enumerate() {
                    for &l in self.complement {
                        delta[(l, i)] *= scale;
                    }
                }
            }
            ConeNorm::Subspace => unreachable!(),
        }
        let d = self.support_norm_sq(delta).sqrt();
        if d > 0.0 {
            *delta /= d;
        }
    }
}

fn minimize_over_cone(
    cone: &SparseCone,
    start: DMatrix<f64>,
    steps: usize,
    step0: f64,
) -> (f64, DMatrix<f64>) {
    let mut delta = start;
    cone.project(&mut delta);
    let mut best = delta.clone();
    let mut best_r = cone.ratio(&delta);
    let mut step = step0;
    for _ in 0..steps {
        if step < 1e-10 {
            break;
        }
        let grad = cone.ratio_grad(&delta);
        let gnorm = grad.norm();
        if gnorm < 1e-14 {
            break;
        }
        let mut trial = &delta - (step / gnorm) * grad;
        cone.project(&mut trial);
        let r = cone.ratio(&trial);
        if r < best_r - 1e-14 {
            best_r = r;
            best.copy_from(&trial);
            delta = trial;
        } else {
            delta.copy_from(&best);
            step *= 0.5;
        }
    }
    (best_r, best)
}

fn random_cone_start(
    rng: &mut ChaCha12Rng,
    p: usize,
    n: usize,
    support: &[usize],
) -> DMatrix<f64> {
    let mut delta = DMatrix::from_fn(p, n, |_, _| rng.gen_range(-1.0..1.0));
    // bias some starts toward the support to explore the cone boundary
    if rng.gen_bool(0.5) {
        for l in 0..p {
            if !support.contains(&l) {
                for i in 0..n {
                    delta[(l, i)] *= 0.2;
                }
            }
        }
    }
    delta
}

fn supports_of_size_at_most(p: usize, s: usize) -> Vec<Vec<usize>> {
    let mut all = Vec::new();
    let mut current = Vec::new();
    fn rec(start: usize, p: usize, left: usize, current: &mut Vec<usize>, all: &mut Vec<Vec<usize>>) {
        if !current.is_empty() {
            all.push(current.clone());
        }
        if left == 0 {
            return;
        }
        for l in start..p {
            current.push(l);
            rec(l + 1, p, left - 1, current, all);
            current.pop();
        }
    }
    rec(0, p, s, &mut current, &mut all);
    all
}

/// Estimates the restricted-eigenvalue constant
/// `kappa = min ||X^T D||_2 / (sqrt(m) ||D_J||_2)` over supports of size at
/// most `s` (shared across tasks) and cone elements
/// `||D_{J^c}||_{q,1} <= c0 ||D_J||_{q,1}`.
///
/// For `p <= 12` every support is enumerated and the result can be certified;
/// otherwise supports are sampled and the estimate is a heuristic upper cover.
pub fn re_constant(
    dataset: &MultiTaskDataset,
    s: usize,
    c0: f64,
    q: ConeNorm,
) -> Result<REEstimate> {
    re_constant_with(dataset, s, c0, q, &ReOptions::default())
}

pub fn re_constant_with(
    dataset: &MultiTaskDataset,
    s: usize,
    c0: f64,
    q: ConeNorm,
    opts: &ReOptions,
) -> Result<REEstimate> {
    if matches!(q, ConeNorm::Subspace) {
        return Err(Error::InvalidInputs(
            "use re2_constant for the subspace cone".into(),
        ));
    }
    let p = dataset.n_features();
    let n = dataset.n_tasks();
    if s == 0 || s > p {
        return Err(Error::InvalidInputs(format!(
            "sparsity level {s} out of range for p = {p}"
        )));
    }
    if c0 <= 0.0 {
        return Err(Error::InvalidInputs("c0 must be > 0".into()));
    }
    let grams: Vec<DMatrix<f64>> = dataset
        .tasks()
        .iter()
        .map(|t| t.design.transpose() * &t.design)
        .collect();
    let inv_m: Vec<f64> = dataset.tasks().iter().map(|t| 1.0 / t.rows() as f64).collect();

    let enumerate = p <= ENUMERATION_MAX_P;
    let supports: Vec<Vec<usize>> = if enumerate {
        supports_of_size_at_most(p, s)
    } else {
        let mut rng = ChaCha12Rng::seed_from_u64(opts.seed ^ 0x5eed_0001);
        (0..opts.samples)
            .map(|_| {
                let mut idx: Vec<usize> = (0..p).collect();
                for k in 0..s {
                    let j = rng.gen_range(k..p);
                    idx.swap(k, j);
                }
                let mut chosen = idx[..s].to_vec();
                chosen.sort_unstable();
                chosen
            })
            .collect()
    };

    let all_rows: Vec<usize> = (0..p).collect();
    let mut kappa = f64::INFINITY;
    let mut agreeing = false;
    for support in &supports {
        let complement: Vec<usize> = all_rows
            .iter()
            .copied()
            .filter(|l| !support.contains(l))
            .collect();
        let cone = SparseCone {
            grams: &grams,
            inv_m: &inv_m,
            support,
            complement: &complement,
            c0,
            q,
        };
        let mut values = Vec::with_capacity(opts.restarts);
        let mut rng = ChaCha12Rng::seed_from_u64(
            opts.seed ^ support.iter().fold(0u64, |h, &l| h.wrapping_mul(31).wrapping_add(l as u64)),
        );
        for _ in 0..opts.restarts {
            let start = random_cone_start(&mut rng, p, n, support);
            let (r, _) = minimize_over_cone(&cone, start, opts.steps, opts.step_size);
            values.push(r);
        }
        let local = values.iter().copied().fold(f64::INFINITY, f64::min);
        if local < kappa {
            kappa = local;
            agreeing = values.iter().filter(|v| **v - local < 1e-4).count() >= 2;
        }
    }

    Ok(REEstimate {
        s,
        c0,
        q,
        kappa,
        certified: enumerate && agreeing,
        method: if enumerate {
            ReMethod::Enumeration
        } else {
            ReMethod::Sampled
        },
        shared_support: n > 1,
    })
}

struct SubspaceCone<'a> {
    grams: &'a [DMatrix<f64>],
    inv_m: &'a [f64],
    /// Orthonormal basis of V, p x s.
    basis: &'a DMatrix<f64>,
    c0: f64,
}

impl SubspaceCone<'_> {
    fn split(&self, delta: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let par = self.basis * (self.basis.transpose() * delta);
        let perp = delta - &par;
        (par, perp)
    }

    fn quad(&self, delta: &DMatrix<f64>) -> f64 {
        let mut total = 0.0;
        for (i, g) in self.grams.iter().enumerate() {
            let col = delta.column(i);
            total += (col.transpose() * g * col)[(0, 0)] * self.inv_m[i];
        }
        total
    }

    fn ratio(&self, delta: &DMatrix<f64>) -> f64 {
        let (par, _) = self.split(delta);
        let d = par.norm_squared();
        if d <= 0.0 {
            return f64::INFINITY;
        }
        (self.quad(delta) / d).sqrt()
    }

    fn ratio_grad(&self, delta: &DMatrix<f64>) -> DMatrix<f64> {
        let (par, _) = self.split(delta);
        let d = par.norm_squared();
        let r_sq = self.quad(delta) / d;
        let mut grad = DMatrix::zeros(delta.nrows(), delta.ncols());
        for (i, g) in self.grams.iter().enumerate() {
            grad.set_column(i, &(g * delta.column(i) * (2.0 * self.inv_m[i])));
        }
        grad -= par * (2.0 * r_sq);
        grad / d
    }

    fn project(&self, delta: &mut DMatrix<f64>) -> Result<()> {
        let (par, perp) = self.split(delta);
        let radius = self.c0 * spectra::nuclear_norm(&par)?;
        let projected_perp = project_nuclear_ball(&perp, radius)?;
        *delta = &par + projected_perp;
        let d = par.norm();
        if d > 0.0 {
            *delta /= d;
        }
        Ok(())
    }
}

/// Projects a matrix onto the nuclear-norm ball of the given radius.
fn project_nuclear_ball(m: &DMatrix<f64>, radius: f64) -> Result<DMatrix<f64>> {
    if radius <= 0.0 {
        return Ok(DMatrix::zeros(m.nrows(), m.ncols()));
    }
    let svd = spectra::svd(m)?;
    let total: f64 = svd.singulars.iter().sum();
    if total <= radius {
        return Ok(m.clone());
    }
    let mut vals: Vec<f64> = svd.singulars.iter().copied().collect();
    project_l1_ball(&mut vals, radius);
    let shrunk = DVector::from_vec(vals);
    Ok(&svd.left * DMatrix::from_diagonal(&shrunk) * svd.right.transpose())
}

/// Heuristic lower-confidence estimate of the subspace restricted-eigenvalue
/// constant (Haar-sampled s-dimensional subspaces, projected-gradient
/// refinement of cone elements). Never certified.
pub fn re2_constant(dataset: &MultiTaskDataset, s: usize) -> Result<REEstimate> {
    re2_constant_with(dataset, s, &ReOptions {
        samples: 64,
        steps: 400,
        ..Default::default()
    })
}

pub fn re2_constant_with(
    dataset: &MultiTaskDataset,
    s: usize,
    opts: &ReOptions,
) -> Result<REEstimate> {
    let p = dataset.n_features();
    let n = dataset.n_tasks();
    if s == 0 || s > p {
        return Err(Error::InvalidInputs(format!(
            "subspace dimension {s} out of range for p = {p}"
        )));
    }
    let c0 = 3.0;
    let grams: Vec<DMatrix<f64>> = dataset
        .tasks()
        .iter()
        .map(|t| t.design.transpose() * &t.design)
        .collect();
    let inv_m: Vec<f64> = dataset.tasks().iter().map(|t| 1.0 / t.rows() as f64).collect();

    let mut kappa = f64::INFINITY;
    for sample in 0..opts.samples {
        // derived stream per sample so a longer run extends a shorter one
        let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
        rng.set_stream(sample as u64 + 1);
        let frame = DMatrix::from_fn(p, s, |_, _| standard_normal(&mut rng));
        let basis = frame.qr().q().columns(0, s).clone_owned();
        let cone = SubspaceCone {
            grams: &grams,
            inv_m: &inv_m,
            basis: &basis,
            c0,
        };
        let mut delta = DMatrix::from_fn(p, n, |_, _| standard_normal(&mut rng));
        cone.project(&mut delta)?;
        let mut best_r = cone.ratio(&delta);
        let mut best = delta.clone();
        let mut step = opts.step_size;
        for _ in 0..opts.steps {
            if step < 1e-10 {
                break;
            }
            let grad = cone.ratio_grad(&delta);
            let gnorm = grad.norm();
            if gnorm < 1e-14 {
                break;
            }
            let mut trial = &delta - (step / gnorm) * grad;
            cone.project(&mut trial)?;
            let r = cone.ratio(&trial);
            if r < best_r - 1e-14 {
                best_r = r;
                best.copy_from(&trial);
                delta = trial;
            } else {
                delta.copy_from(&best);
                step *= 0.5;
            }
        }
        kappa = kappa.min(best_r);
    }

    Ok(REEstimate {
        s,
        c0,
        q: ConeNorm::Subspace,
        kappa,
        certified: false,
        method: ReMethod::Sampled,
        shared_support: n > 1,
    })
}

fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(rng)
}

/// One evaluated bound with an optional observed counterpart.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundPart {
    pub name: String,
    pub value: f64,
    pub observed: Option<f64>,
    pub satisfied: Option<bool>,
}

/// A named bound evaluation: inputs, per-part values, and optional
/// observed-vs-bound verdicts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound: String,
    pub inputs: BTreeMap<String, f64>,
    pub parts: Vec<BoundPart>,
}

impl BoundReport {
    fn new(bound: &str, inputs: &[(&str, f64)]) -> Self {
        BoundReport {
            bound: bound.to_string(),
            inputs: inputs
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            parts: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, value: f64) {
        self.parts.push(BoundPart {
            name: name.to_string(),
            value,
            observed: None,
            satisfied: None,
        });
    }

    pub fn part(&self, name: &str) -> Option<&BoundPart> {
        self.parts.iter().find(|p| p.name == name)
    }

    /// Records an observed quantity against a named part.
    pub fn observe(&mut self, name: &str, observed: f64) -> Result<()> {
        let part = self
            .parts
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::InvalidInputs(format!("no bound part named {name}")))?;
        part.observed = Some(observed);
        part.satisfied = Some(observed <= part.value);
        Ok(())
    }
}

/// Risk bound for the squared-l1 penalty: the comparison risk plus
/// `(lambda/m + delta) sum ||b~_i0||_1^2 - (lambda/m - delta) sum ||b^~_i||_1^2`.
///
/// `risk0` is the aggregate comparison risk `sum_i b~_i0^T S~_i b~_i0` and
/// `min_risk` the aggregate minimal risk (recorded for context).
pub fn bound_lassoes_theorem1(
    risk0: f64,
    min_risk: f64,
    lambda: f64,
    m: usize,
    delta_n: f64,
    norms0_sq: f64,
    norms_hat_sq: f64,
) -> Result<BoundReport> {
    if m == 0 {
        return Err(Error::InvalidInputs("m must be >= 1".into()));
    }
    let lm = lambda / m as f64;
    let mut report = BoundReport::new(
        "lassoes_squared_l1_risk",
        &[
            ("risk0", risk0),
            ("min_risk", min_risk),
            ("lambda", lambda),
            ("m", m as f64),
            ("delta_n", delta_n),
            ("norms0_sq", norms0_sq),
            ("norms_hat_sq", norms_hat_sq),
        ],
    );
    report.push(
        "risk",
        risk0 + (lm + delta_n) * norms0_sq - (lm - delta_n) * norms_hat_sq,
    );
    Ok(report)
}

/// Inputs for the powered-l1 oracle bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LassoL1pInputs {
    pub s: usize,
    pub kappa: f64,
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    /// Tail constant, must exceed sqrt(2).
    pub a_const: f64,
    pub alpha: f64,
    pub lambda: f64,
    /// Cap on max_i ||b_i||_1.
    pub b_cap: f64,
    /// Cap on max_i ||b^_i||_1.
    pub b_hat_cap: f64,
    pub phi_max: f64,
    /// A fit's `||X_i (b_i - b^_i)||_2^2`, enabling the per-task sparsity part.
    pub pred_sq_for_sparsity: Option<f64>,
}

/// Prediction, estimation, and sparsity bounds for the powered-l1 penalty
/// under RE_1(s, 3, kappa) with column-normalized designs.
pub fn bound_lasso_l1p(inp: &LassoL1pInputs) -> Result<BoundReport> {
    if inp.kappa <= 0.0 {
        return Err(Error::InvalidInputs("kappa must be > 0".into()));
    }
    if inp.a_const <= 2.0f64.sqrt() {
        return Err(Error::InvalidInputs(
            "tail constant must exceed sqrt(2)".into(),
        ));
    }
    if inp.alpha < 1.0 {
        return Err(Error::InvalidInputs("alpha must be >= 1".into()));
    }
    let (m, np) = (inp.m as f64, (inp.n * inp.p) as f64);
    let log_np = np.ln();
    let max_b = inp
        .b_cap
        .powf(inp.alpha - 1.0)
        .max(inp.b_hat_cap.powf(inp.alpha - 1.0));
    let s = inp.s as f64;

    let mut report = BoundReport::new(
        "lasso_l1p",
        &[
            ("s", s),
            ("kappa", inp.kappa),
            ("m", m),
            ("n", inp.n as f64),
            ("p", inp.p as f64),
            ("sigma", inp.sigma),
            ("a_const", inp.a_const),
            ("alpha", inp.alpha),
            ("lambda", inp.lambda),
            ("b_cap", inp.b_cap),
            ("b_hat_cap", inp.b_hat_cap),
            ("phi_max", inp.phi_max),
        ],
    );

    let bracket_a =
        1.5 * inp.alpha * inp.lambda / m.sqrt() * max_b + 2.0 * inp.a_const * inp.sigma * log_np.sqrt();
    report.push(
        "rms_prediction",
        s.sqrt() / (inp.kappa * m.sqrt()) * bracket_a,
    );

    let bracket_b =
        1.5 * inp.alpha * inp.lambda * max_b + 2.0 * inp.a_const * inp.sigma * (m * log_np).sqrt();
    report.push(
        "mean_estimation_l1",
        4.0 * s / (m * inp.kappa * inp.kappa) * bracket_b,
    );

    if let Some(pred_sq) = inp.pred_sq_for_sparsity {
        let denom = inp.lambda * inp.alpha * inp.b_hat_cap.powf(inp.alpha - 1.0) / 2.0
            - inp.a_const * inp.sigma * (m * log_np).sqrt();
        if denom <= 0.0 {
            return Err(Error::InvalidInputs(
                "sparsity bound needs lambda alpha B^ / 2 above the noise level".into(),
            ));
        }
        report.push(
            "per_task_sparsity",
            pred_sq * m * inp.phi_max / (denom * denom),
        );
    }
    Ok(report)
}

/// Inputs for the merged bounds with the data-driven norm cap.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct L12Merge2Inputs {
    pub s: usize,
    pub kappa: f64,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub sigma: f64,
    pub a_const: f64,
    /// Cap on max_i ||b_i||_1.
    pub b: f64,
    pub eta: f64,
    pub alpha: f64,
    /// The existential constant; 1 by convention, not canonical.
    pub c_const: f64,
    pub phi_max: f64,
    pub delta: f64,
}

/// Prediction, estimation, and average-sparsity bounds with the bracket
/// `[1 + 3C (b/sqrt(eta))^((alpha-1)/(alpha-2))]`.
pub fn bound_l12merge2(inp: &L12Merge2Inputs) -> Result<BoundReport> {
    if inp.alpha <= 2.0 {
        return Err(Error::InvalidInputs("alpha must exceed 2".into()));
    }
    if !(inp.eta > 0.0 && inp.eta < 1.0) {
        return Err(Error::InvalidInputs("eta must be in (0,1)".into()));
    }
    if inp.kappa <= 0.0 {
        return Err(Error::InvalidInputs("kappa must be > 0".into()));
    }
    let (m, n, s) = (inp.m as f64, inp.n as f64, inp.s as f64);
    let log_np = ((inp.n * inp.p) as f64).ln();
    let exponent = (inp.alpha - 1.0) / (inp.alpha - 2.0);
    let bracket = 1.0 + 3.0 * inp.c_const * (inp.b / inp.eta.sqrt()).powf(exponent);

    let mut report = BoundReport::new(
        "l12merge2",
        &[
            ("s", s),
            ("kappa", inp.kappa),
            ("n", n),
            ("m", m),
            ("p", inp.p as f64),
            ("sigma", inp.sigma),
            ("a_const", inp.a_const),
            ("b", inp.b),
            ("eta", inp.eta),
            ("alpha", inp.alpha),
            ("c_const", inp.c_const),
            ("phi_max", inp.phi_max),
            ("delta", inp.delta),
            ("bracket", bracket),
        ],
    );
    let a2 = inp.a_const * inp.a_const;
    report.push(
        "prediction_sq",
        4.0 * a2 * inp.sigma * inp.sigma * s * n * log_np / (inp.kappa * inp.kappa)
            * bracket
            * bracket,
    );
    report.push(
        "estimation_l1",
        2.0 * inp.a_const * inp.sigma * s * n * log_np.sqrt()
            / (inp.kappa * inp.kappa * m.sqrt())
            * bracket,
    );
    report.push(
        "average_sparsity",
        s * 4.0 * inp.phi_max / (inp.kappa * inp.kappa * inp.delta * inp.delta)
            * bracket
            * bracket,
    );
    Ok(report)
}

/// Nuclear-norm fit bounds: prediction `64(A+1) sigma^2 s p / (kappa^2 m)`,
/// estimation `32 sigma sqrt(1+A) s sqrt(p) / (kappa^2 sqrt(mn))`, rank
/// `64 s phi_max / kappa^2`, and the prescribed
/// `lambda = 4 sigma sqrt((A+1) m n p)`.
pub fn bound_ring(
    s: usize,
    p: usize,
    n: usize,
    m: usize,
    sigma: f64,
    a_const: f64,
    kappa: f64,
    phi_max: f64,
) -> Result<BoundReport> {
    if a_const <= 1.0 {
        return Err(Error::InvalidInputs("tail constant must exceed 1".into()));
    }
    if kappa <= 0.0 {
        return Err(Error::InvalidInputs("kappa must be > 0".into()));
    }
    let (sf, pf, nf, mf) = (s as f64, p as f64, n as f64, m as f64);
    let mut report = BoundReport::new(
        "ring_re2",
        &[
            ("s", sf),
            ("p", pf),
            ("n", nf),
            ("m", mf),
            ("sigma", sigma),
            ("a_const", a_const),
            ("kappa", kappa),
            ("phi_max", phi_max),
        ],
    );
    report.push(
        "prediction",
        64.0 * (a_const + 1.0) * sigma * sigma * sf * pf / (kappa * kappa * mf),
    );
    report.push(
        "estimation_nuclear",
        32.0 * sigma * (1.0 + a_const).sqrt() * sf * pf.sqrt()
            / (kappa * kappa * (mf * nf).sqrt()),
    );
    report.push("rank", 64.0 * sf * phi_max / (kappa * kappa));
    report.push(
        "lambda",
        4.0 * sigma * ((a_const + 1.0) * mf * nf * pf).sqrt(),
    );
    Ok(report)
}

/// Persistence bounds: the moment-deviation level
/// `sqrt(2 e V log(n (p+1)^2) / (m eta))`, the induced risk gap for a given
/// `sum ||b_i||_1^2`, and the trace-norm-ball persistence bound
/// `(1/m + p b^2/(n m)) sqrt(16 e V log(np) / (m eta))`.
pub fn bound_persistence(
    v: f64,
    n: usize,
    p: usize,
    m: usize,
    eta: f64,
    b: f64,
    sum_norms1_sq: Option<f64>,
) -> Result<BoundReport> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidInputs("eta must be in (0,1)".into()));
    }
    if v <= 0.0 {
        return Err(Error::InvalidInputs("moment bound must be > 0".into()));
    }
    let (nf, pf, mf) = (n as f64, p as f64, m as f64);
    let e = std::f64::consts::E;
    let mut report = BoundReport::new(
        "persistence",
        &[
            ("v", v),
            ("n", nf),
            ("p", pf),
            ("m", mf),
            ("eta", eta),
            ("b", b),
        ],
    );
    let level = (2.0 * e * v * (nf * (pf + 1.0) * (pf + 1.0)).ln() / (mf * eta)).sqrt();
    report.push("moment_deviation", level);
    if let Some(sum_sq) = sum_norms1_sq {
        report.push("risk_gap", level / (nf * mf) * (nf + sum_sq));
    }
    report.push(
        "trace_ball_gap",
        (1.0 / mf + pf * b * b / (nf * mf)) * (16.0 * e * v * (nf * pf).ln() / (mf * eta)).sqrt(),
    );
    Ok(report)
}

/// Design-level constants entering the bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignConstants {
    /// Largest eigenvalue of `X_i^T X_i / m_i` over tasks.
    pub phi_max: f64,
    /// `max_l sqrt(sum_ij x_ijl^2)`.
    pub lambda_x: f64,
    /// `max_i sqrt(sum_lj x_ijl^2)` (largest task Frobenius norm).
    pub tilde_lambda_x: f64,
    pub column_normalized: bool,
}

pub fn design_constants(dataset: &MultiTaskDataset) -> Result<DesignConstants> {
    let p = dataset.n_features();
    let mut phi_max = 0.0f64;
    for t in dataset.tasks() {
        let gram = t.design.transpose() * &t.design / t.rows() as f64;
        let spec = spectra::SymSpectrum::decompose_psd(&gram)?;
        phi_max = phi_max.max(spec.eigenvalues[0]);
    }
    let lambda_x = (0..p)
        .map(|l| {
            dataset
                .tasks()
                .iter()
                .map(|t| t.design.column(l).norm_squared())
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0f64, f64::max);
    let tilde_lambda_x = dataset
        .tasks()
        .iter()
        .map(|t| t.design.norm())
        .fold(0.0f64, f64::max);
    Ok(DesignConstants {
        phi_max,
        lambda_x,
        tilde_lambda_x,
        column_normalized: dataset.is_column_normalized(),
    })
}
