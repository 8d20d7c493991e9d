//! Dense symmetric eigendecompositions, matrix powers of PSD matrices,
//! Moore-Penrose inverse square roots, nuclear norms, and eigenvalue
//! directional derivatives.
//!
//! All operations are pure functions on immutable inputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative symmetry tolerance: inputs with `max|A - A^T| > SYM_TOL_REL * max|A|`
/// are rejected, smaller asymmetry is removed by averaging with the transpose.
pub const SYM_TOL_REL: f64 = 1e-8;

/// Negative eigenvalue dust below this (scaled by `1 + max|c|`) is clamped to
/// zero; anything more negative is an indefiniteness error.
pub const NEG_DUST: f64 = 1e-8;

const SVD_MAX_ITER: usize = 10_000;

/// Eigendecomposition of a symmetric matrix, eigenvalues nonincreasing.
#[derive(Debug, Clone)]
pub struct SymSpectrum {
    /// Eigenvalues sorted in nonincreasing order.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors, column k pairing with `eigenvalues[k]`.
    pub eigenvectors: DMatrix<f64>,
}

impl SymSpectrum {
    /// Decomposes a symmetric matrix. Asymmetry within tolerance is averaged
    /// away; larger asymmetry is an error.
    pub fn decompose(a: &DMatrix<f64>) -> Result<Self> {
        let a = symmetrize(a)?;
        let eig = a
            .clone()
            .try_symmetric_eigen(f64::EPSILON, SVD_MAX_ITER)
            .ok_or(Error::ConvergenceFailure)?;
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let p = a.nrows();
        let eigenvalues = DVector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
        let eigenvectors = DMatrix::from_columns(
            &order
                .iter()
                .map(|&i| eig.eigenvectors.column(i).clone_owned())
                .collect::<Vec<_>>(),
        );
        Ok(SymSpectrum {
            eigenvalues,
            eigenvectors,
        })
    }

    /// Decomposes a positive semi-definite matrix. Negative eigenvalue dust is
    /// clamped to zero; a genuinely negative eigenvalue is rejected.
    pub fn decompose_psd(a: &DMatrix<f64>) -> Result<Self> {
        let mut spec = Self::decompose(a)?;
        let max_abs = spec.eigenvalues.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let dust = NEG_DUST * (1.0 + max_abs);
        for c in spec.eigenvalues.iter_mut() {
            if *c < 0.0 {
                if *c < -dust {
                    return Err(Error::IndefiniteInput { eigenvalue: *c });
                }
                *c = 0.0;
            }
        }
        Ok(spec)
    }

    /// Rebuilds the matrix `sum_k c_k x_k x_k^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = &self.eigenvectors * DMatrix::from_diagonal(&self.eigenvalues);
        scaled * self.eigenvectors.transpose()
    }

    /// Rank tolerance `p * eps * c_max` used to separate zero eigenvalues.
    pub fn rank_tolerance(&self) -> f64 {
        let c_max = self.eigenvalues.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        self.eigenvalues.len() as f64 * f64::EPSILON * c_max
    }
}

/// Thin singular value decomposition `B = sum_xi alpha_xi u_xi v_xi^T`,
/// truncated to the numerical rank.
#[derive(Debug, Clone)]
pub struct Svd {
    /// p x r orthonormal left singular vectors.
    pub left: DMatrix<f64>,
    /// r singular values, nonincreasing and positive.
    pub singulars: DVector<f64>,
    /// n x r orthonormal right singular vectors.
    pub right: DMatrix<f64>,
}

impl Svd {
    /// Numerical rank (number of retained singular triples).
    pub fn rank(&self) -> usize {
        self.singulars.len()
    }

    /// Rebuilds `sum_xi alpha_xi u_xi v_xi^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.left * DMatrix::from_diagonal(&self.singulars) * self.right.transpose()
    }
}

fn check_finite(b: &DMatrix<f64>, what: &str) -> Result<()> {
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what.to_string()));
    }
    Ok(())
}

/// Averages `(A + A^T)/2` after checking the asymmetry is within tolerance.
fn symmetrize(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_finite(a, "symmetric input")?;
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let max_abs = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut asym = 0.0f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    let tol = SYM_TOL_REL * max_abs.max(f64::MIN_POSITIVE);
    if asym > tol {
        return Err(Error::NonSymmetric { asym, tol });
    }
    Ok((a + a.transpose()) * 0.5)
}

/// Matrix power `A^gamma = sum c_i^gamma x_i x_i^T` of a PSD matrix.
///
/// For `gamma < 0` only eigenvalues above the rank tolerance participate
/// (pseudo-power); for `gamma >= 0` all do, with `0^0 := 0`.
pub fn psd_power(a: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    let spec = SymSpectrum::decompose_psd(a)?;
    let tau = spec.rank_tolerance();
    let powered = DVector::from_iterator(
        spec.eigenvalues.len(),
        spec.eigenvalues.iter().map(|&c| {
            if gamma < 0.0 {
                if c > tau {
                    c.powf(gamma)
                } else {
                    0.0
                }
            } else if c == 0.0 {
                // covers 0^0 := 0 as well as 0^gamma for gamma > 0
                0.0
            } else {
                c.powf(gamma)
            }
        }),
    );
    Ok(&spec.eigenvectors * DMatrix::from_diagonal(&powered) * spec.eigenvectors.transpose())
}

/// Moore-Penrose generalized inverse of `A^{1/2}` for PSD `A`:
/// `sum_{c_i > tau} c_i^{-1/2} x_i x_i^T` with rank tolerance
/// `tau = p * eps * c_max`.
pub fn pinv_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    psd_power(a, -0.5)
}

/// Nuclear (trace / Schatten-1) norm: the sum of singular values, equal to
/// `trace{(B B^T)^{1/2}}`.
pub fn nuclear_norm(b: &DMatrix<f64>) -> Result<f64> {
    check_finite(b, "nuclear norm input")?;
    let sv = b
        .clone()
        .try_svd(false, false, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(Error::ConvergenceFailure)?;
    Ok(sv.singular_values.iter().sum())
}

/// Thin SVD truncated at the numerical rank, singular values nonincreasing.
pub fn svd(b: &DMatrix<f64>) -> Result<Svd> {
    check_finite(b, "svd input")?;
    let decomposition = b
        .clone()
        .try_svd(true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(Error::ConvergenceFailure)?;
    let u = decomposition.u.expect("left singular vectors requested");
    let v_t = decomposition.v_t.expect("right singular vectors requested");
    let sv = &decomposition.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let max_sv = sv.iter().fold(0.0f64, |m, v| m.max(*v));
    let tol = b.nrows().max(b.ncols()) as f64 * f64::EPSILON * max_sv;
    let kept: Vec<usize> = order.into_iter().filter(|&i| sv[i] > tol).collect();

    let r = kept.len();
    let mut left = DMatrix::zeros(b.nrows(), r);
    let mut right = DMatrix::zeros(b.ncols(), r);
    let mut singulars = DVector::zeros(r);
    for (out, &i) in kept.iter().enumerate() {
        left.set_column(out, &u.column(i));
        right.set_column(out, &v_t.row(i).transpose());
        singulars[out] = sv[i];
    }
    Ok(Svd {
        left,
        singulars,
        right,
    })
}

/// First-order change of the k-th largest eigenvalue of a PSD matrix under a
/// symmetric perturbation: `x_k^T Adot x_k`, valid when the eigenvalue is
/// simple. `k` is a zero-based index into the nonincreasing spectrum.
pub fn eig_directional_derivative(
    a: &DMatrix<f64>,
    adot: &DMatrix<f64>,
    k: usize,
) -> Result<f64> {
    let spec = SymSpectrum::decompose_psd(a)?;
    let adot = symmetrize(adot)?;
    let p = spec.eigenvalues.len();
    if k >= p {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalue index {k} out of range for size {p}"
        )));
    }
    if adot.nrows() != p {
        return Err(Error::DimensionMismatch(format!(
            "perturbation is {}x{}, matrix is {}x{}",
            adot.nrows(),
            adot.ncols(),
            p,
            p
        )));
    }
    let spectral_norm = spec.eigenvalues.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let tol = 1e-6 * spectral_norm;
    let mut gap = f64::INFINITY;
    if k > 0 {
        gap = gap.min((spec.eigenvalues[k - 1] - spec.eigenvalues[k]).abs());
    }
    if k + 1 < p {
        gap = gap.min((spec.eigenvalues[k] - spec.eigenvalues[k + 1]).abs());
    }
    if gap <= tol {
        return Err(Error::DegenerateEigenvalue { index: k, gap, tol });
    }
    let x = spec.eigenvectors.column(k);
    Ok((x.transpose() * &adot * x)[(0, 0)])
}
