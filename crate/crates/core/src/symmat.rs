//! Dense symmetric matrices with tolerance-governed semidefiniteness and
//! kernel queries.
//!
//! Every eigenvalue routine in the crate goes through [`eig_sym`]. The
//! decomposition starts from nalgebra's symmetric QR iteration and is
//! finished with cyclic Jacobi sweeps; this module adds ordering,
//! validation and the relative tolerance conventions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense symmetric matrix. Symmetry is exact: the constructor averages the
/// input with its transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
}

impl SymMatrix {
    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidMatrix(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidMatrix("dimension must be at least 1".into()));
        }
        let t = m.transpose();
        let data = (m + t) * 0.5;
        Ok(Self { data })
    }

    /// Builds from a row-major entry list of length `dim * dim`.
    pub fn from_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        Self::from_dmatrix(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self {
            data: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self {
            data: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        assert!(!diag.is_empty(), "dimension must be at least 1");
        Self {
            data: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
        }
    }

    /// `G Gᵀ` for an arbitrary `n x k` factor.
    pub fn gram(factor: &DMatrix<f64>) -> Self {
        let data = factor * factor.transpose();
        Self::from_dmatrix(data).expect("gram matrix is square")
    }

    /// Wraps a matrix the caller guarantees to be symmetric.
    pub(crate) fn from_symmetric_unchecked(data: DMatrix<f64>) -> Self {
        debug_assert_eq!(data.nrows(), data.ncols());
        Self { data }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.data[(i, j)]);
            }
        }
        out
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.data * v))
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, other: &SymMatrix, alpha: f64) -> Result<SymMatrix> {
        check_same_dim(self, other)?;
        Ok(Self {
            data: &self.data + &other.data * alpha,
        })
    }

    pub fn scaled(&self, alpha: f64) -> SymMatrix {
        Self {
            data: &self.data * alpha,
        }
    }

    /// `self + shift * I`.
    pub fn shifted(&self, shift: f64) -> SymMatrix {
        let mut data = self.data.clone();
        for i in 0..data.nrows() {
            data[(i, i)] += shift;
        }
        Self { data }
    }
}

pub(crate) fn check_same_dim(a: &SymMatrix, b: &SymMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// Relative tolerances used by semidefiniteness and kernel decisions. Both
/// are scaled by `1 + max |entry|` of the matrix under test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolerancePolicy {
    pub psd_tol: f64,
    pub kernel_tol: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self {
            psd_tol: 1e-10,
            kernel_tol: 1e-8,
        }
    }
}

impl TolerancePolicy {
    pub fn new(psd_tol: f64, kernel_tol: f64) -> Result<Self> {
        if !(psd_tol >= 0.0 && kernel_tol >= 0.0) {
            return Err(Error::InvalidConfig(
                "tolerances must be nonnegative".into(),
            ));
        }
        Ok(Self { psd_tol, kernel_tol })
    }

    pub fn psd_threshold(&self, x: &SymMatrix) -> f64 {
        self.psd_tol * (1.0 + x.max_abs())
    }

    pub fn kernel_threshold(&self, x: &SymMatrix) -> f64 {
        self.kernel_tol * (1.0 + x.max_abs())
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors
/// stored as columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }
}

pub fn eig_sym(x: &SymMatrix) -> Result<Spectrum> {
    if !x.is_finite() {
        return Err(Error::InvalidMatrix("non-finite entry".into()));
    }
    Ok(sorted_eigen(x.data.clone()))
}

/// Ascending eigendecomposition of a symmetric matrix that is known to be
/// finite.
pub(crate) fn sorted_eigen(m: DMatrix<f64>) -> Spectrum {
    let n = m.nrows();
    let mut v = SymmetricEigen::new(m.clone()).eigenvectors;
    // nalgebra leaves off-diagonal residue around 1e-9 relative; polish it.
    let mut d = v.transpose() * &m * &v;
    jacobi_sweeps(&mut d, &mut v);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[(a, a)].total_cmp(&d[(b, b)]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| d[(i, i)]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &v.column(src));
    }
    Spectrum {
        eigenvalues,
        eigenvectors,
    }
}

/// Cyclic Jacobi rotations applied to `a` (in place, driven to diagonal)
/// and accumulated into the columns of `v`.
fn jacobi_sweeps(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    let n = a.nrows();
    for _ in 0..20 {
        let norm = a.norm();
        let negligible = 1e-18 * norm;
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= negligible {
                    continue;
                }
                rotated = true;
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
}

pub fn is_psd(x: &SymMatrix, tol: &TolerancePolicy) -> Result<bool> {
    let spec = eig_sym(x)?;
    Ok(spec.min() >= -tol.psd_threshold(x))
}

/// Orthonormal basis (as columns, possibly zero of them) of the numerical
/// kernel of a PSD matrix.
pub fn kernel_basis(x: &SymMatrix, tol: &TolerancePolicy) -> Result<DMatrix<f64>> {
    let spec = eig_sym(x)?;
    kernel_from_spectrum(x, &spec, tol)
}

pub(crate) fn kernel_from_spectrum(
    x: &SymMatrix,
    spec: &Spectrum,
    tol: &TolerancePolicy,
) -> Result<DMatrix<f64>> {
    if spec.min() < -tol.psd_threshold(x) {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: spec.min(),
        });
    }
    let cut = tol.kernel_threshold(x);
    let k = spec.eigenvalues.iter().take_while(|&&l| l <= cut).count();
    Ok(spec.eigenvectors.columns(0, k).into_owned())
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// sign of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `U diag(mu) U'` with Haar `U`, `rank` eigenvalues log-uniform in
/// `[lo, hi]` and the remaining `n - rank` exactly zero.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, n: usize, rank: usize, lo: f64, hi: f64) -> SymMatrix {
    let u = random_orthogonal(rng, n);
    let (a, b) = (lo.ln(), hi.ln());
    let mut mu = DVector::zeros(n);
    for i in 0..rank.min(n) {
        mu[i] = (a + (b - a) * rng.random::<f64>()).exp();
    }
    let m = &u * DMatrix::from_diagonal(&mu) * u.transpose();
    SymMatrix::from_symmetric_unchecked((&m + m.transpose()) * 0.5)
}
