//! Extended-real maximum and minimum generalized eigenvalues of PSD matrix
//! pairs, their `Y + eps I` regularization, and composite evaluation along
//! affine matrix pencils.
//!
//! For a pair `(X, Y)` of PSD matrices the maximum generalized eigenvalue is
//!
//! ```text
//! lambda_max(X, Y) = sup_{v not in ker Y} v'Xv / v'Yv   if Y != 0
//!                  = +inf                               if X != 0, Y = 0
//!                  = 0                                  if X = Y = 0
//! ```
//!
//! which coincides with `inf { a >= 0 : aY - X is PSD }`. The value is
//! finite exactly when `ker Y` is contained in `ker X`; in that case the
//! supremum is attained on the orthogonal complement of `ker Y`, where the
//! pencil is definite.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::symmat::{check_same_dim, eig_sym, is_psd, sorted_eigen, SymMatrix, TolerancePolicy};

/// Values of the extended maximum/minimum eigenvalue functions: a finite
/// nonnegative number or `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinity,
}

impl ExtReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, ExtReal::Infinity)
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Infinity => None,
        }
    }

    /// `f64` view with `+inf` mapped to `f64::INFINITY`.
    pub fn to_f64(&self) -> f64 {
        match *self {
            ExtReal::Finite(v) => v,
            ExtReal::Infinity => f64::INFINITY,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v == f64::INFINITY {
            ExtReal::Infinity
        } else {
            ExtReal::Finite(v)
        }
    }

    /// Reciprocal with `1/0 = inf` and `1/inf = 0`.
    pub fn recip(&self) -> ExtReal {
        match *self {
            ExtReal::Infinity => ExtReal::Finite(0.0),
            ExtReal::Finite(0.0) => ExtReal::Infinity,
            ExtReal::Finite(v) => ExtReal::Finite(1.0 / v),
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinity => write!(f, "inf"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            ExtReal::Finite(v) => s.serialize_f64(v),
            ExtReal::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(ExtReal::Finite(v)),
            Repr::Str(s) if s == "inf" => Ok(ExtReal::Infinity),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {s:?}"))),
        }
    }
}

/// Which branch of the definition produced a [`GenEigResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    /// `X = Y = 0`.
    ZeroZero,
    /// Some kernel direction of `Y` is not in the kernel of `X` (covers `Y = 0, X != 0`).
    InfiniteByKernelEscape,
    /// Finite value from the definite pencil on `(ker Y)^perp`.
    ReducedPencil,
    /// Value of the regularized pencil `(X, Y + eps I)`.
    Regularized,
}

#[derive(Debug, Clone)]
pub struct GenEigResult {
    pub value: ExtReal,
    pub eigenvector: Option<DVector<f64>>,
    pub certificate: Certificate,
}

/// Affine symmetric-matrix map `x -> A0 + sum_j x_j A_j`.
///
/// Coefficients are kept both dense and as sparse upper-triangle triplets;
/// assembly and the quadratic forms `v'A_j v` use the sparse copy.
#[derive(Debug, Clone)]
pub struct AffinePencil {
    constant: SymMatrix,
    coefficients: Vec<SymMatrix>,
    sparse: Vec<Vec<(usize, usize, f64)>>,
}

impl AffinePencil {
    /// Builds a pencil, checking dimensions and that every coefficient is
    /// PSD under the default tolerance.
    pub fn new(constant: SymMatrix, coefficients: Vec<SymMatrix>) -> Result<Self> {
        let tol = TolerancePolicy::default();
        for c in &coefficients {
            check_same_dim(&constant, c)?;
            if !is_psd(c, &tol)? {
                let min_eigenvalue = eig_sym(c)?.min();
                return Err(Error::NotPositiveSemidefinite { min_eigenvalue });
            }
        }
        if !constant.is_finite() {
            return Err(Error::InvalidMatrix("non-finite constant term".into()));
        }
        let sparse = coefficients.iter().map(upper_triplets).collect();
        Ok(Self {
            constant,
            coefficients,
            sparse,
        })
    }

    /// Pencil with zero constant term.
    pub fn linear(coefficients: Vec<SymMatrix>) -> Result<Self> {
        let dim = coefficients
            .first()
            .map(|c| c.dim())
            .ok_or_else(|| Error::InvalidMatrix("linear pencil needs a coefficient".into()))?;
        Self::new(SymMatrix::zeros(dim), coefficients)
    }

    /// Pencil that ignores its `nvars` arguments.
    pub fn constant_map(constant: SymMatrix, nvars: usize) -> Self {
        let dim = constant.dim();
        Self {
            constant,
            coefficients: vec![SymMatrix::zeros(dim); nvars],
            sparse: vec![Vec::new(); nvars],
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.dim()
    }

    pub fn nvars(&self) -> usize {
        self.coefficients.len()
    }

    pub fn constant(&self) -> &SymMatrix {
        &self.constant
    }

    pub fn coefficient(&self, j: usize) -> &SymMatrix {
        &self.coefficients[j]
    }

    pub fn coefficients(&self) -> &[SymMatrix] {
        &self.coefficients
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<SymMatrix> {
        self.check_len(x)?;
        let mut m = self.constant.as_matrix().clone();
        for (xj, entries) in x.iter().zip(&self.sparse) {
            if *xj == 0.0 {
                continue;
            }
            for &(i, k, a) in entries {
                m[(i, k)] += xj * a;
                if i != k {
                    m[(k, i)] += xj * a;
                }
            }
        }
        Ok(SymMatrix::from_symmetric_unchecked(m))
    }

    /// `v' A_j v` for every coefficient.
    pub fn quad_forms(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.nvars(),
            self.sparse.iter().map(|entries| {
                entries
                    .iter()
                    .map(|&(i, k, a)| {
                        if i == k {
                            a * v[i] * v[i]
                        } else {
                            2.0 * a * v[i] * v[k]
                        }
                    })
                    .sum()
            }),
        )
    }

    fn check_len(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.nvars() {
            return Err(Error::DimensionMismatch {
                expected: self.nvars(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

fn upper_triplets(m: &SymMatrix) -> Vec<(usize, usize, f64)> {
    let n = m.dim();
    let mut out = Vec::new();
    for i in 0..n {
        for k in i..n {
            let a = m.get(i, k);
            if a != 0.0 {
                out.push((i, k, a));
            }
        }
    }
    out
}

fn require_psd(x: &SymMatrix, tol: &TolerancePolicy) -> Result<crate::symmat::Spectrum> {
    let spec = eig_sym(x)?;
    if spec.min() < -tol.psd_threshold(x) {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: spec.min(),
        });
    }
    Ok(spec)
}

/// Exact extended maximum generalized eigenvalue.
pub fn lambda_max_ext(x: &SymMatrix, y: &SymMatrix, tol: &TolerancePolicy) -> Result<GenEigResult> {
    check_same_dim(x, y)?;
    let sx = require_psd(x, tol)?;
    let sy = require_psd(y, tol)?;
    let n = x.dim();

    let y_cut = tol.kernel_threshold(y);
    let kernel_dim = sy.eigenvalues.iter().take_while(|&&l| l <= y_cut).count();

    if kernel_dim == n {
        let x_zero = sx.max() <= tol.kernel_threshold(x);
        return Ok(if x_zero {
            GenEigResult {
                value: ExtReal::Finite(0.0),
                eigenvector: None,
                certificate: Certificate::ZeroZero,
            }
        } else {
            GenEigResult {
                value: ExtReal::Infinity,
                eigenvector: None,
                certificate: Certificate::InfiniteByKernelEscape,
            }
        });
    }

    let x_cut = tol.kernel_threshold(x);
    let xm = x.as_matrix();
    for c in 0..kernel_dim {
        let u = sy.eigenvectors.column(c);
        if (xm * u).norm() > x_cut {
            return Ok(GenEigResult {
                value: ExtReal::Infinity,
                eigenvector: None,
                certificate: Certificate::InfiniteByKernelEscape,
            });
        }
    }

    // Range of Y: V has orthonormal columns, V'YV = diag(mu) with mu > 0.
    let r = n - kernel_dim;
    let v = sy.eigenvectors.columns(kernel_dim, r).into_owned();
    let inv_sqrt = DVector::from_iterator(r, sy.eigenvalues.rows(kernel_dim, r).iter().map(|m| 1.0 / m.sqrt()));
    // W = V diag(mu^{-1/2}); reduced matrix W'XW
    let mut w = v;
    for (j, s) in inv_sqrt.iter().enumerate() {
        w.column_mut(j).scale_mut(*s);
    }
    let reduced = w.transpose() * xm * &w;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let spec = sorted_eigen(reduced);
    let top = spec.max().max(0.0);
    let eigvec = &w * spec.eigenvectors.column(r - 1);

    Ok(GenEigResult {
        value: ExtReal::Finite(top),
        eigenvector: Some(eigvec),
        certificate: Certificate::ReducedPencil,
    })
}

/// Largest `a` a bisection may report before the value is treated as unbounded.
pub const ALPHA_CAP: f64 = 1e12;

/// Exact extended minimum generalized eigenvalue,
/// `sup { a >= 0 : X - aY is PSD }` (and `+inf` when `Y = 0`).
pub fn lambda_min_ext(x: &SymMatrix, y: &SymMatrix, tol: &TolerancePolicy) -> Result<ExtReal> {
    check_same_dim(x, y)?;
    let sx = require_psd(x, tol)?;
    let sy = require_psd(y, tol)?;

    if sy.max() <= tol.kernel_threshold(y) {
        return Ok(ExtReal::Infinity);
    }

    // A kernel direction of X along which Y is nonzero pins the infimum at 0.
    let x_cut = tol.kernel_threshold(x);
    let y_cut = tol.kernel_threshold(y);
    let ym = y.as_matrix();
    for c in 0..sx.eigenvalues.iter().take_while(|&&l| l <= x_cut).count() {
        if (ym * sx.eigenvectors.column(c)).norm() > y_cut {
            return Ok(ExtReal::Finite(0.0));
        }
    }

    let feasible = |alpha: f64| -> Result<bool> { is_psd(&x.add_scaled(y, -alpha)?, tol) };

    let mut lo = 0.0;
    let mut hi = 1.0;
    while feasible(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > ALPHA_CAP {
            return Ok(ExtReal::Finite(lo));
        }
    }
    while hi - lo > 1e-10 * (1.0 + hi) {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ExtReal::Finite(lo))
}

/// Eigenvalues (ascending) and `B`-orthonormal eigenvectors of a definite pencil.
pub(crate) struct PencilEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Solves `A v = lambda B v` for symmetric `A` and positive definite `B`
/// through the Cholesky factor `B = L L'`.
pub(crate) fn definite_pencil(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<PencilEigen> {
    let chol = Cholesky::new(b.clone()).ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let z = l
        .solve_lower_triangular(a)
        .ok_or(Error::NotPositiveDefinite)?;
    let c = l
        .solve_lower_triangular(&z.transpose())
        .ok_or(Error::NotPositiveDefinite)?;
    let c = (&c + c.transpose()) * 0.5;
    let spec = sorted_eigen(c);
    let vectors = l
        .tr_solve_lower_triangular(&spec.eigenvectors)
        .ok_or(Error::NotPositiveDefinite)?;
    Ok(PencilEigen {
        values: spec.eigenvalues,
        vectors,
    })
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidEpsilon(eps));
    }
    Ok(())
}

/// `lambda_max(X, Y + eps I)`: always finite, eigenvector normalized so that
/// `v'(Y + eps I)v = 1`.
pub fn lambda_max_eps(x: &SymMatrix, y: &SymMatrix, eps: f64) -> Result<GenEigResult> {
    check_eps(eps)?;
    check_same_dim(x, y)?;
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::InvalidMatrix("non-finite entry".into()));
    }
    let pe = match definite_pencil(x.as_matrix(), y.shifted(eps).as_matrix()) {
        Ok(pe) => pe,
        Err(Error::NotPositiveDefinite) => {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: eig_sym(y)?.min(),
            })
        }
        Err(e) => return Err(e),
    };
    let n = x.dim();
    Ok(GenEigResult {
        value: ExtReal::Finite(pe.values[n - 1].max(0.0)),
        eigenvector: Some(pe.vectors.column(n - 1).into_owned()),
        certificate: Certificate::Regularized,
    })
}

/// Sampled lower bound on `sup v'Xv / v'Yv`.
///
/// Half of the budget draws independent Gaussian directions; the other half
/// tries `+-` perturbations of the incumbent with a shrinking radius. Only
/// quotient evaluations are used, so the result is a certified lower bound
/// on the exact value and independent of any eigen-solver.
pub fn rayleigh_sup_oracle(
    x: &SymMatrix,
    y: &SymMatrix,
    samples: usize,
    seed: u64,
    tol: &TolerancePolicy,
) -> Result<f64> {
    check_same_dim(x, y)?;
    if samples == 0 {
        return Err(Error::InvalidConfig("samples must be positive".into()));
    }
    if y.max_abs() <= tol.kernel_tol {
        return Err(Error::DegeneratePair);
    }
    let n = x.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = |rng: &mut ChaCha8Rng| -> DVector<f64> {
        DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
    };
    let quotient = |v: &DVector<f64>| -> Option<f64> {
        let nv = v.norm();
        if nv == 0.0 {
            return None;
        }
        let u = v / nv;
        let den = y.quad_form(&u);
        if den <= tol.kernel_tol {
            return None;
        }
        Some(x.quad_form(&u) / den)
    };

    let global = samples.div_ceil(2);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for _ in 0..global {
        let v = gaussian(&mut rng);
        if let Some(q) = quotient(&v) {
            if best.as_ref().is_none_or(|(b, _)| q > *b) {
                best = Some((q, v));
            }
        }
    }
    let (mut best_q, mut best_v) = best.ok_or(Error::DegeneratePair)?;
    best_v /= best_v.norm();
    let mut radius = 0.5;
    let mut misses = 0usize;
    let patience = 2 * n + 4;
    let mut used = global;
    while used < samples {
        let step = gaussian(&mut rng) * (radius / (n as f64).sqrt());
        let mut improved = false;
        for trial in [&best_v + &step, &best_v - &step] {
            used += 1;
            if let Some(q) = quotient(&trial) {
                if q > best_q {
                    best_q = q;
                    best_v = &trial / trial.norm();
                    improved = true;
                    break;
                }
            }
        }
        if improved {
            misses = 0;
        } else {
            misses += 1;
            if misses >= patience {
                radius *= 0.5;
                misses = 0;
                if radius < 1e-12 {
                    radius = 0.5;
                }
            }
        }
    }
    Ok(best_q)
}

/// Value of `lambda_max(A(x), B(x) + eps I)` together with the gradient for
/// the returned eigenvector.
#[derive(Debug, Clone)]
pub struct CompositeEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub eigvec: DVector<f64>,
}

fn check_pencils(a: &AffinePencil, b: &AffinePencil, x: &DVector<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if a.nvars() != b.nvars() {
        return Err(Error::DimensionMismatch {
            expected: a.nvars(),
            got: b.nvars(),
        });
    }
    if x.len() != a.nvars() {
        return Err(Error::DimensionMismatch {
            expected: a.nvars(),
            got: x.len(),
        });
    }
    check_domain(x)
}

pub(crate) fn check_domain(x: &DVector<f64>) -> Result<()> {
    for (index, &value) in x.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::OutOfDomain { index, value });
        }
    }
    Ok(())
}

/// `grad_j = v'A_j v - lambda v'B_j v` with `v'(B(x) + eps I)v = 1`. At a
/// multiple top eigenvalue this is one element of the subdifferential.
pub fn composite_value_grad(
    a: &AffinePencil,
    b: &AffinePencil,
    x: &DVector<f64>,
    eps: f64,
) -> Result<CompositeEval> {
    check_eps(eps)?;
    check_pencils(a, b, x)?;
    composite_shifted(a, b, x, eps)
}

/// Same as [`composite_value_grad`] with an arbitrary shift, including 0
/// (then `B(x)` itself must be positive definite).
pub(crate) fn composite_shifted(
    a: &AffinePencil,
    b: &AffinePencil,
    x: &DVector<f64>,
    shift: f64,
) -> Result<CompositeEval> {
    let am = a.eval(x)?;
    let bm = b.eval(x)?.shifted(shift);
    let pe = definite_pencil(am.as_matrix(), bm.as_matrix())?;
    let n = a.dim();
    let value = pe.values[n - 1];
    let v = pe.vectors.column(n - 1).into_owned();
    let grad = a.quad_forms(&v) - b.quad_forms(&v) * value;
    Ok(CompositeEval {
        value,
        grad,
        eigvec: v,
    })
}

/// Log-sum-exp smoothing of the regularized maximum eigenvalue.
#[derive(Debug, Clone)]
pub struct SmoothedEval {
    pub value: f64,
    pub grad: DVector<f64>,
    /// Unsmoothed `lambda_max(A(x), B(x) + eps I)`.
    pub lambda_max: f64,
}

/// `f_mu(x) = mu log sum_i exp(lambda_i / mu)` over all generalized
/// eigenvalues of `(A(x), B(x) + eps I)`, with its gradient.
pub fn smoothed_value_grad(
    a: &AffinePencil,
    b: &AffinePencil,
    x: &DVector<f64>,
    eps: f64,
    mu: f64,
) -> Result<SmoothedEval> {
    check_eps(eps)?;
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidSmoothing(mu));
    }
    check_pencils(a, b, x)?;
    smoothed_shifted(a, b, x, eps, mu)
}

pub(crate) fn smoothed_shifted(
    a: &AffinePencil,
    b: &AffinePencil,
    x: &DVector<f64>,
    shift: f64,
    mu: f64,
) -> Result<SmoothedEval> {
    let am = a.eval(x)?;
    let bm = b.eval(x)?.shifted(shift);
    let pe = definite_pencil(am.as_matrix(), bm.as_matrix())?;
    let n = a.dim();
    let top = pe.values[n - 1];
    let expo: Vec<f64> = pe.values.iter().map(|l| ((l - top) / mu).exp()).collect();
    let total: f64 = expo.iter().sum();
    let value = top + mu * total.ln();
    let mut grad = DVector::zeros(a.nvars());
    for (i, e) in expo.iter().enumerate() {
        let w = e / total;
        if w < 1e-18 {
            continue;
        }
        let v = pe.vectors.column(i).into_owned();
        grad += (a.quad_forms(&v) - b.quad_forms(&v) * pe.values[i]) * w;
    }
    Ok(SmoothedEval {
        value,
        grad,
        lambda_max: top,
    })
}
