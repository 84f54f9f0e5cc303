//! Robust compliance and eigenfrequency objectives on a [`TrussModel`],
//! plus the feasible-set and problem descriptors the solvers consume.
//!
//! * robust compliance `psi(x) = lambda_max(QQ', K(x))`, approximated by
//!   `psi_eps(x) = lambda_max(QQ', K(x) + eps I)`;
//! * eigenfrequency `phi(x) = lambda_max(M(x), K(x))`, approximated by
//!   `phi_eps(x) = lambda_max(M(x), K(x) + eps I)`.

use std::sync::Arc;

use nalgebra::{Cholesky, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geneig::{
    check_domain, composite_shifted, lambda_max_eps, lambda_max_ext, smoothed_shifted, AffinePencil,
    CompositeEval, ExtReal, SmoothedEval,
};
use crate::symmat::{sorted_eigen, SymMatrix, TolerancePolicy};
use crate::truss::TrussModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    RobustCompliance,
    EigenFrequency,
}

impl ProblemKind {
    /// `l'x <= V0` for robust compliance, `l'x = V0` for eigenfrequency.
    pub fn default_constraint(self) -> ConstraintKind {
        match self {
            ProblemKind::RobustCompliance => ConstraintKind::VolumeLe,
            ProblemKind::EigenFrequency => ConstraintKind::VolumeEq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    VolumeLe,
    VolumeEq,
}

/// How the objective is regularized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// The extended objective itself (bisection only).
    Exact,
    /// `lambda_max(A(x), B(x) + eps I)` over `x >= 0`.
    PencilEps,
    /// The unregularized objective over `x >= eps`.
    LowerBoundEps,
}

/// `{ x >= lower_bound : l'x (<= | =) V0 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSet {
    pub lengths: DVector<f64>,
    pub volume: f64,
    pub kind: ConstraintKind,
    pub lower_bound: f64,
}

impl FeasibleSet {
    pub fn new(lengths: DVector<f64>, volume: f64, kind: ConstraintKind, lower_bound: f64) -> Result<Self> {
        let fs = Self {
            lengths,
            volume,
            kind,
            lower_bound,
        };
        fs.validate()?;
        Ok(fs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.volume > 0.0 && self.volume.is_finite()) {
            return Err(Error::EmptyFeasibleSet(format!("volume bound {} must be positive", self.volume)));
        }
        if self.lengths.is_empty() || self.lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::EmptyFeasibleSet("volume vector must be positive".into()));
        }
        if !(self.lower_bound >= 0.0) {
            return Err(Error::EmptyFeasibleSet("lower bound must be nonnegative".into()));
        }
        if self.lower_bound * self.lengths.sum() >= self.volume {
            return Err(Error::EmptyFeasibleSet(format!(
                "lower bound {} leaves no room under volume {}",
                self.lower_bound, self.volume
            )));
        }
        Ok(())
    }

    pub fn nvars(&self) -> usize {
        self.lengths.len()
    }

    /// Membership up to `rel_tol` relative slack on the volume and
    /// `rel_tol * V0 / sum l` on the bounds.
    pub fn contains(&self, x: &DVector<f64>, rel_tol: f64) -> bool {
        if x.len() != self.nvars() {
            return false;
        }
        let unit = self.volume / self.lengths.sum();
        if x.iter().any(|&v| !(v >= self.lower_bound - rel_tol * unit)) {
            return false;
        }
        let vol = self.lengths.dot(x);
        match self.kind {
            ConstraintKind::VolumeLe => vol <= self.volume * (1.0 + rel_tol),
            ConstraintKind::VolumeEq => (vol - self.volume).abs() <= rel_tol * self.volume,
        }
    }

    /// `x = V0 / sum l` componentwise.
    pub fn uniform(&self) -> DVector<f64> {
        DVector::from_element(self.nvars(), self.volume / self.lengths.sum())
    }

    /// Norm of the uniform design; the natural length unit for steps.
    pub fn scale(&self) -> f64 {
        self.uniform().norm()
    }
}

/// A fully specified optimization problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub model: Arc<TrussModel>,
    pub feasible: FeasibleSet,
    pub formulation: Formulation,
    /// 0 for [`Formulation::Exact`].
    pub eps: f64,
}

impl ProblemSpec {
    /// Builds a problem over `l'x (<=|=) V0`. For [`Formulation::LowerBoundEps`]
    /// the lower bound of the feasible set is set to `eps`.
    pub fn new(
        kind: ProblemKind,
        model: Arc<TrussModel>,
        volume: f64,
        constraint: ConstraintKind,
        formulation: Formulation,
        eps: f64,
    ) -> Result<Self> {
        match formulation {
            Formulation::Exact if eps != 0.0 => {
                return Err(Error::InvalidConfig("exact formulation takes eps = 0".into()))
            }
            Formulation::PencilEps | Formulation::LowerBoundEps if !(eps > 0.0 && eps.is_finite()) => {
                return Err(Error::InvalidEpsilon(eps))
            }
            _ => {}
        }
        let lower_bound = if formulation == Formulation::LowerBoundEps { eps } else { 0.0 };
        let feasible = FeasibleSet::new(model.lengths().clone(), volume, constraint, lower_bound)?;
        Ok(Self {
            kind,
            model,
            feasible,
            formulation,
            eps,
        })
    }

    /// Same problem with a different `eps` (and matching lower bound).
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        let formulation = if self.formulation == Formulation::Exact {
            Formulation::PencilEps
        } else {
            self.formulation
        };
        Self::new(
            self.kind,
            Arc::clone(&self.model),
            self.feasible.volume,
            self.feasible.kind,
            formulation,
            eps,
        )
    }

    /// Same problem with the exact objective.
    pub fn exact(&self) -> Result<Self> {
        Self::new(
            self.kind,
            Arc::clone(&self.model),
            self.feasible.volume,
            self.feasible.kind,
            Formulation::Exact,
            0.0,
        )
    }

    /// `(A, B)` with objective `lambda_max(A(x), B(x))`.
    pub fn objective_pencils(&self) -> (&AffinePencil, &AffinePencil) {
        match self.kind {
            ProblemKind::RobustCompliance => (self.model.load_pencil(), self.model.stiffness()),
            ProblemKind::EigenFrequency => (self.model.mass(), self.model.stiffness()),
        }
    }

    fn shift(&self) -> Result<f64> {
        match self.formulation {
            Formulation::PencilEps => Ok(self.eps),
            Formulation::LowerBoundEps => Ok(0.0),
            Formulation::Exact => Err(Error::InvalidConfig(
                "the exact objective is not differentiable; use bisection".into(),
            )),
        }
    }

    /// Objective value and (sub)gradient used by first-order methods.
    pub fn value_grad(&self, x: &DVector<f64>) -> Result<CompositeEval> {
        check_domain(x)?;
        let (a, b) = self.objective_pencils();
        composite_shifted(a, b, x, self.shift()?)
    }

    pub fn smoothed(&self, x: &DVector<f64>, mu: f64) -> Result<SmoothedEval> {
        if !(mu > 0.0) {
            return Err(Error::InvalidSmoothing(mu));
        }
        check_domain(x)?;
        let (a, b) = self.objective_pencils();
        smoothed_shifted(a, b, x, self.shift()?, mu)
    }

    /// The extended (unregularized) objective.
    pub fn exact_objective(&self, x: &DVector<f64>) -> Result<ExtReal> {
        match self.kind {
            ProblemKind::RobustCompliance => psi_exact(&self.model, x),
            ProblemKind::EigenFrequency => phi_exact(&self.model, x),
        }
    }
}

fn assembled(model: &TrussModel, x: &DVector<f64>) -> Result<SymMatrix> {
    check_domain(x)?;
    model.stiffness().eval(x)
}

/// `psi(x) = lambda_max(QQ', K(x))`; `+inf` exactly off `{x : Im Q in Im K(x)}`.
pub fn psi_exact(model: &TrussModel, x: &DVector<f64>) -> Result<ExtReal> {
    let k = assembled(model, x)?;
    Ok(lambda_max_ext(model.load_pencil().constant(), &k, &TolerancePolicy::default())?.value)
}

/// `lambda_max(QQ', K(x) + eps I)`.
pub fn psi_eps(model: &TrussModel, x: &DVector<f64>, eps: f64) -> Result<f64> {
    let k = assembled(model, x)?;
    let r = lambda_max_eps(model.load_pencil().constant(), &k, eps)?;
    Ok(r.value.to_f64())
}

/// `lambda_max(Q'(K(x) + eps I)^{-1} Q)`, the inverse form of [`psi_eps`].
pub fn psi_eps_inverse_form(model: &TrussModel, x: &DVector<f64>, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    let k = assembled(model, x)?.shifted(eps);
    let chol = Cholesky::new(k.into_matrix()).ok_or(Error::NotPositiveDefinite)?;
    let q = model.load();
    let u = chol.solve(q);
    let small = q.transpose() * u;
    let small = (&small + small.transpose()) * 0.5;
    Ok(sorted_eigen(small).max())
}

/// Whether `Im Q` is orthogonal to the numerical kernel of `K(x)`.
pub fn in_robust_domain(model: &TrussModel, x: &DVector<f64>) -> Result<bool> {
    Ok(psi_exact(model, x)?.is_finite())
}

/// `psi` through a least-squares solve `K(x) U = Q`: `+inf` when the
/// residual does not vanish, else `lambda_max(Q'U)`. Uses an SVD and no
/// eigen-decomposition of `K`.
pub fn psi_via_linear_solve(model: &TrussModel, x: &DVector<f64>) -> Result<ExtReal> {
    let k = assembled(model, x)?;
    let q = model.load();
    let cut = TolerancePolicy::default().kernel_threshold(&k);
    let svd = SVD::new(k.as_matrix().clone(), true, true);
    let u = svd
        .solve(q, cut)
        .map_err(|e| Error::InvalidMatrix(e.to_string()))?;
    let residual = (k.as_matrix() * &u - q).norm();
    if residual > 1e-6 * (1.0 + q.norm()) {
        return Ok(ExtReal::Infinity);
    }
    let small = q.transpose() * u;
    let small = (&small + small.transpose()) * 0.5;
    Ok(ExtReal::Finite(sorted_eigen(small).max().max(0.0)))
}

/// `phi(x) = lambda_max(M(x), K(x))`. At `x = 0` this is `+inf` with
/// non-structural mass and `0` without.
pub fn phi_exact(model: &TrussModel, x: &DVector<f64>) -> Result<ExtReal> {
    check_domain(x)?;
    if x.iter().all(|&v| v == 0.0) {
        let m0 = model.mass().constant();
        let tol = TolerancePolicy::default();
        return Ok(if m0.max_abs() > tol.kernel_tol {
            ExtReal::Infinity
        } else {
            ExtReal::Finite(0.0)
        });
    }
    let k = model.stiffness().eval(x)?;
    let m = model.mass().eval(x)?;
    Ok(lambda_max_ext(&m, &k, &TolerancePolicy::default())?.value)
}

/// `lambda_max(M(x), K(x) + eps I)`.
pub fn phi_eps(model: &TrussModel, x: &DVector<f64>, eps: f64) -> Result<f64> {
    let k = assembled(model, x)?;
    let m = model.mass().eval(x)?;
    Ok(lambda_max_eps(&m, &k, eps)?.value.to_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;
    use nalgebra::DMatrix;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    /// K = diag(x), Q = e1.
    fn diag_model() -> TrussModel {
        let k = AffinePencil::linear(vec![
            SymMatrix::from_diagonal(&[1.0, 0.0]),
            SymMatrix::from_diagonal(&[0.0, 1.0]),
        ])
        .unwrap();
        let m = AffinePencil::constant_map(SymMatrix::zeros(2), 2);
        TrussModel::from_pencils(k, m, DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), dv(&[1.0, 1.0])).unwrap()
    }

    #[test]
    fn psi_examples() {
        let model = diag_model();
        assert!((psi_exact(&model, &dv(&[2.0, 1.0])).unwrap().to_f64() - 0.5).abs() < 1e-14);
        assert_eq!(psi_exact(&model, &dv(&[0.0, 1.0])).unwrap(), ExtReal::Infinity);
        // linear-solve form: K U = Q with U = (0.5, 0)
        let ls = psi_via_linear_solve(&model, &dv(&[2.0, 1.0])).unwrap();
        assert!((ls.to_f64() - 0.5).abs() < 1e-14);
        assert_eq!(psi_via_linear_solve(&model, &dv(&[0.0, 1.0])).unwrap(), ExtReal::Infinity);
        assert!(!in_robust_domain(&model, &dv(&[0.0, 3.0])).unwrap());
    }

    #[test]
    fn psi_eps_examples() {
        let model = diag_model();
        assert!((psi_eps(&model, &dv(&[0.0, 0.0]), 0.1).unwrap() - 10.0).abs() < 1e-12);
        let v = psi_eps(&model, &dv(&[2.0, 1.0]), 1e-6).unwrap();
        assert!((v - 1.0 / (2.0 + 1e-6)).abs() < 1e-14);
        assert!((v - 0.5).abs() < 1e-6);
        let inv = psi_eps_inverse_form(&model, &dv(&[2.0, 1.0]), 1e-6).unwrap();
        assert!((inv - v).abs() <= 1e-8 * v);
        assert!(matches!(psi_eps(&model, &dv(&[1.0, 1.0]), 0.0), Err(Error::InvalidEpsilon(_))));
    }

    #[test]
    fn psi_eps_monotone_in_eps() {
        let model = diag_model();
        let x = dv(&[0.3, 0.0]);
        let mut prev = f64::INFINITY;
        for e in [1e-6, 1e-4, 1e-2, 1.0] {
            let v = psi_eps(&model, &x, e).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn phi_on_two_bar_instances() {
        let m1 = examples::two_bar_frequency();
        assert!((phi_exact(&m1, &dv(&[1.0, 1.0])).unwrap().to_f64() - 2.0).abs() < 1e-12);
        assert!((phi_exact(&m1, &dv(&[2.0, 0.0])).unwrap().to_f64() - 1.0).abs() < 1e-12);
        assert_eq!(phi_exact(&m1, &dv(&[0.0, 0.0])).unwrap(), ExtReal::Finite(0.0));
        assert!((phi_eps(&m1, &dv(&[2.0, 0.0]), 0.2).unwrap() - 10.0 / 11.0).abs() < 1e-12);

        let m2 = examples::two_bar_frequency_nonstructural();
        assert!((phi_exact(&m2, &dv(&[0.5, 1.5])).unwrap().to_f64() - 3.0).abs() < 1e-12);
        assert_eq!(phi_exact(&m2, &dv(&[0.0, 2.0])).unwrap(), ExtReal::Infinity);
        assert_eq!(phi_exact(&m2, &dv(&[0.0, 0.0])).unwrap(), ExtReal::Infinity);
        assert!((phi_eps(&m2, &dv(&[2.0, 0.0]), 0.2).unwrap() - 3.0 / 2.2).abs() < 1e-12);
    }

    #[test]
    fn mass_kernel_directions_do_not_count() {
        // zeroing x2 removes the second bar's mass; phi_eps reduces to the first term
        let m1 = examples::two_bar_frequency();
        for x1 in [0.1, 0.7, 1.9] {
            let v = phi_eps(&m1, &dv(&[x1, 0.0]), 0.05).unwrap();
            assert!((v - x1 / (x1 + 0.05)).abs() < 1e-12);
        }
    }

    #[test]
    fn feasible_set_validation() {
        assert!(FeasibleSet::new(dv(&[1.0, 1.0]), 0.0, ConstraintKind::VolumeLe, 0.0).is_err());
        assert!(FeasibleSet::new(dv(&[1.0, 0.0]), 1.0, ConstraintKind::VolumeLe, 0.0).is_err());
        assert!(FeasibleSet::new(dv(&[1.0, 1.0]), 1.0, ConstraintKind::VolumeEq, 0.5).is_err());
        let fs = FeasibleSet::new(dv(&[1.0, 1.0]), 2.0, ConstraintKind::VolumeEq, 0.1).unwrap();
        assert!(fs.contains(&dv(&[1.5, 0.5]), 1e-12));
        assert!(!fs.contains(&dv(&[2.0, 0.0]), 1e-12));
    }

    #[test]
    fn spec_formulation_checks() {
        let model = Arc::new(diag_model());
        let k = ProblemKind::RobustCompliance;
        assert!(ProblemSpec::new(k, model.clone(), 2.0, ConstraintKind::VolumeLe, Formulation::PencilEps, 0.0).is_err());
        assert!(ProblemSpec::new(k, model.clone(), 2.0, ConstraintKind::VolumeLe, Formulation::Exact, 0.1).is_err());
        let s = ProblemSpec::new(k, model.clone(), 2.0, ConstraintKind::VolumeLe, Formulation::LowerBoundEps, 0.01).unwrap();
        assert_eq!(s.feasible.lower_bound, 0.01);
        let exact = s.exact().unwrap();
        assert!(exact.value_grad(&dv(&[1.0, 1.0])).is_err());
    }
}
