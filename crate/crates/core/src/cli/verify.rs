//! Property and closed-form suites behind `epitruss verify`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::examples;
use crate::geneig::{lambda_max_eps, lambda_max_ext, lambda_min_ext, rayleigh_sup_oracle, ExtReal};
use crate::problems::{phi_eps, phi_exact, ConstraintKind, FeasibleSet, Formulation, ProblemKind, ProblemSpec};
use crate::solvers::{self, SolverKind, SolverOptions, StepRule};
use crate::symmat::{eig_sym, kernel_basis, random_orthogonal, random_psd, SymMatrix, TolerancePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Geneig,
    Examples,
    Solvers,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Reference closed form that disagrees with the exact definition; reported,
    /// not counted as a failure.
    KnownDiscrepancy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub status: Status,
    pub detail: String,
    /// Seed reproducing the first failing instance, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failing_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn check(suite: Suite, name: &str, ok: bool, detail: String, failing_seed: Option<u64>) -> Check {
    Check {
        suite,
        name: name.to_string(),
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
        failing_seed: if ok { None } else { failing_seed },
    }
}

pub fn run(suite: Suite, seed: u64) -> VerifyReport {
    let checks = match suite {
        Suite::Geneig => geneig_suite(seed),
        Suite::Examples => examples_suite(),
        Suite::Solvers => solvers_suite(seed),
        Suite::All => std::thread::scope(|s| {
            let g = s.spawn(|| geneig_suite(seed));
            let e = s.spawn(examples_suite);
            let v = s.spawn(|| solvers_suite(seed));
            [g, e, v].into_iter().flat_map(|h| h.join().expect("suite panicked")).collect()
        }),
    };
    let passed = checks.iter().all(|c| c.status != Status::Fail);
    VerifyReport { seed, passed, checks }
}

/// Kinds of random pairs `(X, Y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    /// `Y` positive definite.
    DefiniteY,
    /// `Y` singular with `ker Y` inside `ker X`: finite value.
    NestedKernel,
    /// `Y` singular and `X` nonzero on `ker Y`: infinite value.
    KernelEscape,
}

/// Random PSD pair of dimension `n` with the requested kernel structure.
/// Nonzero eigenvalues lie in `[0.1, 10]`.
pub fn random_pair<R: Rng + ?Sized>(rng: &mut R, n: usize, kind: PairKind) -> (SymMatrix, SymMatrix) {
    match kind {
        PairKind::DefiniteY => {
            let rank = rng.random_range(1..=n);
            (random_psd(rng, n, rank, 0.1, 10.0), random_psd(rng, n, n, 0.1, 10.0))
        }
        PairKind::NestedKernel | PairKind::KernelEscape => {
            let r = rng.random_range(1..n);
            let u = random_orthogonal(rng, n);
            let mut mu = DVector::zeros(n);
            for i in 0..r {
                mu[i] = 10f64.powf(rng.random_range(-1.0..1.0));
            }
            let y = &u * DMatrix::from_diagonal(&mu) * u.transpose();
            let range = u.columns(0, r).into_owned();
            let rank = rng.random_range(1..=r);
            let inner = random_psd(rng, r, rank, 0.1, 10.0);
            let mut x = &range * inner.as_matrix() * range.transpose();
            if kind == PairKind::KernelEscape {
                let k = u.column(rng.random_range(r..n)).into_owned();
                x += &k * k.transpose() * 10f64.powf(rng.random_range(-1.0..1.0));
            }
            let sym = |m: DMatrix<f64>| SymMatrix::from_dmatrix((&m + m.transpose()) * 0.5).expect("square");
            (sym(x), sym(y))
        }
    }
}

fn instance_rng(seed: u64, i: u64) -> (u64, ChaCha8Rng) {
    let s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i);
    (s, ChaCha8Rng::seed_from_u64(s))
}

fn pair_for(seed: u64, i: u64) -> (u64, PairKind, SymMatrix, SymMatrix) {
    let (s, mut rng) = instance_rng(seed, i);
    let n = rng.random_range(2..=10);
    let kind = match rng.random_range(0..3) {
        0 => PairKind::DefiniteY,
        1 => PairKind::NestedKernel,
        _ => PairKind::KernelEscape,
    };
    let (x, y) = random_pair(&mut rng, n, kind);
    (s, kind, x, y)
}

const EPS_GRID: [f64; 10] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9];

fn geneig_suite(seed: u64) -> Vec<Check> {
    let tol = TolerancePolicy::default();
    let s = Suite::Geneig;
    let mut out = Vec::new();
    let count = 300u64;

    let mut bad = None;
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let (is, _, x, y) = pair_for(seed, i);
        let ok = (|| -> Result<bool> {
            let a = lambda_max_ext(&x, &y, &tol)?.value;
            let b = lambda_min_ext(&y, &x, &tol)?;
            Ok(match (a, b) {
                (ExtReal::Infinity, ExtReal::Finite(v)) => v == 0.0,
                (ExtReal::Finite(v), ExtReal::Infinity) => v == 0.0,
                (ExtReal::Finite(p), ExtReal::Finite(q)) => {
                    let e = (p * q - 1.0).abs();
                    worst = worst.max(e);
                    e <= 1e-7
                }
                _ => false,
            })
        })()
        .unwrap_or(false);
        if !ok && bad.is_none() {
            bad = Some(is);
        }
    }
    out.push(check(s, "reciprocal_identity", bad.is_none(), format!("{count} pairs, worst |ab-1| = {worst:.2e}"), bad));

    let mut bad = None;
    for i in 0..count {
        let (is, _, x, y) = pair_for(seed, i);
        let vals: Vec<f64> = EPS_GRID
            .iter()
            .map(|&e| lambda_max_eps(&x, &y, e).map(|r| r.value.to_f64()).unwrap_or(f64::NAN))
            .collect();
        // eps decreasing along the grid, so values must not decrease
        let ok = vals.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs());
        if !ok && bad.is_none() {
            bad = Some(is);
        }
    }
    out.push(check(s, "monotone_in_eps", bad.is_none(), format!("{count} pairs, eps in 1..1e-9"), bad));

    let mut bad = None;
    let mut worst: f64 = 0.0;
    let mut blow_bad = None;
    let mut inf_cases = 0;
    for i in 0..count {
        let (is, kind, x, y) = pair_for(seed, i);
        let exact = lambda_max_ext(&x, &y, &tol).map(|r| r.value);
        match (kind, exact) {
            (PairKind::KernelEscape, Ok(ExtReal::Infinity)) => {
                inf_cases += 1;
                let k = kernel_basis(&y, &tol).unwrap_or_else(|_| DMatrix::zeros(x.dim(), 0));
                let floor = eig_sym(&SymMatrix::from_dmatrix(k.transpose() * x.as_matrix() * &k).expect("square"))
                    .map(|sp| sp.max())
                    .unwrap_or(0.0);
                let ok = EPS_GRID[3..]
                    .iter()
                    .all(|&e| lambda_max_eps(&x, &y, e).map(|r| e * r.value.to_f64() >= 0.5 * floor).unwrap_or(false));
                if !(ok && floor > 0.0) && blow_bad.is_none() {
                    blow_bad = Some(is);
                }
            }
            (PairKind::KernelEscape, _) => {
                if blow_bad.is_none() {
                    blow_bad = Some(is);
                }
            }
            (_, Ok(ExtReal::Finite(v))) => {
                let approx = lambda_max_eps(&x, &y, 1e-9).map(|r| r.value.to_f64()).unwrap_or(f64::NAN);
                let e = (approx - v).abs() / v.abs().max(1e-300);
                worst = worst.max(e);
                if !(e <= 1e-6) && bad.is_none() {
                    bad = Some(is);
                }
            }
            _ => {
                if bad.is_none() {
                    bad = Some(is);
                }
            }
        }
    }
    out.push(check(s, "pointwise_convergence", bad.is_none(), format!("worst relative gap at eps=1e-9: {worst:.2e}"), bad));
    out.push(check(s, "blow_up_rate", blow_bad.is_none(), format!("{inf_cases} infinite cases, eps*lambda bounded below"), blow_bad));

    let mut bad = None;
    let mut worst: f64 = 0.0;
    for i in 0..60 {
        let (is, kind, x, y) = pair_for(seed, i);
        if kind == PairKind::KernelEscape {
            continue;
        }
        let exact = lambda_max_ext(&x, &y, &tol).map(|r| r.value.to_f64()).unwrap_or(f64::NAN);
        let sampled = rayleigh_sup_oracle(&x, &y, 4000, is, &tol).unwrap_or(f64::NAN);
        let gap = (exact - sampled) / exact.max(1e-300);
        worst = worst.max(gap);
        if !(sampled <= exact * (1.0 + 1e-7) + 1e-12 && gap <= 1e-2) && bad.is_none() {
            bad = Some(is);
        }
    }
    out.push(check(s, "rayleigh_oracle_agreement", bad.is_none(), format!("worst relative gap {worst:.2e}"), bad));
    out
}

fn grid50() -> impl Iterator<Item = [f64; 2]> {
    (0..50).flat_map(|i| (0..50).map(move |j| [2.0 * i as f64 / 49.0, 2.0 * j as f64 / 49.0]))
}

fn matches(got: ExtReal, want: f64) -> bool {
    match got {
        ExtReal::Infinity => want.is_infinite(),
        ExtReal::Finite(v) => (v - want).abs() <= 1e-10,
    }
}

fn examples_suite() -> Vec<Check> {
    let s = Suite::Examples;
    let mut out = Vec::new();
    let m1 = examples::two_bar_frequency();
    let m2 = examples::two_bar_frequency_nonstructural();

    let mut worst: f64 = 0.0;
    let mut ok = true;
    for x in grid50() {
        let v = DVector::from_column_slice(&x);
        ok &= phi_exact(&m1, &v).is_ok_and(|p| matches(p, examples::two_bar_frequency_phi(x)));
        ok &= phi_exact(&m2, &v).is_ok_and(|p| matches(p, examples::two_bar_nonstructural_phi(x)));
        for eps in [0.2, 0.01] {
            for (m, f) in [
                (&m1, examples::two_bar_frequency_phi_eps as fn([f64; 2], f64) -> f64),
                (&m2, examples::two_bar_nonstructural_phi_eps),
            ] {
                let got = phi_eps(m, &v, eps).unwrap_or(f64::NAN);
                let e = (got - f(x, eps)).abs();
                worst = worst.max(e);
                ok &= e <= 1e-10;
            }
        }
    }
    out.push(check(s, "two_bar_closed_forms", ok, format!("50x50 grid on [0,2]^2, worst eps-gap {worst:.2e}"), None));

    // reference piecewise form for the nonstructural instance says 2 on x1 >= 1
    let off: Vec<[f64; 2]> = grid50()
        .filter(|x| x[0] >= 1.0)
        .filter(|x| phi_exact(&m2, &DVector::from_column_slice(x)).is_ok_and(|p| !matches(p, 2.0)))
        .collect();
    out.push(Check {
        suite: s,
        name: "reference_nonstructural_phi".into(),
        status: if off.is_empty() { Status::Pass } else { Status::KnownDiscrepancy },
        detail: format!(
            "{} grid points with x1 >= 1 differ from 2, all on x2 = 0 where phi = 1 + 1/x1: {}",
            off.len(),
            off.iter().all(|x| x[1] == 0.0)
        ),
        failing_seed: None,
    });

    // reference minimizer of the eps problem without nonstructural mass
    let eps: f64 = 0.01;
    let root = (eps * eps - 6.0 * eps + 1.0).sqrt();
    let reference = [1.0 - eps + root, 1.0 + eps - root];
    let b = 2.0 + 3.0 * eps;
    let x2 = (b - (b * b - 8.0 * eps).sqrt()) / 2.0;
    let exact = [2.0 - x2, x2];
    let f = |x: [f64; 2]| examples::two_bar_frequency_phi_eps(x, eps);
    out.push(Check {
        suite: s,
        name: "reference_eps_minimizer".into(),
        status: if f(reference) <= f(exact) + 1e-12 { Status::Pass } else { Status::KnownDiscrepancy },
        detail: format!(
            "eps=0.01: reference ({:.5}, {:.5}) has phi_eps {:.6}; balanced point ({:.6}, {:.6}) has {:.6}",
            reference[0],
            reference[1],
            f(reference),
            exact[0],
            exact[1],
            f(exact)
        ),
        failing_seed: None,
    });
    out
}

fn two_bar_spec(kind: ProblemKind, model: crate::truss::TrussModel, formulation: Formulation, eps: f64) -> ProblemSpec {
    ProblemSpec::new(kind, Arc::new(model), 2.0, kind.default_constraint(), formulation, eps).expect("valid two-bar problem")
}

fn solvers_suite(seed: u64) -> Vec<Check> {
    let s = Suite::Solvers;
    let mut out = Vec::new();
    let opts = SolverOptions {
        max_iters: 5000,
        step_rule: StepRule::Backtracking,
        tol_obj: 1e-10,
        seed,
        ..Default::default()
    };
    let bis_opts = SolverOptions { tol_obj: 1e-9, ..opts.clone() };
    let schedule: Vec<f64> = (1..=6).map(|k| 10f64.powi(-k)).collect();

    // robust two-bar: psi_eps = 1/(x1 + eps)
    let rc = two_bar_spec(ProblemKind::RobustCompliance, examples::two_bar_robust(), Formulation::PencilEps, 1e-6);
    let r = solvers::projected_subgradient(&rc, &rc.feasible.uniform(), &opts);
    let ok = r.as_ref().is_ok_and(|r| (r.obj_final - 1.0 / (2.0 + 1e-6)).abs() < 1e-8 && (r.x_final[0] - 2.0).abs() < 1e-6);
    out.push(check(s, "robust_two_bar_subgradient", ok, format!("{:?}", r.map(|r| r.obj_final)), None));
    let r = solvers::bisection_global(&rc.exact().expect("exact"), 0.0, 10.0, &bis_opts);
    let ok = r.as_ref().is_ok_and(|r| (r.obj_final - 0.5).abs() < 1e-6);
    out.push(check(s, "robust_two_bar_bisection", ok, format!("{:?}", r.map(|r| r.obj_final)), None));

    // frequency without nonstructural mass: pencil eps values rise to 1, lower bound stays at 2
    let f1 = two_bar_spec(ProblemKind::EigenFrequency, examples::two_bar_frequency(), Formulation::PencilEps, 0.1);
    let steps = solvers::eps_continuation(&f1, &schedule, SolverKind::Subgradient, &opts);
    let ok = steps.as_ref().is_ok_and(|st| {
        st.windows(2).all(|w| w[1].report.obj_final >= w[0].report.obj_final - 1e-12)
            && (st.last().expect("nonempty").report.obj_final - 1.0).abs() < 1e-3
    });
    out.push(check(
        s,
        "frequency_pencil_continuation",
        ok,
        format!("{:?}", steps.map(|st| st.iter().map(|x| x.report.obj_final).collect::<Vec<_>>())),
        None,
    ));
    let lb = two_bar_spec(ProblemKind::EigenFrequency, examples::two_bar_frequency(), Formulation::LowerBoundEps, 0.1);
    let steps = solvers::eps_continuation(&lb, &[1e-2, 1e-4, 1e-6], SolverKind::Subgradient, &opts);
    let ok = steps
        .as_ref()
        .is_ok_and(|st| st.iter().all(|x| (x.report.obj_final - 2.0).abs() < 1e-9));
    out.push(check(
        s,
        "frequency_lower_bound_gap",
        ok,
        format!("{:?}", steps.map(|st| st.iter().map(|x| x.report.obj_final).collect::<Vec<_>>())),
        None,
    ));
    let r = solvers::bisection_global(&f1.exact().expect("exact"), 0.0, 3.0, &bis_opts);
    let ok = r
        .as_ref()
        .is_ok_and(|r| (r.obj_final - 1.0).abs() < 1e-6 && (r.x_final[0] - 2.0).abs() < 1e-6);
    out.push(check(s, "frequency_bisection", ok, format!("{:?}", r.map(|r| r.obj_final)), None));

    // with nonstructural mass: eps minimizer (2, 0), exact optimum 3/2 there
    let f2 = two_bar_spec(
        ProblemKind::EigenFrequency,
        examples::two_bar_frequency_nonstructural(),
        Formulation::PencilEps,
        0.01,
    );
    let r = solvers::projected_subgradient(&f2, &f2.feasible.uniform(), &opts);
    let ok = r.as_ref().is_ok_and(|r| (r.x_final[0] - 2.0).abs() < 1e-3);
    out.push(check(s, "nonstructural_eps_minimizer", ok, format!("{:?}", r.map(|r| r.x_final.as_slice().to_vec())), None));
    let r = solvers::bisection_global(&f2.exact().expect("exact"), 0.0, 5.0, &bis_opts);
    let ok = r.as_ref().is_ok_and(|r| (r.obj_final - 1.5).abs() < 1e-6 && r.x_final[0] >= 1.0 - 1e-6);
    out.push(check(s, "nonstructural_bisection", ok, format!("{:?}", r.map(|r| r.obj_final)), None));

    // projection: nearest point among random feasible points
    let (is, mut rng) = instance_rng(seed, 7);
    let mut ok = true;
    for _ in 0..50 {
        let n = rng.random_range(1..8);
        let l = DVector::from_fn(n, |_, _| rng.random_range(0.2..2.0));
        let kind = if rng.random_bool(0.5) { ConstraintKind::VolumeEq } else { ConstraintKind::VolumeLe };
        let fs = FeasibleSet::new(l.clone(), 1.0, kind, 0.0).expect("valid set");
        let y = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let Ok(p) = solvers::project_feasible(&y, &fs) else {
            ok = false;
            break;
        };
        let d = (&p - &y).norm();
        for _ in 0..200 {
            let w = DVector::from_fn(n, |_, _| rng.random::<f64>());
            let scale = if kind == ConstraintKind::VolumeEq { 1.0 } else { rng.random::<f64>() };
            let x = &w * (scale / l.dot(&w));
            ok &= d <= (&x - &y).norm() + 1e-12;
        }
        ok &= fs.contains(&p, 1e-9);
    }
    out.push(check(s, "projection_nearest_point", ok, "50 sets x 200 feasible points".into(), Some(is)));
    out
}
