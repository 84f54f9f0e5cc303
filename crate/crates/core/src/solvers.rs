//! Projection onto the volume-constrained sets and the optimization
//! drivers: projected subgradient, smoothed accelerated projected gradient,
//! bisection for the exact objective, and eps-continuation.

use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geneig::{AffinePencil, ExtReal};
use crate::problems::{ConstraintKind, FeasibleSet, Formulation, ProblemSpec};

/// Bars with `x_j < DISPLAY_THRESHOLD * max x` count as removed.
pub const DISPLAY_THRESHOLD: f64 = 1e-6;

/// Iterations without improvement before the backtracking rule halves the step.
const STALL_PATIENCE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `t_k = initial_step / sqrt(k + 1)` along `g / |g|`.
    DiminishingOverSqrtK,
    /// `t_k = initial_step` along `g / |g|`.
    ConstantOverNorm,
    /// Constant step, halved after a run of non-improving iterations,
    /// restarting from the best iterate.
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuDecay {
    FixedMu,
    OneOverK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Subgradient,
    SmoothedApg,
    Bisection,
}

/// Step lengths are relative to the norm of the uniform design and the
/// smoothing parameter is relative to the objective at the starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub step_rule: StepRule,
    pub initial_step: f64,
    pub smoothing_mu0: f64,
    pub mu_decay: MuDecay,
    pub restart: bool,
    pub tol_obj: f64,
    /// Recorded in reports; the solvers draw no random numbers.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 3000,
            step_rule: StepRule::DiminishingOverSqrtK,
            initial_step: 0.1,
            smoothing_mu0: 0.05,
            mu_decay: MuDecay::OneOverK,
            restart: true,
            tol_obj: 1e-8,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        for (name, v) in [
            ("initial_step", self.initial_step),
            ("smoothing_mu0", self.smoothing_mu0),
            ("tol_obj", self.tol_obj),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIters,
    ObjTol,
    Bisected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iter: usize,
    pub objective: f64,
    pub step: f64,
    pub eps: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solver: SolverKind,
    pub x_final: DVector<f64>,
    pub obj_final: f64,
    pub obj_exact: ExtReal,
    pub history: Vec<HistoryEntry>,
    pub eps_used: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub active_bars: usize,
    /// `(infeasible, feasible)` levels after each bisection step.
    #[serde(default)]
    pub bracket_history: Vec<(f64, f64)>,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// Number of `x_j >= threshold * max x`.
pub fn count_active(x: &DVector<f64>, threshold: f64) -> usize {
    let top = x.max();
    if !(top > 0.0) {
        return 0;
    }
    x.iter().filter(|&&v| v >= threshold * top).count()
}

/// Euclidean projection onto `{x >= lb : l'x (<=|=) V0}`.
pub fn project_feasible(y: &DVector<f64>, fs: &FeasibleSet) -> Result<DVector<f64>> {
    fs.validate()?;
    let l = &fs.lengths;
    if y.len() != l.len() {
        return Err(Error::DimensionMismatch { expected: l.len(), got: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("cannot project a non-finite point".into()));
    }
    let lb = fs.lower_bound;
    let v0 = fs.volume;
    let at = |tau: f64| y.zip_map(l, |yj, lj| (yj - tau * lj).max(lb));
    let h = |tau: f64| l.dot(&at(tau));

    let h0 = h(0.0);
    if fs.kind == ConstraintKind::VolumeLe && h0 <= v0 {
        return Ok(at(0.0));
    }
    if h0 == v0 {
        return Ok(at(0.0));
    }
    // h is nonincreasing and piecewise linear in tau
    let (mut lo, mut hi) = if h0 > v0 {
        let mut hi = 1.0;
        while h(hi) > v0 {
            hi *= 2.0;
        }
        (0.0, hi)
    } else {
        let mut lo = -1.0;
        while h(lo) < v0 {
            lo *= 2.0;
        }
        (lo, 0.0)
    };
    while hi - lo > 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
        let mid = 0.5 * (lo + hi);
        if h(mid) > v0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    // exact tau on the active set
    let mut sum_ly = 0.0;
    let mut sum_ll = 0.0;
    let mut clamped = 0.0;
    for (yj, lj) in y.iter().zip(l.iter()) {
        if yj - tau * lj > lb {
            sum_ly += lj * yj;
            sum_ll += lj * lj;
        } else {
            clamped += lj * lb;
        }
    }
    if sum_ll > 0.0 {
        let exact = (sum_ly + clamped - v0) / sum_ll;
        let x = at(exact);
        if (l.dot(&x) - v0).abs() <= (l.dot(&at(tau)) - v0).abs() {
            return Ok(x);
        }
    }
    Ok(at(tau))
}

fn check_start(spec: &ProblemSpec, x0: &DVector<f64>, opts: &SolverOptions) -> Result<DVector<f64>> {
    opts.validate()?;
    if spec.formulation == Formulation::Exact {
        return Err(Error::InvalidConfig(
            "first-order solvers need an eps formulation; use bisection for the exact objective".into(),
        ));
    }
    project_feasible(x0, &spec.feasible)
}

fn finish(
    spec: &ProblemSpec,
    solver: SolverKind,
    x: DVector<f64>,
    obj: f64,
    history: Vec<HistoryEntry>,
    iterations: usize,
    termination: Termination,
) -> Result<SolveReport> {
    let obj_exact = spec.exact_objective(&x)?;
    Ok(SolveReport {
        solver,
        active_bars: count_active(&x, DISPLAY_THRESHOLD),
        x_final: x,
        obj_final: obj,
        obj_exact,
        history,
        eps_used: spec.eps,
        iterations,
        termination,
        bracket_history: Vec::new(),
        notes: Vec::new(),
    })
}

/// Projected subgradient method on the eps objective. Returns the best
/// iterate seen.
pub fn projected_subgradient(spec: &ProblemSpec, x0: &DVector<f64>, opts: &SolverOptions) -> Result<SolveReport> {
    let mut x = check_start(spec, x0, opts)?;
    let fs = &spec.feasible;
    let scale = fs.scale();
    let base = opts.initial_step * scale;
    let mut step = base;
    let mut best_x = x.clone();
    let mut best_f = f64::INFINITY;
    let mut stall = 0;
    let mut history = Vec::with_capacity(opts.max_iters);
    let mut termination = Termination::MaxIters;
    let mut iterations = 0;

    for k in 0..opts.max_iters {
        iterations = k + 1;
        let ev = spec.value_grad(&x)?;
        if ev.value < best_f {
            best_f = ev.value;
            best_x = x.clone();
            stall = 0;
        } else {
            stall += 1;
        }
        let mut restarted = false;
        let t = match opts.step_rule {
            StepRule::DiminishingOverSqrtK => base / ((k + 1) as f64).sqrt(),
            StepRule::ConstantOverNorm => base,
            StepRule::Backtracking => {
                if stall >= STALL_PATIENCE {
                    step *= 0.5;
                    stall = 0;
                    restarted = x != best_x;
                    x = best_x.clone();
                }
                step
            }
        };
        history.push(HistoryEntry {
            iter: k,
            objective: ev.value,
            step: t,
            eps: spec.eps,
            mu: 0.0,
        });
        if t < opts.tol_obj * scale {
            termination = Termination::ObjTol;
            break;
        }
        let ev = if restarted { spec.value_grad(&x)? } else { ev };
        let gnorm = ev.grad.norm();
        if gnorm == 0.0 {
            termination = Termination::ObjTol;
            break;
        }
        let next = project_feasible(&(&x - &ev.grad * (t / gnorm)), fs)?;
        if (&next - &x).norm() <= 1e-15 * scale {
            termination = Termination::ObjTol;
            break;
        }
        x = next;
    }
    finish(spec, SolverKind::Subgradient, best_x, best_f, history, iterations, termination)
}

/// Accelerated projected gradient on the log-sum-exp smoothing of the eps
/// objective, with backtracking on the step, decreasing smoothing and
/// function-value restart. Returns the best iterate by the unsmoothed
/// objective.
pub fn smoothed_apg(spec: &ProblemSpec, x0: &DVector<f64>, opts: &SolverOptions) -> Result<SolveReport> {
    let mut x = check_start(spec, x0, opts)?;
    let fs = &spec.feasible;
    let scale = fs.scale();
    let f0 = spec.value_grad(&x)?.value;
    let mu0 = opts.smoothing_mu0 * f0.abs().max(1e-12);
    let mut y = x.clone();
    let mut theta: f64 = 1.0;
    let mut best_x = x.clone();
    let mut best_f = f0;
    let mut prev_smoothed = f64::INFINITY;
    let mut s = {
        let g = spec.smoothed(&x, mu0)?.grad.norm();
        opts.initial_step * scale / g.max(1e-300)
    };
    let mut history = Vec::with_capacity(opts.max_iters);
    let mut termination = Termination::MaxIters;
    let mut iterations = 0;

    for k in 0..opts.max_iters {
        iterations = k + 1;
        let mu = match opts.mu_decay {
            MuDecay::FixedMu => mu0,
            MuDecay::OneOverK => mu0 / (k + 1) as f64,
        };
        let at_y = spec.smoothed(&y, mu)?;
        s *= 1.25;
        let (z, at_z) = loop {
            let z = project_feasible(&(&y - &at_y.grad * s), fs)?;
            let d = &z - &y;
            let at_z = spec.smoothed(&z, mu)?;
            let model = at_y.value + at_y.grad.dot(&d) + d.norm_squared() / (2.0 * s);
            if at_z.value <= model + 1e-12 * at_y.value.abs() || s < 1e-300 {
                break (z, at_z);
            }
            s *= 0.5;
        };
        if at_z.lambda_max < best_f {
            best_f = at_z.lambda_max;
            best_x = z.clone();
        }
        history.push(HistoryEntry {
            iter: k,
            objective: at_z.lambda_max,
            step: s,
            eps: spec.eps,
            mu,
        });
        let moved = (&z - &x).norm();
        if opts.restart && at_z.value > prev_smoothed {
            theta = 1.0;
            y = x.clone();
            prev_smoothed = f64::INFINITY;
            continue;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        y = project_feasible(&(&z + (&z - &x) * ((theta - 1.0) / theta_next)), fs)?;
        theta = theta_next;
        x = z;
        prev_smoothed = at_z.value;
        if moved <= opts.tol_obj * scale * 1e-3 {
            termination = Termination::ObjTol;
            break;
        }
    }
    finish(spec, SolverKind::SmoothedApg, best_x, best_f, history, iterations, termination)
}

struct Feasibility {
    feasible: bool,
    x: DVector<f64>,
    value: f64,
    widened: bool,
}

fn shifted_max_eig(a: &AffinePencil, b: &AffinePencil, x: &DVector<f64>, alpha: f64) -> Result<(f64, DVector<f64>, f64)> {
    let am = a.eval(x)?;
    let bm = b.eval(x)?;
    let slack = 1e-9 * (1.0 + am.max_abs() + alpha * bm.max_abs());
    let c = am.as_matrix() - bm.as_matrix() * alpha;
    let eig = SymmetricEigen::new(c);
    let top = eig.eigenvalues.imax();
    Ok((eig.eigenvalues[top], eig.eigenvectors.column(top).into_owned(), slack))
}

/// Decides whether some `x` in the feasible set has `alpha B(x) - A(x) PSD`
/// by minimizing `lambda_max(A(x) - alpha B(x))` with Polyak steps aimed
/// just below zero.
fn feasibility(
    a: &AffinePencil,
    b: &AffinePencil,
    alpha: f64,
    fs: &FeasibleSet,
    start: &DVector<f64>,
    budget: usize,
) -> Result<Feasibility> {
    let mut x = project_feasible(start, fs)?;
    let mut best = (f64::INFINITY, x.clone(), 0.0);
    for _ in 0..budget {
        let (h, v, slack) = shifted_max_eig(a, b, &x, alpha)?;
        if h < best.0 {
            best = (h, x.clone(), slack);
        }
        if h <= slack {
            return Ok(Feasibility { feasible: true, x, value: h, widened: false });
        }
        let g = a.quad_forms(&v) - b.quad_forms(&v) * alpha;
        let gg = g.norm_squared();
        if gg == 0.0 {
            break;
        }
        x = project_feasible(&(&x - &g * ((h + slack) / gg)), fs)?;
    }
    let (value, x, slack) = best;
    let widened = value <= 10.0 * slack;
    Ok(Feasibility { feasible: widened, x, value, widened })
}

/// Initial bracket: `0` and the eps objective at the uniform design with
/// `eps = 1e-6`, doubled until feasible.
pub fn default_bracket(spec: &ProblemSpec, opts: &SolverOptions) -> Result<(f64, f64)> {
    let (a, b) = spec.objective_pencils();
    let fs = &spec.feasible;
    let u = project_feasible(&fs.uniform(), fs)?;
    let mut hi = crate::geneig::composite_value_grad(a, b, &u, 1e-6)?.value.max(1e-12);
    for _ in 0..64 {
        if feasibility(a, b, hi, fs, &u, opts.max_iters)?.feasible {
            return Ok((0.0, hi));
        }
        hi *= 2.0;
    }
    Err(Error::BracketError(format!("no feasible level found up to {hi:e}")))
}

/// Bisection on the level `alpha` of the exact objective. Each level is
/// tested with [`feasibility`]; every witness found also tightens the
/// upper end to its exact objective value.
pub fn bisection_global(
    spec: &ProblemSpec,
    alpha_lo: f64,
    alpha_hi: f64,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    if !(alpha_lo >= 0.0 && alpha_hi > alpha_lo && alpha_hi.is_finite()) {
        return Err(Error::BracketError(format!("invalid window [{alpha_lo}, {alpha_hi}]")));
    }
    let exact = spec.exact()?;
    let (a, b) = exact.objective_pencils();
    let fs = &exact.feasible;
    let mut notes = Vec::new();

    let top = feasibility(a, b, alpha_hi, fs, &fs.uniform(), opts.max_iters)?;
    if !top.feasible {
        return Err(Error::BracketError(format!(
            "upper level {alpha_hi} is infeasible (min lambda_max {:e})",
            top.value
        )));
    }
    let mut best_x = top.x;
    let mut hi = alpha_hi;
    // reported design: lowest exact objective among all witnesses
    let mut witness = (exact.exact_objective(&best_x)?, best_x.clone());
    if let ExtReal::Finite(v) = witness.0 {
        hi = hi.min(v);
    }
    let mut lo = alpha_lo;
    if lo > 0.0 && feasibility(a, b, lo, fs, &best_x, opts.max_iters)?.feasible {
        return Err(Error::BracketError(format!("lower level {alpha_lo} is already feasible")));
    }

    let mut history = Vec::new();
    let mut brackets = vec![(lo, hi)];
    let mut iterations = 0;
    while hi - lo > opts.tol_obj * hi.max(1e-300) && iterations < 200 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let test = feasibility(a, b, mid, fs, &best_x, opts.max_iters)?;
        let value = exact.exact_objective(&test.x)?;
        if test.feasible {
            if test.widened {
                notes.push(format!("level {mid:e} accepted with widened slack ({:e})", test.value));
            }
            hi = mid;
            best_x = test.x.clone();
        } else {
            lo = mid;
        }
        if let ExtReal::Finite(v) = value {
            // any design bounds the optimum from above
            if v < hi && v >= lo {
                hi = v;
            }
            if witness.0.finite().is_none_or(|w| v < w) {
                witness = (value, test.x);
            }
        }
        history.push(HistoryEntry {
            iter: iterations,
            objective: hi,
            step: hi - lo,
            eps: 0.0,
            mu: 0.0,
        });
        brackets.push((lo, hi));
    }

    let (obj_exact, best_x) = witness;
    Ok(SolveReport {
        solver: SolverKind::Bisection,
        active_bars: count_active(&best_x, DISPLAY_THRESHOLD),
        x_final: best_x,
        obj_final: hi,
        obj_exact,
        history,
        eps_used: 0.0,
        iterations,
        termination: Termination::Bisected,
        bracket_history: brackets,
        notes,
    })
}

/// Runs the selected solver from `x0` (bisection ignores `x0` and uses
/// [`default_bracket`]).
pub fn solve(spec: &ProblemSpec, kind: SolverKind, x0: &DVector<f64>, opts: &SolverOptions) -> Result<SolveReport> {
    match kind {
        SolverKind::Subgradient => projected_subgradient(spec, x0, opts),
        SolverKind::SmoothedApg => smoothed_apg(spec, x0, opts),
        SolverKind::Bisection => {
            let exact = spec.exact()?;
            let (lo, hi) = default_bracket(&exact, opts)?;
            bisection_global(&exact, lo, hi, opts)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationStep {
    pub eps: f64,
    pub report: SolveReport,
    /// Distance from this step's design to the last step's design.
    pub distance_to_final: f64,
}

/// Solves the eps problem along a decreasing schedule, warm-starting each
/// solve from the projection of the previous design.
pub fn eps_continuation(
    spec: &ProblemSpec,
    schedule: &[f64],
    kind: SolverKind,
    opts: &SolverOptions,
) -> Result<Vec<ContinuationStep>> {
    if schedule.is_empty() {
        return Err(Error::InvalidConfig("empty eps schedule".into()));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidConfig("eps schedule must be strictly decreasing".into()));
    }
    if kind == SolverKind::Bisection {
        return Err(Error::InvalidConfig("continuation needs a first-order solver".into()));
    }
    let mut warm = spec.feasible.uniform();
    let mut steps = Vec::with_capacity(schedule.len());
    for &eps in schedule {
        let s = spec.with_eps(eps)?;
        let report = solve(&s, kind, &warm, opts)?;
        warm = report.x_final.clone();
        steps.push(ContinuationStep {
            eps,
            report,
            distance_to_final: 0.0,
        });
    }
    let last = steps.last().map(|s| s.report.x_final.clone()).unwrap_or_default();
    for s in &mut steps {
        s.distance_to_final = (&s.report.x_final - &last).norm();
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;
    use crate::problems::ProblemKind;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn fs2(kind: ConstraintKind) -> FeasibleSet {
        FeasibleSet::new(dv(&[1.0, 1.0]), 2.0, kind, 0.0).unwrap()
    }

    fn tight() -> SolverOptions {
        SolverOptions {
            max_iters: 5000,
            step_rule: StepRule::Backtracking,
            tol_obj: 1e-10,
            ..Default::default()
        }
    }

    #[test]
    fn projection_examples() {
        let eq = fs2(ConstraintKind::VolumeEq);
        assert!((project_feasible(&dv(&[2.0, 2.0]), &eq).unwrap() - dv(&[1.0, 1.0])).norm() < 1e-14);
        assert!((project_feasible(&dv(&[3.0, -1.0]), &eq).unwrap() - dv(&[2.0, 0.0])).norm() < 1e-14);
        let le = fs2(ConstraintKind::VolumeLe);
        assert_eq!(project_feasible(&dv(&[0.5, -1.0]), &le).unwrap(), dv(&[0.5, 0.0]));
        // below the volume under equality: raised uniformly
        assert!((project_feasible(&dv(&[0.0, 0.5]), &eq).unwrap() - dv(&[0.75, 1.25])).norm() < 1e-14);
    }

    #[test]
    fn projection_matches_grid_oracle() {
        // brute force over the segment x1 + x2 = 2, x >= 0
        let eq = fs2(ConstraintKind::VolumeEq);
        let y = dv(&[3.0, -1.0]);
        let p = project_feasible(&y, &eq).unwrap();
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=20000 {
            let t = 2.0 * i as f64 / 20000.0;
            let d = (dv(&[t, 2.0 - t]) - &y).norm();
            if d < best.0 {
                best = (d, t);
            }
        }
        assert!((p[0] - best.1).abs() <= 1e-4);
    }

    #[test]
    fn projection_rejects_bad_sets() {
        let fs = FeasibleSet {
            lengths: dv(&[1.0]),
            volume: -1.0,
            kind: ConstraintKind::VolumeLe,
            lower_bound: 0.0,
        };
        assert!(matches!(project_feasible(&dv(&[1.0]), &fs), Err(Error::EmptyFeasibleSet(_))));
    }

    fn kkt_residual(y: &DVector<f64>, x: &DVector<f64>, fs: &FeasibleSet) -> f64 {
        // x - y + tau l - nu = 0, nu >= 0, nu_j (x_j - lb) = 0
        let l = &fs.lengths;
        let free: Vec<usize> = (0..x.len()).filter(|&j| x[j] > fs.lower_bound + 1e-12).collect();
        let tau = if free.is_empty() {
            0.0
        } else {
            free.iter().map(|&j| (y[j] - x[j]) * l[j]).sum::<f64>() / free.iter().map(|&j| l[j] * l[j]).sum::<f64>()
        };
        let mut r: f64 = 0.0;
        for j in 0..x.len() {
            let nu = x[j] - y[j] + tau * l[j];
            if free.contains(&j) {
                r = r.max(nu.abs());
            } else {
                r = r.max((-nu).max(0.0));
            }
        }
        if fs.kind == ConstraintKind::VolumeLe {
            r = r.max((-tau).max(0.0));
        }
        r
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn projection_is_nearest_feasible_point(
            n in 1usize..8,
            seed in any::<u64>(),
            eq in any::<bool>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let l = DVector::from_fn(n, |_, _| rng.random_range(0.2..2.0));
            let lb = if rng.random_bool(0.3) { 0.01 } else { 0.0 };
            let kind = if eq { ConstraintKind::VolumeEq } else { ConstraintKind::VolumeLe };
            let fs = FeasibleSet::new(l.clone(), 1.0 + lb * l.sum(), kind, lb).unwrap();
            let y = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let p = project_feasible(&y, &fs).unwrap();
            prop_assert!(fs.contains(&p, 1e-9));
            prop_assert!(kkt_residual(&y, &p, &fs) <= 1e-8);
            let dp = (&p - &y).norm();
            for _ in 0..10_000 {
                // random feasible point: lb + scaled simplex direction
                let w = DVector::from_fn(n, |_, _| rng.random::<f64>());
                let room = fs.volume - lb * l.sum();
                let shrink = if eq { 1.0 } else { rng.random::<f64>() };
                let x = w.map(|v| v) * (shrink * room / l.dot(&w)) + DVector::from_element(n, lb);
                prop_assert!(dp <= (&x - &y).norm() + 1e-12);
            }
        }
    }

    fn robust_spec(eps: f64) -> ProblemSpec {
        ProblemSpec::new(
            ProblemKind::RobustCompliance,
            Arc::new(examples::two_bar_robust()),
            2.0,
            ConstraintKind::VolumeLe,
            Formulation::PencilEps,
            eps,
        )
        .unwrap()
    }

    fn frequency_spec(nonstructural: bool, eps: f64) -> ProblemSpec {
        let model = if nonstructural {
            examples::two_bar_frequency_nonstructural()
        } else {
            examples::two_bar_frequency()
        };
        ProblemSpec::new(
            ProblemKind::EigenFrequency,
            Arc::new(model),
            2.0,
            ConstraintKind::VolumeEq,
            Formulation::PencilEps,
            eps,
        )
        .unwrap()
    }

    /// Minimizer of max{x1/(x1+e), 2 x2/(x2+e)} on x1 + x2 = 2: the two
    /// terms cross at x2^2 - (2+3e) x2 + 2e = 0.
    fn crossing_minimizer(eps: f64) -> [f64; 2] {
        let b = 2.0 + 3.0 * eps;
        let x2 = (b - (b * b - 8.0 * eps).sqrt()) / 2.0;
        [2.0 - x2, x2]
    }

    #[test]
    fn crossing_oracle_balances_terms() {
        for eps in [0.2, 0.01, 1e-4] {
            let [x1, x2] = crossing_minimizer(eps);
            assert!((x1 / (x1 + eps) - 2.0 * x2 / (x2 + eps)).abs() < 1e-12);
        }
    }

    #[test]
    fn subgradient_on_robust_two_bar() {
        let spec = robust_spec(1e-6);
        let r = projected_subgradient(&spec, &dv(&[1.0, 1.0]), &tight()).unwrap();
        assert!((r.x_final[0] - 2.0).abs() < 1e-6, "{:?}", r.x_final);
        assert!((r.obj_final - 1.0 / (2.0 + 1e-6)).abs() < 1e-9);
        assert!(spec.feasible.contains(&r.x_final, 1e-9));
    }

    #[test]
    fn subgradient_on_frequency_two_bar() {
        let spec = frequency_spec(false, 0.01);
        let r = projected_subgradient(&spec, &dv(&[1.0, 1.0]), &tight()).unwrap();
        let want = crossing_minimizer(0.01);
        assert!((r.x_final[0] - want[0]).abs() < 1e-6, "{:?} vs {want:?}", r.x_final);

        let spec = frequency_spec(true, 0.01);
        let r = projected_subgradient(&spec, &dv(&[1.0, 1.0]), &tight()).unwrap();
        assert!((&r.x_final - dv(&[2.0, 0.0])).norm() < 1e-3, "{:?}", r.x_final);
    }

    #[test]
    fn best_so_far_is_monotone() {
        let spec = frequency_spec(false, 0.01);
        for rule in [StepRule::DiminishingOverSqrtK, StepRule::ConstantOverNorm, StepRule::Backtracking] {
            let opts = SolverOptions { step_rule: rule, max_iters: 300, ..Default::default() };
            let r = projected_subgradient(&spec, &dv(&[1.0, 1.0]), &opts).unwrap();
            let mut best = f64::INFINITY;
            for h in &r.history {
                assert!(h.objective.is_finite());
                best = best.min(h.objective);
            }
            assert_eq!(best, r.obj_final);
        }
    }

    #[test]
    fn apg_agrees_with_subgradient() {
        let spec = frequency_spec(false, 0.01);
        let sg = projected_subgradient(&spec, &dv(&[1.0, 1.0]), &tight()).unwrap();
        let apg = smoothed_apg(&spec, &dv(&[1.0, 1.0]), &SolverOptions { max_iters: 3000, ..Default::default() }).unwrap();
        assert!((apg.obj_final - sg.obj_final).abs() < 1e-4, "{} vs {}", apg.obj_final, sg.obj_final);
    }

    #[test]
    fn apg_single_bar_is_a_point() {
        let k = AffinePencil::linear(vec![crate::symmat::SymMatrix::from_diagonal(&[1.0])]).unwrap();
        let m = AffinePencil::constant_map(crate::symmat::SymMatrix::zeros(1), 1);
        let model = crate::truss::TrussModel::from_pencils(k, m, nalgebra::DMatrix::from_element(1, 1, 1.0), dv(&[2.0])).unwrap();
        let spec = ProblemSpec::new(
            ProblemKind::RobustCompliance,
            Arc::new(model),
            3.0,
            ConstraintKind::VolumeEq,
            Formulation::PencilEps,
            1e-6,
        )
        .unwrap();
        let r = smoothed_apg(&spec, &dv(&[7.0]), &SolverOptions::default()).unwrap();
        assert!((r.x_final[0] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn smoothing_sandwich() {
        let spec = frequency_spec(false, 0.01);
        let mu = 0.03;
        for x in [dv(&[1.0, 1.0]), dv(&[1.9, 0.1]), dv(&[2.0, 0.0])] {
            let s = spec.smoothed(&x, mu).unwrap();
            let f = spec.value_grad(&x).unwrap().value;
            assert!(s.value >= f - 1e-14);
            assert!(s.value <= f + mu * 2f64.ln() + 1e-14);
        }
    }

    #[test]
    fn bisection_examples() {
        let opts = SolverOptions { tol_obj: 1e-9, ..Default::default() };
        let spec = frequency_spec(false, 0.01).exact().unwrap();
        let r = bisection_global(&spec, 0.0, 3.0, &opts).unwrap();
        assert!((r.obj_final - 1.0).abs() < 1e-6, "{}", r.obj_final);
        assert!((&r.x_final - dv(&[2.0, 0.0])).norm() < 1e-6, "{:?}", r.x_final);

        // phi(2, 0) = 3/2: the second bar's mass vanishes with its stiffness
        let spec = frequency_spec(true, 0.01).exact().unwrap();
        let r = bisection_global(&spec, 0.0, 5.0, &opts).unwrap();
        assert!((r.obj_final - 1.5).abs() < 1e-6, "{}", r.obj_final);
        assert!((&r.x_final - dv(&[2.0, 0.0])).norm() < 1e-6);

        let spec = robust_spec(1e-6).exact().unwrap();
        let r = bisection_global(&spec, 0.0, 10.0, &opts).unwrap();
        assert!((r.obj_final - 0.5).abs() < 1e-6);
        assert!((&r.x_final - dv(&[2.0, 0.0])).norm() < 1e-6);
    }

    #[test]
    fn bisection_bracket_invariant() {
        let spec = frequency_spec(true, 0.01).exact().unwrap();
        let r = bisection_global(&spec, 0.0, 5.0, &SolverOptions::default()).unwrap();
        for w in r.bracket_history.windows(2) {
            let (lo0, hi0) = w[0];
            let (lo1, hi1) = w[1];
            assert!(lo1 <= hi1);
            assert!(lo1 >= lo0 && hi1 <= hi0);
            assert!(hi1 - lo1 <= 0.5 * (hi0 - lo0) + 1e-15);
        }
    }

    #[test]
    fn bisection_rejects_bad_windows() {
        let spec = robust_spec(1e-6).exact().unwrap();
        let opts = SolverOptions::default();
        assert!(matches!(bisection_global(&spec, 0.0, 0.1, &opts), Err(Error::BracketError(_))));
        assert!(matches!(bisection_global(&spec, 0.7, 2.0, &opts), Err(Error::BracketError(_))));
        assert!(matches!(bisection_global(&spec, 1.0, 1.0, &opts), Err(Error::BracketError(_))));
    }

    #[test]
    fn default_bracket_contains_optimum() {
        let spec = robust_spec(1e-6).exact().unwrap();
        let (lo, hi) = default_bracket(&spec, &SolverOptions::default()).unwrap();
        assert!(lo <= 0.5 && hi >= 0.5);
    }

    #[test]
    fn continuation_on_robust_two_bar_increases_to_half() {
        let spec = robust_spec(1e-1);
        let schedule: Vec<f64> = (1..=6).map(|k| 10f64.powi(-k)).collect();
        let steps = eps_continuation(&spec, &schedule, SolverKind::Subgradient, &tight()).unwrap();
        let mut prev = 0.0;
        for s in &steps {
            let want = 1.0 / (2.0 + s.eps);
            assert!((s.report.obj_final - want).abs() < 1e-8);
            assert!(s.report.obj_final >= prev);
            prev = s.report.obj_final;
        }
        assert!((prev - 0.5).abs() < 1e-6);
        assert_eq!(steps.last().unwrap().distance_to_final, 0.0);
    }

    #[test]
    fn continuation_validates_schedule() {
        let spec = robust_spec(1e-1);
        let o = SolverOptions::default();
        assert!(eps_continuation(&spec, &[], SolverKind::Subgradient, &o).is_err());
        assert!(eps_continuation(&spec, &[1e-2, 1e-2], SolverKind::Subgradient, &o).is_err());
        assert!(eps_continuation(&spec, &[1e-2], SolverKind::Bisection, &o).is_err());
    }

    #[test]
    fn options_validation_and_serde() {
        let o = SolverOptions { max_iters: 0, ..Default::default() };
        assert!(o.validate().is_err());
        let o = SolverOptions::default();
        let s = serde_json::to_string(&o).unwrap();
        assert_eq!(serde_json::from_str::<SolverOptions>(&s).unwrap(), o);
        assert!(serde_json::from_str::<SolverOptions>(r#"{"bogus": 1}"#).is_err());
    }
}
