//! One-, two- and three-stage waveform relaxation under implicit Euler.
//!
//! Every scheme shares the per-step fixed point
//!
//! ```text
//!     (A + h B) y_{n+1} = A y_n + h f_{n+1}
//! ```
//!
//! and differs only in which matrix is inverted per sweep:
//!
//! | depth | left-hand matrix | right-hand coupling                                        |
//! |-------|------------------|------------------------------------------------------------|
//! | One   | `M_A + h M_1`    | `(h N_1 + N_A) y^k`                                        |
//! | Two   | `M_A + h M_2`    | `h N_2 z^ν + (h N_1 + N_A) y^k`                            |
//! | Three | `M_A + h M_3`    | `h N_3 z̃^μ + h N_2 z^ν + (h N_1 + N_A) y^k`               |
//!
//! plus `M_A y_n − N_A y_n + h f_{n+1}` (stepwise) or
//! `M_A w_n^{new} − N_A y_n^{k} + h f_{n+1}` (windowed, `w` the waveform being updated).

use std::fmt;
use std::time::{Duration, Instant};

use crate::dae::LinearDAE;
use crate::error::{Error, Result};
use crate::linalg::vector::dist2;
use crate::linalg::{factorize, BandFactorization, SolvePath, StructuredMatrix};
use crate::splittings::StageSplittings;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingCriterion {
    /// Stop when ‖x^{k+1} − x^k‖₂ ≤ tol; fail after `max_iters` outer iterations.
    /// Inner loops use the same tolerance and cap but stop silently at the cap.
    ErrorBound { tol: f64, max_iters: usize },
    /// Exactly `outer` outer, `inner` (ν) and `innermost` (μ) iterations.
    FixedIters { outer: usize, inner: usize, innermost: usize },
}

impl StoppingCriterion {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StoppingCriterion::ErrorBound { tol, max_iters } => {
                if !(tol > 0.0) || max_iters < 1 {
                    return Err(Error::config(format!("error bound needs tol > 0 and cap >= 1 (tol {tol}, cap {max_iters})")));
                }
            }
            StoppingCriterion::FixedIters { outer, inner, innermost } => {
                if outer < 1 || inner < 1 || innermost < 1 {
                    return Err(Error::config("fixed iteration counts must all be >= 1"));
                }
            }
        }
        Ok(())
    }

    fn inner_done(&self, count: usize, update: f64, fixed: usize) -> bool {
        match *self {
            StoppingCriterion::ErrorBound { tol, max_iters } => update <= tol || count >= max_iters,
            StoppingCriterion::FixedIters { .. } => count >= fixed,
        }
    }

    fn inner_counts(&self) -> (usize, usize) {
        match *self {
            StoppingCriterion::ErrorBound { .. } => (0, 0),
            StoppingCriterion::FixedIters { inner, innermost, .. } => (inner, innermost),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StageDepth {
    One,
    Two,
    Three,
}

impl StageDepth {
    pub fn stage(&self) -> usize {
        match self {
            StageDepth::One => 1,
            StageDepth::Two => 2,
            StageDepth::Three => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeLoopMode {
    /// Converge each step before advancing.
    Stepwise,
    /// Sweep the whole window per iteration.
    Windowed,
}

impl std::str::FromStr for TimeLoopMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stepwise" => Ok(TimeLoopMode::Stepwise),
            "windowed" => Ok(TimeLoopMode::Windowed),
            other => Err(Error::config(format!("unknown time-loop mode '{other}'"))),
        }
    }
}

impl fmt::Display for TimeLoopMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimeLoopMode::Stepwise => "stepwise",
            TimeLoopMode::Windowed => "windowed",
        })
    }
}

/// Iteration counts for the step ending at grid index `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub outer: usize,
    /// Total ν iterations over all outer iterations of the step.
    pub inner: usize,
    /// Total μ iterations over all ν iterations of the step.
    pub innermost: usize,
    pub update_norm: f64,
}

/// Work and convergence record of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveTrace {
    pub steps: Vec<StepRecord>,
    pub factorizations: usize,
    pub diagonal_solves: usize,
    pub tridiagonal_solves: usize,
    pub banded_solves: usize,
    /// Solves per multisplitting subproblem (zero for stage runs).
    pub subproblem_solves: [usize; 2],
    /// Informational only.
    pub elapsed: Duration,
}

impl SolveTrace {
    pub fn record_solve(&mut self, path: SolvePath) {
        match path {
            SolvePath::Diagonal => self.diagonal_solves += 1,
            SolvePath::BlockTridiagonal => self.tridiagonal_solves += 1,
            SolvePath::Banded => self.banded_solves += 1,
        }
    }

    pub fn total_solves(&self) -> usize {
        self.diagonal_solves + self.tridiagonal_solves + self.banded_solves
    }

    pub fn total_outer(&self) -> usize {
        self.steps.iter().map(|s| s.outer).sum()
    }
}

/// States on the time grid; `states[0]` is the initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    /// Largest entrywise difference over all grid times.
    pub fn max_diff(&self, other: &Trajectory) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| crate::linalg::vector::max_abs_diff(a, b))
            .fold(0.0, f64::max)
    }
}

/// A factorization that tallies its solves into a trace.
pub(crate) struct CountedSolver {
    fact: BandFactorization,
}

impl CountedSolver {
    pub(crate) fn new(matrix: &StructuredMatrix, trace: &mut SolveTrace) -> Result<Self> {
        let fact = factorize(matrix)?;
        trace.factorizations += 1;
        Ok(CountedSolver { fact })
    }

    pub(crate) fn path(&self) -> SolvePath {
        self.fact.path()
    }

    pub(crate) fn solve(&self, mut rhs: Vec<f64>, trace: &mut SolveTrace) -> Vec<f64> {
        self.fact.solve_in_place(&mut rhs);
        trace.record_solve(self.fact.path());
        rhs
    }
}

fn grid_times(problem: &LinearDAE) -> Vec<f64> {
    problem.grid.times()
}

/// Implicit Euler with a direct solve of `(A + h B) y_{n+1} = A y_n + h f_{n+1}`.
pub fn direct_euler(problem: &LinearDAE) -> Result<Trajectory> {
    direct_euler_traced(problem).map(|(t, _)| t)
}

pub fn direct_euler_traced(problem: &LinearDAE) -> Result<(Trajectory, SolveTrace)> {
    let start = Instant::now();
    let h = problem.h();
    let mut trace = SolveTrace::default();
    let lhs = CountedSolver::new(&problem.a.combine(1.0, h, &problem.b)?, &mut trace)?;
    let times = grid_times(problem);
    let mut states = Vec::with_capacity(times.len());
    states.push(problem.y0.clone());
    for n in 0..problem.steps() {
        let mut rhs = problem.a.matvec(&states[n])?;
        let f = problem.forcing_at(times[n + 1]);
        crate::linalg::vector::axpy(h, &f, &mut rhs);
        let y = lhs.solve(rhs, &mut trace);
        trace.steps.push(StepRecord { step: n + 1, outer: 1, inner: 0, innermost: 0, update_norm: 0.0 });
        states.push(y);
    }
    trace.elapsed = start.elapsed();
    Ok((Trajectory { times, states }, trace))
}

/// Operators shared by all stage iterations at a fixed step size.
struct StageOps<'a> {
    s: &'a StageSplittings,
    depth: StageDepth,
    h: f64,
    coupling: StructuredMatrix,
    hn2: StructuredMatrix,
    hn3: StructuredMatrix,
    lhs: CountedSolver,
}

impl<'a> StageOps<'a> {
    fn new(s: &'a StageSplittings, depth: StageDepth, h: f64, trace: &mut SolveTrace) -> Result<Self> {
        let lhs = CountedSolver::new(&s.shifted(depth.stage(), h)?, trace)?;
        Ok(StageOps {
            s,
            depth,
            h,
            coupling: s.outer_coupling(h)?,
            hn2: s.n_2.scale(h),
            hn3: s.n_3.scale(h),
            lhs,
        })
    }

    /// `(h N_1 + N_A) y + extra`.
    fn outer_rhs(&self, y: &[f64], extra: &[f64]) -> Vec<f64> {
        let mut c = extra.to_vec();
        self.coupling.matvec_add(y, &mut c);
        c
    }

    /// One outer iteration at a single step: returns y^{k+1} given y^k and the fixed part
    /// `c = (h N_1 + N_A) y^k + M_A y_n − N_A y_n + h f_{n+1}`.
    fn outer_update(&self, y: &[f64], c: &[f64], stop: &StoppingCriterion, rec: &mut StepRecord, trace: &mut SolveTrace) -> Vec<f64> {
        let (nu_fixed, mu_fixed) = stop.inner_counts();
        match self.depth {
            StageDepth::One => self.lhs.solve(c.to_vec(), trace),
            StageDepth::Two => {
                let mut z = y.to_vec();
                let mut nu = 0;
                loop {
                    let mut rhs = c.to_vec();
                    self.hn2.matvec_add(&z, &mut rhs);
                    let z_new = self.lhs.solve(rhs, trace);
                    let upd = dist2(&z_new, &z);
                    z = z_new;
                    nu += 1;
                    if stop.inner_done(nu, upd, nu_fixed) {
                        break;
                    }
                }
                rec.inner += nu;
                z
            }
            StageDepth::Three => {
                let mut z = y.to_vec();
                let mut nu = 0;
                loop {
                    // h N_2 z^ν + c is fixed over the μ loop
                    let mut c2 = c.to_vec();
                    self.hn2.matvec_add(&z, &mut c2);
                    let mut zt = z.clone();
                    let mut mu = 0;
                    loop {
                        let mut rhs = c2.clone();
                        self.hn3.matvec_add(&zt, &mut rhs);
                        let zt_new = self.lhs.solve(rhs, trace);
                        let upd = dist2(&zt_new, &zt);
                        zt = zt_new;
                        mu += 1;
                        if stop.inner_done(mu, upd, mu_fixed) {
                            break;
                        }
                    }
                    rec.innermost += mu;
                    let upd = dist2(&zt, &z);
                    z = zt;
                    nu += 1;
                    if stop.inner_done(nu, upd, nu_fixed) {
                        break;
                    }
                }
                rec.inner += nu;
                z
            }
        }
    }
}

fn outer_done(stop: &StoppingCriterion, k: usize, update: f64) -> Option<bool> {
    // Some(true): converged, Some(false): keep going, None: failed
    match *stop {
        StoppingCriterion::ErrorBound { tol, max_iters } => {
            if update <= tol {
                Some(true)
            } else if k >= max_iters || !update.is_finite() {
                None
            } else {
                Some(false)
            }
        }
        StoppingCriterion::FixedIters { outer, .. } => Some(k >= outer),
    }
}

/// Run a stage scheme; the left-hand matrix is factorized once per run.
pub fn wr_run(
    problem: &LinearDAE,
    s: &StageSplittings,
    depth: StageDepth,
    stop: StoppingCriterion,
    mode: TimeLoopMode,
) -> Result<(Trajectory, SolveTrace)> {
    stop.validate()?;
    let start = Instant::now();
    let mut trace = SolveTrace::default();
    let ops = StageOps::new(s, depth, problem.h(), &mut trace)?;
    let result = match mode {
        TimeLoopMode::Stepwise => run_stepwise(problem, &ops, &stop, &mut trace),
        TimeLoopMode::Windowed => run_windowed(problem, &ops, &stop, &mut trace),
    };
    trace.elapsed = start.elapsed();
    match result {
        Ok(states) => Ok((Trajectory { times: grid_times(problem), states }, trace)),
        Err(Error::NotConverged { step, iterations, last_update, .. }) => Err(Error::NotConverged {
            step,
            iterations,
            last_update,
            trace: Box::new(trace),
        }),
        Err(e) => Err(e),
    }
}

/// `M_A y_n − N_A y_n + h f_{n+1}`.
fn step_base(s: &StageSplittings, y_n: &[f64], hf: &[f64]) -> Vec<f64> {
    let mut base = hf.to_vec();
    s.m_a.matvec_add(y_n, &mut base);
    let na = s.n_a.matvec(y_n).expect("state length matches");
    for (b, x) in base.iter_mut().zip(na) {
        *b -= x;
    }
    base
}

fn scaled_forcing(problem: &LinearDAE, n: usize) -> Vec<f64> {
    let h = problem.h();
    problem.forcing_at(problem.grid.t(n)).into_iter().map(|x| h * x).collect()
}

fn not_converged(step: usize, iterations: usize, last_update: f64) -> Error {
    Error::NotConverged { step, iterations, last_update, trace: Box::default() }
}

fn run_stepwise(problem: &LinearDAE, ops: &StageOps, stop: &StoppingCriterion, trace: &mut SolveTrace) -> Result<Vec<Vec<f64>>> {
    let mut states = vec![problem.y0.clone()];
    for n in 0..problem.steps() {
        let y_n = &states[n];
        let base = step_base(ops.s, y_n, &scaled_forcing(problem, n + 1));
        let mut y = y_n.clone();
        let mut rec = StepRecord { step: n + 1, outer: 0, inner: 0, innermost: 0, update_norm: f64::INFINITY };
        loop {
            let c = ops.outer_rhs(&y, &base);
            let y_new = ops.outer_update(&y, &c, stop, &mut rec, trace);
            rec.update_norm = dist2(&y_new, &y);
            rec.outer += 1;
            y = y_new;
            match outer_done(stop, rec.outer, rec.update_norm) {
                Some(true) => break,
                Some(false) => {}
                None => {
                    trace.steps.push(rec);
                    return Err(not_converged(n + 1, rec.outer, rec.update_norm));
                }
            }
        }
        trace.steps.push(rec);
        states.push(y);
    }
    Ok(states)
}

/// One sweep over the window of
/// `L w_{n+1} = K x_{n+1} + (fixed)_{n+1} + M_A w_n − N_A y_n`, `w_0 = y0`,
/// where `K x` is supplied per n by `coupled`.
fn sweep<F>(ops: &StageOps, y: &[Vec<f64>], hf: &[Vec<f64>], y0: &[f64], coupled: F, trace: &mut SolveTrace) -> Vec<Vec<f64>>
where
    F: Fn(usize, &mut Vec<f64>),
{
    let mut w = Vec::with_capacity(y.len());
    w.push(y0.to_vec());
    for n in 0..y.len() - 1 {
        let mut rhs = hf[n + 1].clone();
        ops.s.m_a.matvec_add(&w[n], &mut rhs);
        let na = ops.s.n_a.matvec(&y[n]).expect("state length matches");
        for (r, x) in rhs.iter_mut().zip(na) {
            *r -= x;
        }
        coupled(n + 1, &mut rhs);
        w.push(ops.lhs.solve(rhs, trace));
    }
    w
}

fn window_update(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| dist2(x, y)).collect()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

fn run_windowed(problem: &LinearDAE, ops: &StageOps, stop: &StoppingCriterion, trace: &mut SolveTrace) -> Result<Vec<Vec<f64>>> {
    let steps = problem.steps();
    let y0 = &problem.y0;
    let hf: Vec<Vec<f64>> = (0..=steps).map(|n| scaled_forcing(problem, n)).collect();
    let (nu_fixed, mu_fixed) = stop.inner_counts();
    let mut y: Vec<Vec<f64>> = vec![y0.clone(); steps + 1];
    let mut outer = 0;
    let mut inner_total = 0;
    let mut innermost_total = 0;
    let mut per_step;

    if steps == 0 {
        return Ok(y);
    }
    loop {
        let y_new = match ops.depth {
            StageDepth::One => sweep(ops, &y, &hf, y0, |n, rhs| ops.coupling.matvec_add(&y[n], rhs), trace),
            StageDepth::Two => {
                let mut z = y.clone();
                let mut nu = 0;
                loop {
                    let z_new = sweep(
                        ops,
                        &y,
                        &hf,
                        y0,
                        |n, rhs| {
                            ops.hn2.matvec_add(&z[n], rhs);
                            ops.coupling.matvec_add(&y[n], rhs);
                        },
                        trace,
                    );
                    let upd = max_of(&window_update(&z_new, &z));
                    z = z_new;
                    nu += 1;
                    if stop.inner_done(nu, upd, nu_fixed) {
                        break;
                    }
                }
                inner_total += nu;
                z
            }
            StageDepth::Three => {
                let mut z = y.clone();
                let mut nu = 0;
                loop {
                    let mut zt = z.clone();
                    let mut mu = 0;
                    loop {
                        let zt_new = sweep(
                            ops,
                            &y,
                            &hf,
                            y0,
                            |n, rhs| {
                                ops.hn3.matvec_add(&zt[n], rhs);
                                ops.hn2.matvec_add(&z[n], rhs);
                                ops.coupling.matvec_add(&y[n], rhs);
                            },
                            trace,
                        );
                        let upd = max_of(&window_update(&zt_new, &zt));
                        zt = zt_new;
                        mu += 1;
                        if stop.inner_done(mu, upd, mu_fixed) {
                            break;
                        }
                    }
                    innermost_total += mu;
                    let upd = max_of(&window_update(&zt, &z));
                    z = zt;
                    nu += 1;
                    if stop.inner_done(nu, upd, nu_fixed) {
                        break;
                    }
                }
                inner_total += nu;
                z
            }
        };
        per_step = window_update(&y_new, &y);
        y = y_new;
        outer += 1;
        let upd = max_of(&per_step);
        match outer_done(stop, outer, upd) {
            Some(true) => break,
            Some(false) => {}
            None => {
                let worst = per_step.iter().enumerate().fold((0, 0.0), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
                record_window(trace, &per_step, outer, inner_total, innermost_total);
                return Err(not_converged(worst.0, outer, upd));
            }
        }
    }
    record_window(trace, &per_step, outer, inner_total, innermost_total);
    Ok(y)
}

fn record_window(trace: &mut SolveTrace, per_step: &[f64], outer: usize, inner: usize, innermost: usize) {
    for (n, upd) in per_step.iter().enumerate().skip(1) {
        trace.steps.push(StepRecord { step: n, outer, inner, innermost, update_norm: *upd });
    }
}

/// The homogeneous per-outer-iteration map `y^k ↦ y^{k+1}` (forcing and history removed).
///
/// For depth One this is `(M_A + h M_1)^{-1} (h N_1 + N_A)`; deeper stages run
/// `inner` ν sweeps (each with `innermost` μ sweeps) per application.
pub struct IterationOperator<'a> {
    ops: StageOps<'a>,
    stop: StoppingCriterion,
}

impl<'a> IterationOperator<'a> {
    pub fn m(&self) -> usize {
        self.ops.s.m_a.m()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut scratch = SolveTrace::default();
        let mut rec = StepRecord { step: 0, outer: 0, inner: 0, innermost: 0, update_norm: 0.0 };
        let c = self.ops.outer_rhs(v, &vec![0.0; v.len()]);
        self.ops.outer_update(v, &c, &self.stop, &mut rec, &mut scratch)
    }

    pub fn path(&self) -> SolvePath {
        self.ops.lhs.path()
    }

    pub fn step_size(&self) -> f64 {
        self.ops.h
    }
}

pub fn iteration_operator(s: &StageSplittings, depth: StageDepth, h: f64, inner: usize, innermost: usize) -> Result<IterationOperator<'_>> {
    let mut scratch = SolveTrace::default();
    let ops = StageOps::new(s, depth, h, &mut scratch)?;
    let stop = StoppingCriterion::FixedIters { outer: 1, inner: inner.max(1), innermost: innermost.max(1) };
    Ok(IterationOperator { ops, stop })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dae::{build_transport_problem, LinearDAE, TimeGrid};
    use crate::linalg::spectral_radius_estimate;
    use crate::splittings::build_stage_splittings;
    use std::sync::Arc;

    /// Dense Gaussian elimination for the oracle solves below.
    fn dense_solve(m: usize, mut a: Vec<f64>, mut b: Vec<f64>) -> Vec<f64> {
        for k in 0..m {
            let piv = (k..m).max_by(|&i, &j| a[i * m + k].abs().total_cmp(&a[j * m + k].abs())).unwrap();
            for c in 0..m {
                a.swap(k * m + c, piv * m + c);
            }
            b.swap(k, piv);
            for i in k + 1..m {
                let l = a[i * m + k] / a[k * m + k];
                for c in k..m {
                    a[i * m + c] -= l * a[k * m + c];
                }
                b[i] -= l * b[k];
            }
        }
        let mut x = vec![0.0; m];
        for k in (0..m).rev() {
            let s: f64 = (k + 1..m).map(|c| a[k * m + c] * x[c]).sum();
            x[k] = (b[k] - s) / a[k * m + k];
        }
        x
    }

    #[test]
    fn direct_zero_dynamics() {
        let case = build_transport_problem(1, 3, 1.0).unwrap();
        let pr = &case.problem;
        let zero = LinearDAE::new(pr.a.clone(), pr.b.clone(), Arc::new(|_| vec![0.0; 3]), vec![0.0; 3], pr.grid).unwrap();
        let traj = direct_euler(&zero).unwrap();
        assert!(traj.states.iter().all(|s| s.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn direct_constant_for_identity_mass() {
        let a = StructuredMatrix::identity(1, 3);
        let b = StructuredMatrix::identity(1, 3);
        // B = 0 is singular and not allowed; use A = I, f = B y0 so y stays y0
        let y0 = vec![1.0, -2.0, 3.0];
        let f0 = y0.clone();
        let pr = LinearDAE::new(a, b, Arc::new(move |_| f0.clone()), y0.clone(), TimeGrid::default()).unwrap();
        let traj = direct_euler(&pr).unwrap();
        for s in &traj.states {
            assert!(crate::linalg::vector::max_abs_diff(s, &y0) < 1e-14);
        }
    }

    #[test]
    fn direct_first_step_matches_dense_oracle() {
        let case = build_transport_problem(1, 3, 1.0).unwrap();
        let pr = &case.problem;
        let h = 0.1;
        let a = pr.a.to_dense().unwrap();
        let b = pr.b.to_dense().unwrap();
        let lhs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + h * y).collect();
        let f = pr.forcing_at(0.1);
        let rhs: Vec<f64> = (0..3).map(|i| a[i * 3] * 1.0 + h * f[i]).collect();
        let want = dense_solve(3, lhs, rhs);
        let traj = direct_euler(pr).unwrap();
        assert!(crate::linalg::vector::max_abs_diff(&traj.states[1], &want) < 1e-14);
    }

    #[test]
    fn trivial_splitting_is_exact_in_one_iteration() {
        let case = build_transport_problem(2, 3, 1.0).unwrap();
        let pr = &case.problem;
        let s = StageSplittings::trivial(&pr.a, &pr.b).unwrap();
        let direct = direct_euler(pr).unwrap();
        let stop = StoppingCriterion::FixedIters { outer: 1, inner: 1, innermost: 1 };
        for depth in [StageDepth::One, StageDepth::Two, StageDepth::Three] {
            let (traj, _) = wr_run(pr, &s, depth, stop, TimeLoopMode::Stepwise).unwrap();
            assert!(traj.max_diff(&direct) < 1e-12, "{depth:?}");
        }
    }

    #[test]
    fn fixed_point_consistency_small() {
        for (p, q) in [(1, 3), (2, 3)] {
            let case = build_transport_problem(p, q, 1.0).unwrap();
            let pr = &case.problem;
            let s = build_stage_splittings(&case, 1.0).unwrap();
            let direct = direct_euler(pr).unwrap();
            let stop = StoppingCriterion::ErrorBound { tol: 1e-10, max_iters: 10_000 };
            for depth in [StageDepth::One, StageDepth::Two, StageDepth::Three] {
                for mode in [TimeLoopMode::Stepwise, TimeLoopMode::Windowed] {
                    let (traj, trace) = wr_run(pr, &s, depth, stop, mode).unwrap();
                    assert!(traj.max_diff(&direct) < 1e-8, "{p}x{q} {depth:?} {mode:?}: {}", traj.max_diff(&direct));
                    assert!(trace.steps.iter().all(|r| r.update_norm <= 1e-10));
                    assert_eq!(trace.factorizations, 1);
                }
            }
        }
    }

    #[test]
    fn fixed_counts_match_closed_form() {
        let case = build_transport_problem(2, 3, 1.0).unwrap();
        let pr = &case.problem;
        let s = build_stage_splittings(&case, 1.0).unwrap();
        let stop = StoppingCriterion::FixedIters { outer: 3, inner: 2, innermost: 4 };
        let (_, t1) = wr_run(pr, &s, StageDepth::One, stop, TimeLoopMode::Stepwise).unwrap();
        let (_, t2) = wr_run(pr, &s, StageDepth::Two, stop, TimeLoopMode::Stepwise).unwrap();
        let (_, t3) = wr_run(pr, &s, StageDepth::Three, stop, TimeLoopMode::Windowed).unwrap();
        assert_eq!(t1.total_solves(), 20 * 3);
        assert_eq!(t2.total_solves(), 20 * 3 * 2);
        assert_eq!(t3.total_solves(), 20 * 3 * 2 * 4);
        assert!(t2.steps.iter().all(|r| r.outer == 3 && r.inner == 6));
        assert!(t3.steps.iter().all(|r| r.innermost == 24));
    }

    #[test]
    fn divergence_is_an_error_with_trace() {
        let case = build_transport_problem(1, 3, 1.0).unwrap();
        let pr = &case.problem;
        let s = crate::splittings::standard_stage_splittings(&pr.a, &pr.b, 1.0, 10.0).unwrap();
        let stop = StoppingCriterion::ErrorBound { tol: 1e-10, max_iters: 50 };
        match wr_run(pr, &s, StageDepth::One, stop, TimeLoopMode::Stepwise) {
            Err(Error::NotConverged { step, iterations, trace, .. }) => {
                assert_eq!(step, 1);
                assert!(iterations <= 50);
                assert!(trace.total_solves() >= iterations);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_operator_for_trivial_splitting() {
        let case = build_transport_problem(1, 3, 1.0).unwrap();
        let pr = &case.problem;
        let s = StageSplittings::trivial(&pr.a, &pr.b).unwrap();
        let op = iteration_operator(&s, StageDepth::One, 0.1, 1, 1).unwrap();
        assert_eq!(spectral_radius_estimate(|v| op.apply(v), 3, 10, 7), 0.0);
    }

    #[test]
    fn one_stage_radius_matches_dense_oracle() {
        // p = 1, q = 3: M_A + h M_1 = diag(1.6, 0.61, 0.6), h N_1 + N_A = tridiag(0.1, (0.2, 0.21, 0.2), 0.1)
        let case = build_transport_problem(1, 3, 1.0).unwrap();
        let s = build_stage_splittings(&case, 1.0).unwrap();
        let op = iteration_operator(&s, StageDepth::One, 0.1, 1, 1).unwrap();
        let radius = spectral_radius_estimate(|v| op.apply(v), 3, 400, 11);
        // dense oracle: eigenvalues of T = D^{-1} G via the characteristic polynomial
        let d = [1.6, 0.61, 0.6];
        let g = [[0.2, 0.1, 0.0], [0.1, 0.21, 0.1], [0.0, 0.1, 0.2]];
        let t: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| g[i][j] / d[i]).collect()).collect();
        let char_poly = |x: f64| {
            let a = [[t[0][0] - x, t[0][1], t[0][2]], [t[1][0], t[1][1] - x, t[1][2]], [t[2][0], t[2][1], t[2][2] - x]];
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        };
        // T is similar to a symmetric matrix, so eigenvalues are real; find the largest root by scanning
        let mut largest: f64 = 0.0;
        let steps = 200_000;
        for k in 0..steps {
            let (x0, x1) = (-2.0 + 4.0 * k as f64 / steps as f64, -2.0 + 4.0 * (k + 1) as f64 / steps as f64);
            if char_poly(x0).signum() != char_poly(x1).signum() {
                let (mut lo, mut hi) = (x0, x1);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if char_poly(lo).signum() == char_poly(mid).signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                largest = largest.max(lo.abs());
            }
        }
        assert!(largest > 0.0 && largest < 1.0);
        assert!((radius - largest).abs() < 1e-6, "{radius} vs {largest}");
    }

    #[test]
    fn deep_inner_limit_recovers_one_stage_operator() {
        let case = build_transport_problem(1, 3, 1.0).unwrap();
        let s = build_stage_splittings(&case, 1.0).unwrap();
        let one = iteration_operator(&s, StageDepth::One, 0.1, 1, 1).unwrap();
        let two = iteration_operator(&s, StageDepth::Two, 0.1, 50, 1).unwrap();
        for e in 0..3 {
            let mut v = vec![0.0; 3];
            v[e] = 1.0;
            let diff = crate::linalg::vector::max_abs_diff(&one.apply(&v), &two.apply(&v));
            assert!(diff < 1e-8, "column {e}: {diff}");
        }
    }

    #[test]
    fn rejects_bad_criteria() {
        let case = build_transport_problem(1, 3, 1.0).unwrap();
        let s = build_stage_splittings(&case, 1.0).unwrap();
        let bad = StoppingCriterion::ErrorBound { tol: 0.0, max_iters: 10 };
        assert!(matches!(wr_run(&case.problem, &s, StageDepth::One, bad, TimeLoopMode::Stepwise), Err(Error::Config(_))));
        let bad = StoppingCriterion::FixedIters { outer: 0, inner: 1, innermost: 1 };
        assert!(bad.validate().is_err());
    }
}
