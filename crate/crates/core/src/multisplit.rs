//! Multisplitting waveform relaxation with two overlapping subproblems.
//!
//! Processor l solves `(M_A_l + h M_1_l) y^{l,k+1} = (h N_1_l + N_A_l) w^l + A y_n + h f_{n+1}`,
//! where the mixture `w^l = E_{l,1} y^1 + E_{l,2} y^2` uses whichever iterates the
//! method makes available:
//!
//! - `Jacobi`: both from iteration k, solves independent.
//! - `GSSerial`: processor 2 mixes in processor 1's fresh iterate.
//! - `GSDecoupled`: the own-weight term moves to the left,
//!   `(M_A_l + h M_1_l − (h N_1_l + N_A_l) E_{l,l}) y^{l,k+1} = (h N_1_l + N_A_l) E_{l,j} y^{j,k} + ...`,
//!   solves independent.
//! - `GSCoupled`: same left-hand sides, but the slower processor uses the faster one's fresh iterate.
//!
//! The reported iterate is the row-`mixing_row` mixture unless the guard has
//! switched mixing off for the current step, in which case it is `y^{1,k}`.

use std::fmt;
use std::time::Instant;

use crate::dae::LinearDAE;
use crate::error::{Error, Result};
use crate::linalg::vector::{dist2, mix, weighted};
use crate::linalg::{factorize, BandFactorization, StructuredMatrix};
use crate::splittings::{PartitionOfUnity, SubproblemSplitting};
use crate::stages::{StepRecord, StoppingCriterion, SolveTrace, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MsMethod {
    Jacobi,
    GSSerial,
    GSDecoupled,
    /// Processor `fast` (1 or 2) finishes first and the other uses its fresh iterate.
    GSCoupled { fast: u8 },
}

impl MsMethod {
    pub fn validate(&self) -> Result<()> {
        match self {
            MsMethod::GSCoupled { fast } if *fast != 1 && *fast != 2 => {
                Err(Error::config(format!("fast processor must be 1 or 2, got {fast}")))
            }
            _ => Ok(()),
        }
    }

    /// Whether the own-weight term sits on the left-hand side.
    fn moves_own_weight(&self) -> bool {
        matches!(self, MsMethod::GSDecoupled | MsMethod::GSCoupled { .. })
    }
}

impl fmt::Display for MsMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MsMethod::Jacobi => f.write_str("ms-jacobi"),
            MsMethod::GSSerial => f.write_str("ms-gs-serial"),
            MsMethod::GSDecoupled => f.write_str("ms-gs-decoupled"),
            MsMethod::GSCoupled { fast } => write!(f, "ms-gs-coupled(fast={fast})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardDecision {
    Mix,
    SwitchOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GuardLogEntry {
    pub step: usize,
    pub iteration: usize,
    pub decision: GuardDecision,
}

/// Decisions taken by the mixing guard during a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MixingGuardState {
    pub log: Vec<GuardLogEntry>,
}

impl MixingGuardState {
    pub fn switched_off(&self) -> impl Iterator<Item = &GuardLogEntry> {
        self.log.iter().filter(|e| e.decision == GuardDecision::SwitchOff)
    }

    pub fn all_mixed(&self) -> bool {
        self.switched_off().next().is_none()
    }
}

/// Additive offset applied to one subproblem's first iterate of every step.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultInjection {
    pub subproblem: usize,
    pub offset: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsOptions {
    pub guard: bool,
    /// Row of E (1 or 2) that synthesizes the reported iterate.
    pub mixing_row: usize,
    /// Test hook for exercising the guard.
    pub fault: Option<FaultInjection>,
}

impl Default for MsOptions {
    fn default() -> Self {
        MsOptions { guard: false, mixing_row: 1, fault: None }
    }
}

/// Guard test on iterates k and k−1:
///
/// ```text
/// ‖(E_{1,1} y^{1,k} + E_{1,2} y^{2,k}) − y^{1,k−1}‖ ≤ ‖y^{1,k} − y^{1,k−1}‖
/// ‖(E_{2,1} y^{1,k} + E_{2,2} y^{2,k}) − y^{2,k−1}‖ ≤ ‖y^{2,k} − y^{2,k−1}‖
/// ```
///
/// For `GSSerial` the second mixture takes `y1_next` (= y^{1,k+1}) when given.
pub fn mixing_guard_check(
    y1k: &[f64],
    y2k: &[f64],
    y1km1: &[f64],
    y2km1: &[f64],
    part: &PartitionOfUnity,
    method: MsMethod,
    y1_next: Option<&[f64]>,
) -> GuardDecision {
    let first = mix(part.e(1, 1), y1k, part.e(1, 2), y2k);
    let ok1 = dist2(&first, y1km1) <= dist2(y1k, y1km1);
    let y1_for_second = match (method, y1_next) {
        (MsMethod::GSSerial, Some(next)) => next,
        _ => y1k,
    };
    let second = mix(part.e(2, 1), y1_for_second, part.e(2, 2), y2k);
    let ok2 = dist2(&second, y2km1) <= dist2(y2k, y2km1);
    if ok1 && ok2 {
        GuardDecision::Mix
    } else {
        GuardDecision::SwitchOff
    }
}

/// Per-processor operators.
struct Processor<'a> {
    sub: &'a SubproblemSplitting,
    /// `h N_1_l + N_A_l`
    coupling: StructuredMatrix,
    lhs: BandFactorization,
    own: &'a [f64],
    other: &'a [f64],
}

impl<'a> Processor<'a> {
    fn new(sub: &'a SubproblemSplitting, part: &'a PartitionOfUnity, method: MsMethod, h: f64, trace: &mut SolveTrace) -> Result<Self> {
        let l = sub.index;
        if l != 1 && l != 2 {
            return Err(Error::config(format!("subproblem index must be 1 or 2, got {l}")));
        }
        let j = 3 - l;
        let own = part.e(l, l);
        let other = part.e(l, j);
        let coupling = sub.coupling(h)?;
        let mut lhs_matrix = sub.shifted(h)?;
        if method.moves_own_weight() {
            lhs_matrix = lhs_matrix.sub(&coupling.scale_columns(own)?)?;
        }
        let lhs = factorize(&lhs_matrix)?;
        trace.factorizations += 1;
        Ok(Processor { sub, coupling, lhs, own, other })
    }

    /// New iterate of this processor from `mine` (own previous) and `theirs` (partner's, per method).
    fn update(&self, mine: &[f64], theirs: &[f64], base: &[f64], decoupled: bool) -> Vec<f64> {
        let w = if decoupled { weighted(self.other, theirs) } else { mix(self.own, mine, self.other, theirs) };
        let mut rhs = base.to_vec();
        self.coupling.matvec_add(&w, &mut rhs);
        self.lhs.solve_in_place(&mut rhs);
        rhs
    }
}

fn order_pair<T>(l: usize, a: T, b: T) -> (T, T) {
    if l == 1 {
        (a, b)
    } else {
        (b, a)
    }
}

/// One iteration of `method` from (y1, y2) to (y1', y2').
fn iterate(method: MsMethod, procs: &[Processor; 2], y1: &[f64], y2: &[f64], base: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let [p1, p2] = procs;
    match method {
        MsMethod::Jacobi => rayon::join(|| p1.update(y1, y2, base, false), || p2.update(y2, y1, base, false)),
        MsMethod::GSSerial => {
            let n1 = p1.update(y1, y2, base, false);
            let n2 = p2.update(y2, &n1, base, false);
            (n1, n2)
        }
        MsMethod::GSDecoupled => rayon::join(|| p1.update(y1, y2, base, true), || p2.update(y2, y1, base, true)),
        MsMethod::GSCoupled { fast } => {
            let fast = fast as usize;
            let (pf, ps) = order_pair(fast, p1, p2);
            let (yf, ys) = order_pair(fast, y1, y2);
            let nf = pf.update(yf, ys, base, true);
            let ns = ps.update(ys, &nf, base, true);
            order_pair(fast, nf, ns)
        }
    }
}

/// `M_A_1 y_n − N_A_1 y_n + h f_{n+1}` (the history term equals `A y_n`).
fn step_base(sub: &SubproblemSplitting, y_n: &[f64], hf: Vec<f64>) -> Vec<f64> {
    let mut base = hf;
    sub.m_a.matvec_add(y_n, &mut base);
    let na = sub.n_a.matvec(y_n).expect("state length matches");
    for (b, x) in base.iter_mut().zip(na) {
        *b -= x;
    }
    base
}

fn check_inputs(problem: &LinearDAE, subs: &[SubproblemSplitting; 2], part: &PartitionOfUnity, opts: &MsOptions) -> Result<()> {
    let m = problem.m();
    if part.m != m {
        return Err(Error::DimensionMismatch { expected: m, found: part.m });
    }
    if subs[0].index != 1 || subs[1].index != 2 {
        return Err(Error::config("subproblems must be given in order 1, 2"));
    }
    if opts.mixing_row != 1 && opts.mixing_row != 2 {
        return Err(Error::config(format!("mixing row must be 1 or 2, got {}", opts.mixing_row)));
    }
    if let Some(f) = &opts.fault {
        if f.offset.len() != m || (f.subproblem != 1 && f.subproblem != 2) {
            return Err(Error::config("fault injection must target subproblem 1 or 2 with a length-m offset"));
        }
    }
    Ok(())
}

pub fn ms_run(
    problem: &LinearDAE,
    subs: &[SubproblemSplitting; 2],
    part: &PartitionOfUnity,
    method: MsMethod,
    stop: StoppingCriterion,
    opts: &MsOptions,
) -> Result<(Trajectory, SolveTrace, MixingGuardState)> {
    method.validate()?;
    stop.validate()?;
    check_inputs(problem, subs, part, opts)?;
    let start = Instant::now();
    let h = problem.h();
    let mut trace = SolveTrace::default();
    let mut guard = MixingGuardState::default();
    let procs = [
        Processor::new(&subs[0], part, method, h, &mut trace)?,
        Processor::new(&subs[1], part, method, h, &mut trace)?,
    ];
    let path = [procs[0].lhs.path(), procs[1].lhs.path()];
    let row = opts.mixing_row;

    let times = problem.grid.times();
    let mut states = vec![problem.y0.clone()];
    for n in 0..problem.steps() {
        let y_n = states[n].clone();
        let hf = problem.forcing_at(times[n + 1]).into_iter().map(|x| h * x).collect();
        let base = step_base(procs[0].sub, &y_n, hf);
        let (mut y1, mut y2) = (y_n.clone(), y_n.clone());
        let mut y = y_n;
        let mut mixing = true;
        let mut rec = StepRecord { step: n + 1, outer: 0, inner: 0, innermost: 0, update_norm: f64::INFINITY };
        loop {
            let (mut n1, mut n2) = iterate(method, &procs, &y1, &y2, &base);
            for (l, p) in path.iter().enumerate() {
                trace.record_solve(*p);
                trace.subproblem_solves[l] += 1;
            }
            if rec.outer == 0 {
                if let Some(f) = &opts.fault {
                    let target = if f.subproblem == 1 { &mut n1 } else { &mut n2 };
                    crate::linalg::vector::axpy(1.0, &f.offset, target);
                }
            }
            rec.outer += 1;
            if opts.guard && mixing {
                let decision = mixing_guard_check(&n1, &n2, &y1, &y2, part, method, None);
                guard.log.push(GuardLogEntry { step: n + 1, iteration: rec.outer, decision });
                mixing = decision == GuardDecision::Mix;
            }
            let y_new = if mixing { mix(part.e(row, 1), &n1, part.e(row, 2), &n2) } else { n1.clone() };
            rec.update_norm = dist2(&y_new, &y);
            y = y_new;
            y1 = n1;
            y2 = n2;
            let done = match stop {
                StoppingCriterion::ErrorBound { tol, max_iters } => {
                    if rec.update_norm <= tol {
                        true
                    } else if rec.outer >= max_iters || !rec.update_norm.is_finite() {
                        trace.steps.push(rec);
                        trace.elapsed = start.elapsed();
                        return Err(Error::NotConverged {
                            step: n + 1,
                            iterations: rec.outer,
                            last_update: rec.update_norm,
                            trace: Box::new(trace),
                        });
                    } else {
                        false
                    }
                }
                StoppingCriterion::FixedIters { outer, .. } => rec.outer >= outer,
            };
            if done {
                break;
            }
        }
        trace.steps.push(rec);
        states.push(y);
    }
    trace.elapsed = start.elapsed();
    Ok((Trajectory { times, states }, trace, guard))
}

/// Homogeneous map `(y^{1,k}, y^{2,k}) ↦ (y^{1,k+1}, y^{2,k+1})` on the stacked 2m vector.
pub struct MsIterationOperator<'a> {
    method: MsMethod,
    procs: [Processor<'a>; 2],
    m: usize,
}

impl<'a> MsIterationOperator<'a> {
    pub fn dim(&self) -> usize {
        2 * self.m
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let zero = vec![0.0; self.m];
        let (n1, n2) = iterate(self.method, &self.procs, &v[..self.m], &v[self.m..], &zero);
        let mut out = n1;
        out.extend(n2);
        out
    }
}

pub fn ms_iteration_operator<'a>(
    subs: &'a [SubproblemSplitting; 2],
    part: &'a PartitionOfUnity,
    method: MsMethod,
    h: f64,
) -> Result<MsIterationOperator<'a>> {
    method.validate()?;
    let mut scratch = SolveTrace::default();
    let procs = [
        Processor::new(&subs[0], part, method, h, &mut scratch)?,
        Processor::new(&subs[1], part, method, h, &mut scratch)?,
    ];
    Ok(MsIterationOperator { method, procs, m: part.m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dae::build_transport_problem;
    use crate::linalg::vector::max_abs_diff;
    use crate::splittings::{build_partition, build_subproblem_splittings, OverlapShape, DEFAULT_ALPHAS};
    use crate::stages::direct_euler;

    const ALL: [MsMethod; 5] = [
        MsMethod::Jacobi,
        MsMethod::GSSerial,
        MsMethod::GSDecoupled,
        MsMethod::GSCoupled { fast: 1 },
        MsMethod::GSCoupled { fast: 2 },
    ];

    fn tight() -> StoppingCriterion {
        StoppingCriterion::ErrorBound { tol: 1e-10, max_iters: 10_000 }
    }

    #[test]
    fn disjoint_jacobi_reaches_oracle() {
        let case = build_transport_problem(1, 3, 1.0).unwrap();
        let subs = build_subproblem_splittings(&case, 1.0).unwrap();
        let part = build_partition(3, OverlapShape::Single, [1.0, 0.0, 0.0, 1.0]).unwrap();
        let (traj, _, _) = ms_run(&case.problem, &subs, &part, MsMethod::Jacobi, tight(), &MsOptions::default()).unwrap();
        assert!(traj.max_diff(&direct_euler(&case.problem).unwrap()) < 1e-8);
    }

    #[test]
    fn all_methods_reach_oracle() {
        for (p, q) in [(1, 3), (2, 3)] {
            let case = build_transport_problem(p, q, 1.0).unwrap();
            let direct = direct_euler(&case.problem).unwrap();
            let subs = build_subproblem_splittings(&case, 1.0).unwrap();
            for shape in [OverlapShape::Single, OverlapShape::Maximal] {
                let part = build_partition(case.m(), shape, DEFAULT_ALPHAS).unwrap();
                for method in ALL {
                    let (traj, trace, _) = ms_run(&case.problem, &subs, &part, method, tight(), &MsOptions::default()).unwrap();
                    let d = traj.max_diff(&direct);
                    assert!(d < 1e-8, "{p}x{q} {shape:?} {method}: {d}");
                    assert_eq!(trace.subproblem_solves[0], trace.subproblem_solves[1]);
                    assert_eq!(trace.factorizations, 2);
                }
            }
        }
    }

    #[test]
    fn history_term_equals_a_times_state() {
        let case = build_transport_problem(2, 3, 1.0).unwrap();
        let subs = build_subproblem_splittings(&case, 1.0).unwrap();
        let y: Vec<f64> = (0..6).map(|i| (i as f64 * 0.7).cos()).collect();
        for sub in &subs {
            let got = step_base(sub, &y, vec![0.0; 6]);
            let want = case.problem.a.matvec(&y).unwrap();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn stationary_point_is_preserved() {
        let case = build_transport_problem(2, 3, 1.0).unwrap();
        let pr = &case.problem;
        let h = pr.h();
        let subs = build_subproblem_splittings(&case, 1.0).unwrap();
        let a_hb = pr.a.combine(1.0, h, &pr.b).unwrap();
        for sub in &subs {
            let recombined = sub.shifted(h).unwrap().sub(&sub.coupling(h).unwrap()).unwrap();
            assert!(recombined.max_abs_diff(&a_hb).unwrap() < 1e-15);
        }
        // y* solving (A + hB) y* = A y_n + h f
        let y_n = pr.y0.clone();
        let mut base = pr.a.matvec(&y_n).unwrap();
        crate::linalg::vector::axpy(h, &pr.forcing_at(0.1), &mut base);
        let y_star = factorize(&a_hb).unwrap().solve(&base).unwrap();
        for shape in [OverlapShape::Single, OverlapShape::Maximal] {
            let part = build_partition(6, shape, [0.3, 0.7, 0.6, 0.4]).unwrap();
            for method in ALL {
                let mut scratch = SolveTrace::default();
                let procs = [
                    Processor::new(&subs[0], &part, method, h, &mut scratch).unwrap(),
                    Processor::new(&subs[1], &part, method, h, &mut scratch).unwrap(),
                ];
                let (n1, n2) = iterate(method, &procs, &y_star, &y_star, &base);
                assert!(max_abs_diff(&n1, &y_star) < 1e-12, "{method}");
                assert!(max_abs_diff(&n2, &y_star) < 1e-12, "{method}");
            }
        }
    }

    #[test]
    fn serial_equals_jacobi_without_cross_weight() {
        // E_{2,1} = 0 when alpha3 = 0 on the single overlap... except rows left of the split
        // carry 1, so zero the whole row by hand.
        let case = build_transport_problem(2, 3, 1.0).unwrap();
        let subs = build_subproblem_splittings(&case, 1.0).unwrap();
        let mut part = build_partition(6, OverlapShape::Single, DEFAULT_ALPHAS).unwrap();
        part.weights[1][0] = vec![0.0; 6];
        part.weights[1][1] = vec![1.0; 6];
        let stop = StoppingCriterion::FixedIters { outer: 7, inner: 1, innermost: 1 };
        let (a, _, _) = ms_run(&case.problem, &subs, &part, MsMethod::Jacobi, stop, &MsOptions::default()).unwrap();
        let (b, _, _) = ms_run(&case.problem, &subs, &part, MsMethod::GSSerial, stop, &MsOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn coupled_speed_cases_agree_under_symmetry() {
        // identical subproblems and a symmetric E: swapping roles gives the same iterates
        let case = build_transport_problem(1, 3, 1.0).unwrap();
        let pr = &case.problem;
        let base = build_subproblem_splittings(&case, 1.0).unwrap();
        let mut twin = base[0].clone();
        twin.index = 2;
        let subs = [base[0].clone(), twin];
        let mut part = build_partition(3, OverlapShape::Single, DEFAULT_ALPHAS).unwrap();
        let half = vec![0.5; 3];
        part.weights = [[half.clone(), half.clone()], [half.clone(), half]];
        let stop = StoppingCriterion::FixedIters { outer: 6, inner: 1, innermost: 1 };
        let (a, _, _) = ms_run(pr, &subs, &part, MsMethod::GSCoupled { fast: 1 }, stop, &MsOptions::default()).unwrap();
        let (b, _, _) = ms_run(pr, &subs, &part, MsMethod::GSCoupled { fast: 2 }, stop, &MsOptions::default()).unwrap();
        assert!(a.max_diff(&b) < 1e-15);
    }

    #[test]
    fn guard_stationary_case_mixes() {
        let part = build_partition(3, OverlapShape::Single, DEFAULT_ALPHAS).unwrap();
        let y = vec![0.3, -1.0, 2.0];
        for method in ALL {
            assert_eq!(mixing_guard_check(&y, &y, &y, &y, &part, method, None), GuardDecision::Mix);
        }
    }

    #[test]
    fn guard_rejects_wild_partner() {
        let part = build_partition(3, OverlapShape::Single, DEFAULT_ALPHAS).unwrap();
        let y1k = vec![1.0, 0.5, 0.2];
        let y1km1 = vec![1.0 + 1e-4, 0.5, 0.2];
        let y2k = vec![1e6, 1e6, 1e6];
        let y2km1 = vec![0.0; 3];
        assert_eq!(
            mixing_guard_check(&y1k, &y2k, &y1km1, &y2km1, &part, MsMethod::Jacobi, None),
            GuardDecision::SwitchOff
        );
    }

    #[test]
    fn guard_on_disjoint_partition_matches_elementwise_oracle() {
        let part = build_partition(6, OverlapShape::Single, [1.0, 0.0, 0.0, 1.0]).unwrap();
        let y1k = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y2k = vec![1.5, 2.5, 3.5, 4.5, 5.5, 6.5];
        let y1km1 = vec![0.9, 2.1, 3.0, 4.0, 5.2, 6.0];
        let y2km1 = vec![1.5, 2.4, 3.5, 4.4, 5.5, 6.5];
        // row 1 mixture: y1k on rows 0..=2, y2k on rows 3..=5
        let mix1 = [1.0, 2.0, 3.0, 4.5, 5.5, 6.5];
        // row 2 mixture: y1k on rows 0..=1, y2k on rows 2..=5
        let mix2 = [1.0, 2.0, 3.5, 4.5, 5.5, 6.5];
        let norm = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let want = if norm(&mix1, &y1km1) <= norm(&y1k, &y1km1) && norm(&mix2, &y2km1) <= norm(&y2k, &y2km1) {
            GuardDecision::Mix
        } else {
            GuardDecision::SwitchOff
        };
        assert_eq!(mixing_guard_check(&y1k, &y2k, &y1km1, &y2km1, &part, MsMethod::Jacobi, None), want);
        assert_eq!(want, GuardDecision::SwitchOff);
    }

    #[test]
    fn serial_guard_uses_fresh_first_iterate() {
        let part = build_partition(3, OverlapShape::Single, DEFAULT_ALPHAS).unwrap();
        let y1k = vec![1.0, 1.0, 1.0];
        let y2k = vec![1.0, 1.0, 1.0];
        let y1km1 = vec![1.0, 1.0, 1.0];
        let y2km1 = vec![0.0, 0.0, 0.0];
        let far = vec![100.0, 100.0, 100.0];
        assert_eq!(mixing_guard_check(&y1k, &y2k, &y1km1, &y2km1, &part, MsMethod::GSSerial, None), GuardDecision::Mix);
        assert_eq!(
            mixing_guard_check(&y1k, &y2k, &y1km1, &y2km1, &part, MsMethod::GSSerial, Some(&far)),
            GuardDecision::SwitchOff
        );
        // other methods ignore the fresh iterate
        assert_eq!(mixing_guard_check(&y1k, &y2k, &y1km1, &y2km1, &part, MsMethod::Jacobi, Some(&far)), GuardDecision::Mix);
    }

    #[test]
    fn invalid_fast_flag() {
        assert!(MsMethod::GSCoupled { fast: 3 }.validate().is_err());
    }
}
