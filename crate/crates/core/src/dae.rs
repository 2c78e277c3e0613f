//! Linear DAE problem record and the manufactured test case.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{factorize, BlockKind, StructuredMatrix};

/// Right-hand side `t ↦ f(t)`; must be pure so it can be evaluated from any worker.
pub type Forcing = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Uniform time grid `t_n = t0 + n·h`, n = 0..=steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub h: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, h: f64, steps: usize) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() || !t0.is_finite() {
            return Err(Error::config(format!("invalid time grid: t0 = {t0}, h = {h}")));
        }
        Ok(TimeGrid { t0, h, steps })
    }

    pub fn t(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.h
    }

    pub fn t_end(&self) -> f64 {
        self.t(self.steps)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|n| self.t(n)).collect()
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid { t0: 0.0, h: 0.1, steps: 20 }
    }
}

/// `A y' + B y = f(t)`, `y(t0) = y0`, on a uniform grid.
#[derive(Clone)]
pub struct LinearDAE {
    pub a: StructuredMatrix,
    pub b: StructuredMatrix,
    pub forcing: Forcing,
    pub y0: Vec<f64>,
    pub grid: TimeGrid,
}

impl fmt::Debug for LinearDAE {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearDAE")
            .field("m", &self.m())
            .field("p", &self.a.p())
            .field("q", &self.a.q())
            .field("grid", &self.grid)
            .finish()
    }
}

impl LinearDAE {
    /// Checks shapes and that B factorizes; A may be singular.
    pub fn new(a: StructuredMatrix, b: StructuredMatrix, forcing: Forcing, y0: Vec<f64>, grid: TimeGrid) -> Result<Self> {
        if a.p() != b.p() || a.q() != b.q() {
            return Err(Error::ShapeMismatch {
                left_p: a.p(),
                left_q: a.q(),
                right_p: b.p(),
                right_q: b.q(),
            });
        }
        if y0.len() != a.m() {
            return Err(Error::DimensionMismatch { expected: a.m(), found: y0.len() });
        }
        factorize(&b).map_err(|e| Error::config(format!("B must be nonsingular: {e}")))?;
        Ok(LinearDAE { a, b, forcing, y0, grid })
    }

    pub fn m(&self) -> usize {
        self.a.m()
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    pub fn forcing_at(&self, t: f64) -> Vec<f64> {
        (self.forcing)(t)
    }
}

fn check_pattern_len(m: usize) -> Result<()> {
    if m == 0 || m % 3 != 0 {
        return Err(Error::config(format!("manufactured solution needs m divisible by 3, got {m}")));
    }
    Ok(())
}

/// `[cos t, sin t, t]` repeated m/3 times.
pub fn analytic_solution(t: f64, m: usize) -> Result<Vec<f64>> {
    check_pattern_len(m)?;
    Ok((0..m)
        .map(|i| match i % 3 {
            0 => t.cos(),
            1 => t.sin(),
            _ => t,
        })
        .collect())
}

/// `[-sin t, cos t, 1]` repeated m/3 times.
pub fn analytic_derivative(t: f64, m: usize) -> Result<Vec<f64>> {
    check_pattern_len(m)?;
    Ok((0..m)
        .map(|i| match i % 3 {
            0 => -t.sin(),
            1 => t.cos(),
            _ => 1.0,
        })
        .collect())
}

/// `A y'(t) + B y(t)` for the manufactured solution.
pub fn manufactured_forcing(a: &StructuredMatrix, b: &StructuredMatrix, t: f64) -> Result<Vec<f64>> {
    let m = a.m();
    let mut f = a.matvec(&analytic_derivative(t, m)?)?;
    b.matvec_add(&analytic_solution(t, m)?, &mut f);
    Ok(f)
}

/// A problem whose exact solution is [`analytic_solution`].
#[derive(Debug, Clone)]
pub struct ManufacturedCase {
    pub p: usize,
    pub q: usize,
    pub dcoef: f64,
    pub problem: LinearDAE,
}

impl ManufacturedCase {
    pub fn m(&self) -> usize {
        self.p * self.q
    }

    pub fn exact(&self, t: f64) -> Vec<f64> {
        analytic_solution(t, self.m()).expect("case has m divisible by 3")
    }

    /// Rebuild the same matrices on another time grid.
    pub fn with_grid(&self, grid: TimeGrid) -> Result<ManufacturedCase> {
        manufactured_case(self.problem.a.clone(), self.problem.b.clone(), self.p, self.q, self.dcoef, grid)
    }
}

pub fn manufactured_rhs(case: &ManufacturedCase, t: f64) -> Vec<f64> {
    case.problem.forcing_at(t)
}

fn manufactured_case(a: StructuredMatrix, b: StructuredMatrix, p: usize, q: usize, dcoef: f64, grid: TimeGrid) -> Result<ManufacturedCase> {
    let m = a.m();
    check_pattern_len(m)?;
    let (fa, fb) = (a.clone(), b.clone());
    let forcing: Forcing = Arc::new(move |t| manufactured_forcing(&fa, &fb, t).expect("shapes checked at construction"));
    let y0 = analytic_solution(grid.t0, m)?;
    let problem = LinearDAE::new(a, b, forcing, y0, grid)?;
    Ok(ManufacturedCase { p, q, dcoef, problem })
}

/// A: q−2 identity blocks then two zero blocks.
pub fn transport_a(p: usize, q: usize) -> StructuredMatrix {
    let blocks = (0..q)
        .map(|i| if i + 2 < q { BlockKind::identity() } else { BlockKind::Zero })
        .collect();
    StructuredMatrix::block_diagonal(p, blocks)
}

/// B: dcoef × block-tridiag(−I, tridiag(−1, 4, −1), −I).
pub fn transport_b(p: usize, q: usize, dcoef: f64) -> StructuredMatrix {
    StructuredMatrix::block_tridiagonal(
        p,
        q,
        BlockKind::ScaledIdentity(-dcoef),
        BlockKind::Tridiagonal { sub: -dcoef, diag: 4.0 * dcoef, sup: -dcoef },
        BlockKind::ScaledIdentity(-dcoef),
    )
}

/// The two-component transport DAE with the manufactured solution, on the default grid
/// (t0 = 0, h = 0.1, 20 steps).
pub fn build_transport_problem(p: usize, q: usize, dcoef: f64) -> Result<ManufacturedCase> {
    build_transport_problem_on(p, q, dcoef, TimeGrid::default())
}

pub fn build_transport_problem_on(p: usize, q: usize, dcoef: f64, grid: TimeGrid) -> Result<ManufacturedCase> {
    if p < 1 {
        return Err(Error::config("block size p must be at least 1"));
    }
    if q < 3 {
        return Err(Error::config(format!("block count q must be at least 3, got {q}")));
    }
    if (p * q) % 3 != 0 {
        return Err(Error::config(format!("m = p·q = {} must be divisible by 3", p * q)));
    }
    manufactured_case(transport_a(p, q), transport_b(p, q, dcoef), p, q, dcoef, grid)
}
