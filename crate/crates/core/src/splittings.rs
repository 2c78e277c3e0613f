//! Stage splittings, subproblem splittings and partition-of-unity weights.
//!
//! Every identity below is checked after construction; the checks compare
//! block by block, so they work at any m without dense expansion.

use std::fmt;

use crate::dae::ManufacturedCase;
use crate::error::{Error, Result};
use crate::linalg::{factorize, BlockKind, StructuredMatrix};

/// Largest tolerated deviation in a splitting identity.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckEntry {
    pub name: String,
    /// Measured deviation, where the check is quantitative.
    pub deviation: Option<f64>,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub entries: Vec<CheckEntry>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.entries.extend(other.entries);
    }

    fn deviation(&mut self, name: &str, deviation: f64, tol: f64) {
        self.entries.push(CheckEntry {
            name: name.to_string(),
            deviation: Some(deviation),
            passed: deviation <= tol,
            detail: format!("max deviation {deviation:e}"),
        });
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.entries.push(CheckEntry {
            name: name.to_string(),
            deviation: None,
            passed,
            detail,
        });
    }

    /// Turn a failing report into an error listing the failed checks.
    pub fn into_result(self) -> Result<ValidationReport> {
        if self.passed() {
            return Ok(self);
        }
        let msg = self
            .failures()
            .map(|e| format!("{} ({})", e.name, e.detail))
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::Validation(msg))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "[{}] {}: {}", if e.passed { "PASS" } else { "FAIL" }, e.name, e.detail)?;
        }
        Ok(())
    }
}

fn identity_deviation(lhs: &StructuredMatrix, rhs: Result<StructuredMatrix>) -> f64 {
    match rhs.and_then(|r| lhs.max_abs_diff(&r)) {
        Ok(d) => d,
        Err(_) => f64::INFINITY,
    }
}

/// The full stage family `A = M_A − N_A`, `B = M_1 − N_1`, `M_1 = M_2 − N_2`, `M_2 = M_3 − N_3`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSplittings {
    pub m_a: StructuredMatrix,
    pub n_a: StructuredMatrix,
    pub m_1: StructuredMatrix,
    pub n_1: StructuredMatrix,
    pub m_2: StructuredMatrix,
    pub n_2: StructuredMatrix,
    pub m_3: StructuredMatrix,
    pub n_3: StructuredMatrix,
}

impl StageSplittings {
    /// Derive `M_A = A + N_A`, `M_1 = B + N_1`, `N_2 = M_2 − M_1`, `N_3 = M_3 − M_2`.
    pub fn from_parts(
        a: &StructuredMatrix,
        b: &StructuredMatrix,
        n_a: StructuredMatrix,
        n_1: StructuredMatrix,
        m_2: StructuredMatrix,
        m_3: StructuredMatrix,
    ) -> Result<Self> {
        let m_a = a.add(&n_a)?;
        let m_1 = b.add(&n_1)?;
        let n_2 = m_2.sub(&m_1)?;
        let n_3 = m_3.sub(&m_2)?;
        Ok(StageSplittings { m_a, n_a, m_1, n_1, m_2, n_2, m_3, n_3 })
    }

    /// All N's zero: every stage inverts `A + h·B` directly.
    pub fn trivial(a: &StructuredMatrix, b: &StructuredMatrix) -> Result<Self> {
        let zero = StructuredMatrix::zeros(a.p(), a.q());
        Self::from_parts(a, b, zero.clone(), zero, b.clone(), b.clone())
    }

    /// `M_A + h·M_k` for stage k ∈ {1, 2, 3}.
    pub fn shifted(&self, stage: usize, h: f64) -> Result<StructuredMatrix> {
        let mk = match stage {
            1 => &self.m_1,
            2 => &self.m_2,
            3 => &self.m_3,
            _ => return Err(Error::config(format!("no stage {stage}"))),
        };
        self.m_a.combine(1.0, h, mk)
    }

    /// `h·N_1 + N_A`, the outer coupling operator.
    pub fn outer_coupling(&self, h: f64) -> Result<StructuredMatrix> {
        self.n_1.combine(h, 1.0, &self.n_a)
    }
}

/// `N_A`: (1/100)·I on diagonal block `block`, zero elsewhere.
fn corner_shift(p: usize, q: usize, block: usize) -> StructuredMatrix {
    let mut n = StructuredMatrix::zeros(p, q);
    n.set_block(block, block, BlockKind::ScaledIdentity(0.01));
    n
}

/// dcoef × block-tridiag(I, c·I, I).
fn identity_band(p: usize, q: usize, center: f64, dcoef: f64) -> StructuredMatrix {
    StructuredMatrix::block_tridiagonal(
        p,
        q,
        BlockKind::ScaledIdentity(dcoef),
        BlockKind::ScaledIdentity(center * dcoef),
        BlockKind::ScaledIdentity(dcoef),
    )
}

/// The experiment's splittings without validation.
///
/// `n1_scale` multiplies `N_1` after `M_1` has been fixed, so any value other
/// than 1 breaks `B = M_1 − N_1` and yields a divergent iteration.
pub fn standard_stage_splittings(a: &StructuredMatrix, b: &StructuredMatrix, dcoef: f64, n1_scale: f64) -> Result<StageSplittings> {
    let (p, q) = (a.p(), a.q());
    if q < 2 {
        return Err(Error::config("stage splittings need q ≥ 2"));
    }
    let mut s = StageSplittings::from_parts(
        a,
        b,
        corner_shift(p, q, q - 2),
        identity_band(p, q, 2.0, dcoef),
        StructuredMatrix::scaled_identity(p, q, 8.0 * dcoef),
        StructuredMatrix::scaled_identity(p, q, 10.0 * dcoef),
    )?;
    if n1_scale != 1.0 {
        s.n_1 = s.n_1.scale(n1_scale);
    }
    Ok(s)
}

/// Build and validate the stage splittings for a manufactured case.
pub fn build_stage_splittings(case: &ManufacturedCase, dcoef: f64) -> Result<StageSplittings> {
    let pr = &case.problem;
    let s = standard_stage_splittings(&pr.a, &pr.b, dcoef, 1.0)?;
    validate_stage(&s, &pr.a, &pr.b, pr.h()).into_result()?;
    Ok(s)
}

pub fn validate_stage(s: &StageSplittings, a: &StructuredMatrix, b: &StructuredMatrix, h: f64) -> ValidationReport {
    let mut r = ValidationReport::default();
    r.deviation("A = M_A - N_A", identity_deviation(a, s.m_a.sub(&s.n_a)), IDENTITY_TOLERANCE);
    r.deviation("B = M_1 - N_1", identity_deviation(b, s.m_1.sub(&s.n_1)), IDENTITY_TOLERANCE);
    r.deviation("M_1 = M_2 - N_2", identity_deviation(&s.m_1, s.m_2.sub(&s.n_2)), IDENTITY_TOLERANCE);
    r.deviation("M_2 = M_3 - N_3", identity_deviation(&s.m_2, s.m_3.sub(&s.n_3)), IDENTITY_TOLERANCE);
    for stage in 1..=3 {
        let name = format!("M_A + h M_{stage} nonsingular");
        match s.shifted(stage, h).and_then(|m| factorize(&m)) {
            Ok(f) => r.check(&name, true, format!("{:?} path", f.path())),
            Err(e) => r.check(&name, false, e.to_string()),
        }
    }
    r
}

/// Splitting of subproblem `index` (1 or 2): `M_A_l = A + N_A_l`, `M_1_l = B + N_1_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSplitting {
    pub index: usize,
    pub n_a: StructuredMatrix,
    pub n_1: StructuredMatrix,
    pub m_a: StructuredMatrix,
    pub m_1: StructuredMatrix,
}

impl SubproblemSplitting {
    pub fn new(index: usize, a: &StructuredMatrix, b: &StructuredMatrix, n_a: StructuredMatrix, n_1: StructuredMatrix) -> Result<Self> {
        let m_a = a.add(&n_a)?;
        let m_1 = b.add(&n_1)?;
        Ok(SubproblemSplitting { index, n_a, n_1, m_a, m_1 })
    }

    /// `M_A_l + h·M_1_l`.
    pub fn shifted(&self, h: f64) -> Result<StructuredMatrix> {
        self.m_a.combine(1.0, h, &self.m_1)
    }

    /// `h·N_1_l + N_A_l`.
    pub fn coupling(&self, h: f64) -> Result<StructuredMatrix> {
        self.n_1.combine(h, 1.0, &self.n_a)
    }
}

pub fn standard_subproblem_splittings(a: &StructuredMatrix, b: &StructuredMatrix, dcoef: f64) -> Result<[SubproblemSplitting; 2]> {
    let (p, q) = (a.p(), a.q());
    if q < 2 {
        return Err(Error::config("subproblem splittings need q ≥ 2"));
    }
    Ok([
        SubproblemSplitting::new(1, a, b, corner_shift(p, q, q - 2), identity_band(p, q, 2.0, dcoef))?,
        SubproblemSplitting::new(2, a, b, corner_shift(p, q, q - 1), identity_band(p, q, 3.0, dcoef))?,
    ])
}

pub fn build_subproblem_splittings(case: &ManufacturedCase, dcoef: f64) -> Result<[SubproblemSplitting; 2]> {
    let pr = &case.problem;
    let subs = standard_subproblem_splittings(&pr.a, &pr.b, dcoef)?;
    validate_subproblems(&subs, &pr.a, &pr.b, pr.h()).into_result()?;
    Ok(subs)
}

pub fn validate_subproblems(subs: &[SubproblemSplitting], a: &StructuredMatrix, b: &StructuredMatrix, h: f64) -> ValidationReport {
    let mut r = ValidationReport::default();
    for s in subs {
        let l = s.index;
        r.deviation(&format!("M_A{l} = A + N_A{l}"), identity_deviation(&s.m_a, a.add(&s.n_a)), IDENTITY_TOLERANCE);
        r.deviation(&format!("M_1{l} = B + N_1{l}"), identity_deviation(&s.m_1, b.add(&s.n_1)), IDENTITY_TOLERANCE);
        let name = format!("M_A{l} + h M_1{l} nonsingular");
        match s.shifted(h).and_then(|m| factorize(&m)) {
            Ok(f) => r.check(&name, true, format!("{:?} path", f.path())),
            Err(e) => r.check(&name, false, e.to_string()),
        }
    }
    r
}

/// Placement of the fractional weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapShape {
    /// One shared diagonal position in the middle (o = 1).
    Single,
    /// Everything shared except the first and last row (o = m/2 − 1).
    Maximal,
}

impl OverlapShape {
    /// Map an overlap width o to a shape for size m; o = 1 wins when both apply.
    pub fn from_width(m: usize, o: usize) -> Result<Self> {
        if o == 1 {
            Ok(OverlapShape::Single)
        } else if m % 2 == 0 && m >= 2 && o == m / 2 - 1 {
            Ok(OverlapShape::Maximal)
        } else {
            Err(Error::config(format!("overlap o = {o} is neither 1 nor m/2 - 1 for m = {m}")))
        }
    }

    /// The nominal overlap width for size m.
    pub fn width(&self, m: usize) -> usize {
        match self {
            OverlapShape::Single => 1,
            OverlapShape::Maximal => (m / 2).saturating_sub(1),
        }
    }
}

impl std::str::FromStr for OverlapShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "single" => Ok(OverlapShape::Single),
            "max" | "maximal" => Ok(OverlapShape::Maximal),
            other => Err(Error::config(format!("unknown overlap '{other}' (expected 1 or max)"))),
        }
    }
}

impl fmt::Display for OverlapShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OverlapShape::Single => "1",
            OverlapShape::Maximal => "max",
        })
    }
}

/// Diagonal weights `E_{l,j}` for two subproblems; `weights[l][j]` weighs iterate j in processor l's mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionOfUnity {
    pub m: usize,
    pub shape: OverlapShape,
    pub alphas: [f64; 4],
    pub weights: [[Vec<f64>; 2]; 2],
}

impl PartitionOfUnity {
    /// `E_{l,j}` with 1-based l, j as written in the method displays.
    pub fn e(&self, l: usize, j: usize) -> &[f64] {
        &self.weights[l - 1][j - 1]
    }
}

pub const DEFAULT_ALPHAS: [f64; 4] = [0.5, 0.5, 0.5, 0.5];

fn check_alphas(alphas: &[f64; 4]) -> Vec<(String, bool, String)> {
    let mut out = Vec::new();
    for (i, a) in alphas.iter().enumerate() {
        let ok = a.is_finite() && *a >= 0.0;
        out.push((format!("alpha{} >= 0", i + 1), ok, format!("alpha{} = {a}", i + 1)));
    }
    for (i, j) in [(0, 1), (2, 3)] {
        let sum = alphas[i] + alphas[j];
        let name = format!("alpha{} + alpha{} = 1", i + 1, j + 1);
        let detail = if sum == 1.0 {
            format!("alpha{} + alpha{} = 1", i + 1, j + 1)
        } else {
            let shown = (sum * 1e12).round() / 1e12;
            format!("alpha{} + alpha{} = {shown} ≠ 1", i + 1, j + 1)
        };
        out.push((name, sum == 1.0, detail));
    }
    out
}

fn weight_pair(m: usize, shape: OverlapShape, first: f64, second: f64) -> [Vec<f64>; 2] {
    let mut w1 = vec![0.0; m];
    let mut w2 = vec![0.0; m];
    match shape {
        OverlapShape::Single => {
            let split = (m + 1) / 2 - 1;
            for i in 0..m {
                if i < split {
                    w1[i] = 1.0;
                } else if i == split {
                    w1[i] = first;
                    w2[i] = second;
                } else {
                    w2[i] = 1.0;
                }
            }
        }
        OverlapShape::Maximal => {
            w1[0] = 1.0;
            w2[m - 1] = 1.0;
            for i in 1..m - 1 {
                w1[i] = first;
                w2[i] = second;
            }
        }
    }
    [w1, w2]
}

/// Build the weights; constraint violations are configuration errors naming the constraint.
pub fn build_partition(m: usize, shape: OverlapShape, alphas: [f64; 4]) -> Result<PartitionOfUnity> {
    if m < 3 {
        return Err(Error::config(format!("partition needs m >= 3, got {m}")));
    }
    if let Some((name, _, detail)) = check_alphas(&alphas).into_iter().find(|(_, ok, _)| !ok) {
        return Err(Error::config(format!("constraint {name} violated: {detail}")));
    }
    let weights = [
        weight_pair(m, shape, alphas[0], alphas[1]),
        weight_pair(m, shape, alphas[2], alphas[3]),
    ];
    Ok(PartitionOfUnity { m, shape, alphas, weights })
}

pub fn validate_partition(part: &PartitionOfUnity) -> ValidationReport {
    let mut r = ValidationReport::default();
    for l in 0..2 {
        let [w1, w2] = &part.weights[l];
        let lengths_ok = w1.len() == part.m && w2.len() == part.m;
        let dev = if lengths_ok {
            w1.iter().zip(w2).fold(0.0, |acc: f64, (a, b)| acc.max((a + b - 1.0).abs()))
        } else {
            f64::INFINITY
        };
        // exact: no tolerance on the partition of unity
        r.deviation(&format!("E_{0}1 + E_{0}2 = I", l + 1), dev, 0.0);
        let min = w1.iter().chain(w2).fold(f64::INFINITY, |acc: f64, x| acc.min(*x));
        r.check(&format!("E_{}j >= 0", l + 1), min >= 0.0, format!("smallest weight {min}"));
    }
    for (name, ok, detail) in check_alphas(&part.alphas) {
        r.check(&name, ok, detail);
    }
    r
}
