//! Symbolic p×p blocks.

/// One p×p block of a [`StructuredMatrix`](super::StructuredMatrix).
///
/// The kind is only a storage optimization: every operation is defined by
/// the expanded p×p value, and [`BlockKind::normalized`] picks the cheapest
/// kind that represents the same value.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockKind {
    Zero,
    ScaledIdentity(f64),
    /// Constant-coefficient tridiagonal band.
    Tridiagonal { sub: f64, diag: f64, sup: f64 },
    /// Diagonal with per-row entries, length p.
    DiagonalVec(Vec<f64>),
    /// Row-major p×p entries.
    Dense(Vec<f64>),
}

impl BlockKind {
    pub fn identity() -> Self {
        BlockKind::ScaledIdentity(1.0)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, BlockKind::Zero)
    }

    /// True when the block has no off-diagonal entries.
    pub fn is_diagonal(&self, p: usize) -> bool {
        match self {
            BlockKind::Zero | BlockKind::ScaledIdentity(_) | BlockKind::DiagonalVec(_) => true,
            BlockKind::Tridiagonal { sub, sup, .. } => p == 1 || (*sub == 0.0 && *sup == 0.0),
            BlockKind::Dense(d) => (0..p).all(|r| (0..p).all(|c| r == c || d[r * p + c] == 0.0)),
        }
    }

    /// Entry (r, c) of the expanded block.
    pub fn entry(&self, r: usize, c: usize, p: usize) -> f64 {
        match self {
            BlockKind::Zero => 0.0,
            BlockKind::ScaledIdentity(s) => {
                if r == c {
                    *s
                } else {
                    0.0
                }
            }
            BlockKind::Tridiagonal { sub, diag, sup } => {
                if r == c {
                    *diag
                } else if r == c + 1 {
                    *sub
                } else if c == r + 1 {
                    *sup
                } else {
                    0.0
                }
            }
            BlockKind::DiagonalVec(v) => {
                if r == c {
                    v[r]
                } else {
                    0.0
                }
            }
            BlockKind::Dense(d) => d[r * p + c],
        }
    }

    pub fn to_dense(&self, p: usize) -> Vec<f64> {
        match self {
            BlockKind::Dense(d) => d.clone(),
            _ => {
                let mut out = vec![0.0; p * p];
                for (r, c, v) in self.nonzeros(p) {
                    out[r * p + c] = v;
                }
                out
            }
        }
    }

    /// Structurally nonzero entries as (row, col, value), zero values skipped.
    pub fn nonzeros(&self, p: usize) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        match self {
            BlockKind::Zero => {}
            BlockKind::ScaledIdentity(s) => {
                if *s != 0.0 {
                    out.extend((0..p).map(|i| (i, i, *s)));
                }
            }
            BlockKind::Tridiagonal { sub, diag, sup } => {
                for i in 0..p {
                    if i > 0 && *sub != 0.0 {
                        out.push((i, i - 1, *sub));
                    }
                    if *diag != 0.0 {
                        out.push((i, i, *diag));
                    }
                    if i + 1 < p && *sup != 0.0 {
                        out.push((i, i + 1, *sup));
                    }
                }
            }
            BlockKind::DiagonalVec(v) => {
                out.extend(v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, x)| (i, i, *x)));
            }
            BlockKind::Dense(d) => {
                for r in 0..p {
                    for c in 0..p {
                        let v = d[r * p + c];
                        if v != 0.0 {
                            out.push((r, c, v));
                        }
                    }
                }
            }
        }
        out
    }

    /// `out += self · x` for one block row/column pair.
    pub fn apply_add(&self, x: &[f64], out: &mut [f64], p: usize) {
        match self {
            BlockKind::Zero => {}
            BlockKind::ScaledIdentity(s) => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += s * xi;
                }
            }
            BlockKind::Tridiagonal { sub, diag, sup } => {
                for i in 0..p {
                    let mut acc = diag * x[i];
                    if i > 0 {
                        acc += sub * x[i - 1];
                    }
                    if i + 1 < p {
                        acc += sup * x[i + 1];
                    }
                    out[i] += acc;
                }
            }
            BlockKind::DiagonalVec(v) => {
                for i in 0..p {
                    out[i] += v[i] * x[i];
                }
            }
            BlockKind::Dense(d) => {
                for (r, o) in out.iter_mut().enumerate() {
                    let row = &d[r * p..(r + 1) * p];
                    *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }

    pub fn scaled(&self, a: f64) -> BlockKind {
        match self {
            BlockKind::Zero => BlockKind::Zero,
            BlockKind::ScaledIdentity(s) => BlockKind::ScaledIdentity(a * s),
            BlockKind::Tridiagonal { sub, diag, sup } => BlockKind::Tridiagonal {
                sub: a * sub,
                diag: a * diag,
                sup: a * sup,
            },
            BlockKind::DiagonalVec(v) => BlockKind::DiagonalVec(v.iter().map(|x| a * x).collect()),
            BlockKind::Dense(d) => BlockKind::Dense(d.iter().map(|x| a * x).collect()),
        }
    }

    /// `a·x + b·y`, keeping the structured kind where the sum allows it.
    pub fn lincomb(a: f64, x: &BlockKind, b: f64, y: &BlockKind, p: usize) -> BlockKind {
        use BlockKind::*;
        let out = match (x, y) {
            (Zero, _) => y.scaled(b),
            (_, Zero) => x.scaled(a),
            (ScaledIdentity(s), ScaledIdentity(t)) => ScaledIdentity(a * s + b * t),
            (Tridiagonal { sub, diag, sup }, ScaledIdentity(t)) => Tridiagonal {
                sub: a * sub,
                diag: a * diag + b * t,
                sup: a * sup,
            },
            (ScaledIdentity(s), Tridiagonal { sub, diag, sup }) => Tridiagonal {
                sub: b * sub,
                diag: a * s + b * diag,
                sup: b * sup,
            },
            (
                Tridiagonal { sub, diag, sup },
                Tridiagonal {
                    sub: sub2,
                    diag: diag2,
                    sup: sup2,
                },
            ) => Tridiagonal {
                sub: a * sub + b * sub2,
                diag: a * diag + b * diag2,
                sup: a * sup + b * sup2,
            },
            (DiagonalVec(_) | ScaledIdentity(_), DiagonalVec(_) | ScaledIdentity(_)) => {
                DiagonalVec((0..p).map(|i| a * x.entry(i, i, p) + b * y.entry(i, i, p)).collect())
            }
            _ => {
                let dx = x.to_dense(p);
                let dy = y.to_dense(p);
                Dense(dx.iter().zip(&dy).map(|(u, v)| a * u + b * v).collect())
            }
        };
        out.normalized(p)
    }

    /// Multiply column c of the block by `d[c]`.
    pub fn scale_columns(&self, d: &[f64], p: usize) -> BlockKind {
        use BlockKind::*;
        let out = match self {
            Zero => Zero,
            ScaledIdentity(s) => DiagonalVec(d.iter().map(|x| s * x).collect()),
            DiagonalVec(v) => DiagonalVec(v.iter().zip(d).map(|(a, b)| a * b).collect()),
            _ => {
                let mut dense = self.to_dense(p);
                for r in 0..p {
                    for c in 0..p {
                        dense[r * p + c] *= d[c];
                    }
                }
                Dense(dense)
            }
        };
        out.normalized(p)
    }

    /// Cheapest kind with the same expanded value.
    pub fn normalized(self, p: usize) -> BlockKind {
        use BlockKind::*;
        match self {
            ScaledIdentity(s) if s == 0.0 => Zero,
            Tridiagonal { diag, .. } if p == 1 => ScaledIdentity(diag).normalized(p),
            Tridiagonal { sub, diag, sup } if sub == 0.0 && sup == 0.0 => {
                ScaledIdentity(diag).normalized(p)
            }
            DiagonalVec(v) => {
                let first = v[0];
                if v.iter().all(|x| *x == first) {
                    ScaledIdentity(first).normalized(p)
                } else {
                    DiagonalVec(v)
                }
            }
            Dense(d) if d.iter().all(|x| *x == 0.0) => Zero,
            other => other,
        }
    }

    /// Range of (row − col) offsets over the nonzero entries, or `None` for a zero block.
    pub(crate) fn offset_range(&self, p: usize) -> Option<(isize, isize)> {
        match self {
            BlockKind::Zero => None,
            BlockKind::ScaledIdentity(_) | BlockKind::DiagonalVec(_) => Some((0, 0)),
            BlockKind::Tridiagonal { sub, sup, .. } => {
                let lo = if *sup != 0.0 && p > 1 { -1 } else { 0 };
                let hi = if *sub != 0.0 && p > 1 { 1 } else { 0 };
                Some((lo, hi))
            }
            BlockKind::Dense(_) => {
                let nz = self.nonzeros(p);
                let lo = nz.iter().map(|(r, c, _)| *r as isize - *c as isize).min()?;
                let hi = nz.iter().map(|(r, c, _)| *r as isize - *c as isize).max()?;
                Some((lo, hi))
            }
        }
    }
}
