use super::block::BlockKind;
use crate::error::{Error, Result};

/// Largest m for which [`StructuredMatrix::to_dense`] expands.
pub const DENSE_LIMIT: usize = 64;

/// An m×m matrix stored as a q×q grid of p×p blocks, m = p·q.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMatrix {
    p: usize,
    q: usize,
    blocks: Vec<BlockKind>,
}

impl StructuredMatrix {
    pub fn zeros(p: usize, q: usize) -> Self {
        assert!(p >= 1 && q >= 1, "block size and count must be positive");
        StructuredMatrix {
            p,
            q,
            blocks: vec![BlockKind::Zero; q * q],
        }
    }

    pub fn identity(p: usize, q: usize) -> Self {
        Self::scaled_identity(p, q, 1.0)
    }

    pub fn scaled_identity(p: usize, q: usize, s: f64) -> Self {
        Self::block_diagonal(p, (0..q).map(|_| BlockKind::ScaledIdentity(s)).collect())
    }

    /// Block-diagonal matrix; q is the number of blocks given.
    pub fn block_diagonal(p: usize, diag: Vec<BlockKind>) -> Self {
        let q = diag.len();
        let mut m = Self::zeros(p, q);
        for (i, b) in diag.into_iter().enumerate() {
            m.set_block(i, i, b);
        }
        m
    }

    /// Block-tridiagonal Toeplitz matrix with the same block on each band.
    pub fn block_tridiagonal(p: usize, q: usize, lower: BlockKind, diag: BlockKind, upper: BlockKind) -> Self {
        let mut m = Self::zeros(p, q);
        for i in 0..q {
            m.set_block(i, i, diag.clone());
            if i > 0 {
                m.set_block(i, i - 1, lower.clone());
            }
            if i + 1 < q {
                m.set_block(i, i + 1, upper.clone());
            }
        }
        m
    }

    /// Wrap a row-major dense m×m array as a single dense block (p = m, q = 1).
    pub fn from_dense(m: usize, entries: Vec<f64>) -> Self {
        assert_eq!(entries.len(), m * m);
        let mut out = Self::zeros(m, 1);
        out.set_block(0, 0, BlockKind::Dense(entries));
        out
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn m(&self) -> usize {
        self.p * self.q
    }

    pub fn block(&self, bi: usize, bj: usize) -> &BlockKind {
        &self.blocks[bi * self.q + bj]
    }

    pub fn set_block(&mut self, bi: usize, bj: usize, kind: BlockKind) {
        if let BlockKind::DiagonalVec(v) = &kind {
            assert_eq!(v.len(), self.p, "diagonal block length must equal p");
        }
        if let BlockKind::Dense(d) = &kind {
            assert_eq!(d.len(), self.p * self.p, "dense block must be p×p");
        }
        self.blocks[bi * self.q + bj] = kind.normalized(self.p);
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        let p = self.p;
        self.block(r / p, c / p).entry(r % p, c % p, p)
    }

    /// Nonzero blocks as (block row, block col, kind).
    pub fn nonzero_blocks(&self) -> impl Iterator<Item = (usize, usize, &BlockKind)> {
        let q = self.q;
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| !b.is_zero())
            .map(move |(k, b)| (k / q, k % q, b))
    }

    pub fn is_block_diagonal(&self) -> bool {
        self.nonzero_blocks().all(|(i, j, _)| i == j)
    }

    /// True when every nonzero entry is on the main diagonal.
    pub fn is_diagonal(&self) -> bool {
        self.is_block_diagonal() && self.nonzero_blocks().all(|(_, _, b)| b.is_diagonal(self.p))
    }

    /// Row-major dense expansion; only for m ≤ [`DENSE_LIMIT`].
    pub fn to_dense(&self) -> Result<Vec<f64>> {
        let m = self.m();
        if m > DENSE_LIMIT {
            return Err(Error::TooLargeForDense { m, limit: DENSE_LIMIT });
        }
        let p = self.p;
        let mut out = vec![0.0; m * m];
        for (bi, bj, b) in self.nonzero_blocks() {
            for (r, c, v) in b.nonzeros(p) {
                out[(bi * p + r) * m + bj * p + c] = v;
            }
        }
        Ok(out)
    }

    /// The diagonal of the expanded matrix.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.m()).map(|i| self.entry(i, i)).collect()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.nonzero_blocks()
            .flat_map(|(_, _, b)| b.nonzeros(self.p))
            .fold(0.0, |acc: f64, (_, _, v)| acc.max(v.abs()))
    }

    /// `M·v` computed blockwise.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let m = self.m();
        if v.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: v.len() });
        }
        let mut out = vec![0.0; m];
        self.matvec_add(v, &mut out);
        Ok(out)
    }

    /// `out += M·v`; lengths are the caller's responsibility.
    pub(crate) fn matvec_add(&self, v: &[f64], out: &mut [f64]) {
        let p = self.p;
        for (bi, bj, b) in self.nonzero_blocks() {
            b.apply_add(&v[bj * p..(bj + 1) * p], &mut out[bi * p..(bi + 1) * p], p);
        }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, b: f64, other: &StructuredMatrix) -> Result<StructuredMatrix> {
        self.check_shape(other)?;
        let p = self.p;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(x, y)| BlockKind::lincomb(a, x, b, y, p))
            .collect();
        Ok(StructuredMatrix { p, q: self.q, blocks })
    }

    pub fn add(&self, other: &StructuredMatrix) -> Result<StructuredMatrix> {
        self.combine(1.0, 1.0, other)
    }

    pub fn sub(&self, other: &StructuredMatrix) -> Result<StructuredMatrix> {
        self.combine(1.0, -1.0, other)
    }

    pub fn scale(&self, a: f64) -> StructuredMatrix {
        StructuredMatrix {
            p: self.p,
            q: self.q,
            blocks: self.blocks.iter().map(|b| b.scaled(a).normalized(self.p)).collect(),
        }
    }

    /// `M·diag(d)`: column c scaled by `d[c]`.
    pub fn scale_columns(&self, d: &[f64]) -> Result<StructuredMatrix> {
        let m = self.m();
        if d.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: d.len() });
        }
        let p = self.p;
        let q = self.q;
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let bj = k % q;
                b.scale_columns(&d[bj * p..(bj + 1) * p], p)
            })
            .collect();
        Ok(StructuredMatrix { p, q, blocks })
    }

    /// Largest |self − other| entry, compared block by block without global expansion.
    pub fn max_abs_diff(&self, other: &StructuredMatrix) -> Result<f64> {
        self.check_shape(other)?;
        let p = self.p;
        let mut worst: f64 = 0.0;
        for (x, y) in self.blocks.iter().zip(&other.blocks) {
            if x == y {
                continue;
            }
            for (u, v) in x.to_dense(p).iter().zip(y.to_dense(p)) {
                worst = worst.max((u - v).abs());
            }
        }
        Ok(worst)
    }

    /// Lower and upper scalar bandwidths of the nonzero pattern.
    pub fn bandwidths(&self) -> (usize, usize) {
        let p = self.p as isize;
        let mut kl: isize = 0;
        let mut ku: isize = 0;
        for (bi, bj, b) in self.nonzero_blocks() {
            if let Some((lo, hi)) = b.offset_range(self.p) {
                let base = (bi as isize - bj as isize) * p;
                kl = kl.max(base + hi);
                ku = ku.max(-(base + lo));
            }
        }
        (kl as usize, ku as usize)
    }

    fn check_shape(&self, other: &StructuredMatrix) -> Result<()> {
        if self.p != other.p || self.q != other.q {
            return Err(Error::ShapeMismatch {
                left_p: self.p,
                left_q: self.q,
                right_p: other.p,
                right_q: other.q,
            });
        }
        Ok(())
    }
}
