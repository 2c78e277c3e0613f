//! Factorizations behind every left-hand inversion.
//!
//! [`factorize`] picks the cheapest applicable path from the block pattern:
//! elementwise division for diagonal matrices, a Thomas sweep for
//! block-diagonal matrices with (at most) tridiagonal blocks, and banded LU
//! with partial pivoting otherwise.

use super::matrix::StructuredMatrix;
use crate::error::{Error, Result};

/// Pivots at or below this fraction of the largest matrix entry count as zero.
pub const SINGULARITY_THRESHOLD: f64 = 1e-14;

/// Which solve kernel a factorization uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolvePath {
    Diagonal,
    BlockTridiagonal,
    Banded,
}

#[derive(Debug, Clone)]
enum Kernel {
    Diagonal {
        diag: Vec<f64>,
    },
    Thomas {
        sub: Vec<f64>,
        denom: Vec<f64>,
        sup_scaled: Vec<f64>,
    },
    Band(BandLu),
}

/// A factorized structured matrix, ready for repeated solves.
#[derive(Debug, Clone)]
pub struct BandFactorization {
    m: usize,
    kl: usize,
    ku: usize,
    kernel: Kernel,
}

impl BandFactorization {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn path(&self) -> SolvePath {
        match self.kernel {
            Kernel::Diagonal { .. } => SolvePath::Diagonal,
            Kernel::Thomas { .. } => SolvePath::BlockTridiagonal,
            Kernel::Band(_) => SolvePath::Banded,
        }
    }

    /// (lower, upper) bandwidth of the factorized matrix, in scalar rows.
    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    /// Row permutation applied by partial pivoting (identity for the fast paths).
    pub fn permutation(&self) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.m).collect();
        if let Kernel::Band(lu) = &self.kernel {
            for (k, &r) in lu.piv.iter().enumerate() {
                perm.swap(k, r);
            }
        }
        perm
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, found: rhs.len() });
        }
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    pub(crate) fn solve_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.m);
        match &self.kernel {
            Kernel::Diagonal { diag } => {
                for (xi, d) in x.iter_mut().zip(diag) {
                    *xi /= d;
                }
            }
            Kernel::Thomas { sub, denom, sup_scaled } => {
                let m = x.len();
                x[0] /= denom[0];
                for i in 1..m {
                    x[i] = (x[i] - sub[i] * x[i - 1]) / denom[i];
                }
                for i in (0..m - 1).rev() {
                    x[i] -= sup_scaled[i] * x[i + 1];
                }
            }
            Kernel::Band(lu) => lu.solve_in_place(x),
        }
    }
}

pub fn factorize(matrix: &StructuredMatrix) -> Result<BandFactorization> {
    let m = matrix.m();
    let (kl, ku) = matrix.bandwidths();
    let threshold = SINGULARITY_THRESHOLD * matrix.max_abs_entry();

    if matrix.is_diagonal() {
        let diag = matrix.diagonal();
        if let Some(row) = diag.iter().position(|d| d.abs() <= threshold) {
            return Err(Error::Singular { row });
        }
        return Ok(BandFactorization { m, kl, ku, kernel: Kernel::Diagonal { diag } });
    }

    if matrix.is_block_diagonal() && kl <= 1 && ku <= 1 {
        let diag = matrix.diagonal();
        let sub: Vec<f64> = (0..m).map(|i| if i > 0 { matrix.entry(i, i - 1) } else { 0.0 }).collect();
        let sup: Vec<f64> = (0..m).map(|i| if i + 1 < m { matrix.entry(i, i + 1) } else { 0.0 }).collect();
        let dominant = (0..m).all(|i| diag[i].abs() >= sub[i].abs() + sup[i].abs());
        if dominant {
            let mut denom = vec![0.0; m];
            let mut sup_scaled = vec![0.0; m];
            for i in 0..m {
                let d = if i == 0 { diag[0] } else { diag[i] - sub[i] * sup_scaled[i - 1] };
                if d.abs() <= threshold {
                    return Err(Error::Singular { row: i });
                }
                denom[i] = d;
                sup_scaled[i] = sup[i] / d;
            }
            return Ok(BandFactorization {
                m,
                kl,
                ku,
                kernel: Kernel::Thomas { sub, denom, sup_scaled },
            });
        }
    }

    let lu = BandLu::factor(matrix, kl, ku, threshold)?;
    Ok(BandFactorization { m, kl, ku, kernel: Kernel::Band(lu) })
}

/// Banded LU with partial pivoting.
///
/// Row i keeps columns `i - kl ..= i + kl + ku`; the extra `kl` columns hold
/// the fill-in that row interchanges push into U.
#[derive(Debug, Clone)]
struct BandLu {
    m: usize,
    kl: usize,
    ku: usize,
    width: usize,
    band: Vec<f64>,
    mult: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn factor(matrix: &StructuredMatrix, kl: usize, ku: usize, threshold: f64) -> Result<Self> {
        let m = matrix.m();
        let p = matrix.p();
        let width = 2 * kl + ku + 1;
        let mut lu = BandLu {
            m,
            kl,
            ku,
            width,
            band: vec![0.0; m * width],
            mult: vec![0.0; m * kl],
            piv: vec![0; m],
        };
        for (bi, bj, b) in matrix.nonzero_blocks() {
            for (r, c, v) in b.nonzeros(p) {
                let k = lu.idx(bi * p + r, bj * p + c);
                lu.band[k] = v;
            }
        }

        for k in 0..m {
            let last = (k + kl).min(m - 1);
            let right = (k + kl + ku).min(m - 1);
            let mut r = k;
            let mut best = lu.band[lu.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = lu.band[lu.idx(i, k)].abs();
                if v > best {
                    best = v;
                    r = i;
                }
            }
            if best <= threshold {
                return Err(Error::Singular { row: k });
            }
            lu.piv[k] = r;
            if r != k {
                for j in k..=right {
                    let (a, b) = (lu.idx(k, j), lu.idx(r, j));
                    lu.band.swap(a, b);
                }
            }
            let pivot = lu.band[lu.idx(k, k)];
            for i in k + 1..=last {
                let ik = lu.idx(i, k);
                let l = lu.band[ik] / pivot;
                lu.mult[k * kl + (i - k - 1)] = l;
                lu.band[ik] = 0.0;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=right {
                    let kj = lu.band[lu.idx(k, j)];
                    let ij = lu.idx(i, j);
                    lu.band[ij] -= l * kj;
                }
            }
        }
        Ok(lu)
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let m = self.m;
        for k in 0..m {
            let r = self.piv[k];
            if r != k {
                x.swap(k, r);
            }
            let last = (k + self.kl).min(m - 1);
            let xk = x[k];
            for i in k + 1..=last {
                x[i] -= self.mult[k * self.kl + (i - k - 1)] * xk;
            }
        }
        for k in (0..m).rev() {
            let right = (k + self.kl + self.ku).min(m - 1);
            let mut s = x[k];
            for j in k + 1..=right {
                s -= self.band[self.idx(k, j)] * x[j];
            }
            x[k] = s / self.band[self.idx(k, k)];
        }
    }
}
