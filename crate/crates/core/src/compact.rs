//! Limited-memory SR1 pair storage and the compact representation
//! `B = gamma * I + Psi * M * Psi^T`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result, TrsError};
use crate::linalg::{jacobi_eigh, tall_t_times, tall_times_add};

/// Relative threshold of the SR1 skip test `|(y - Bs)^T s| > eps * |s| |y - Bs|`.
pub const SKIP_TOLERANCE: f64 = 1e-8;

/// Largest condition number accepted for the middle matrix.
pub const MAX_MIDDLE_CONDITION: f64 = 1e12;

/// FIFO store of the most recent accepted `(s, y)` pairs.
#[derive(Debug, Clone)]
pub struct PairStore {
    n: usize,
    capacity: usize,
    pairs: VecDeque<(DVector<f64>, DVector<f64>)>,
}

impl PairStore {
    pub fn new(n: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 || capacity > n {
            return Err(TrsError::InvalidFactors(format!(
                "pair capacity must lie in 1..={n}, got {capacity}"
            )));
        }
        Ok(Self { n, capacity, pairs: VecDeque::with_capacity(capacity) })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Appends `(s, y)` if the SR1 denominator is safely nonzero.
    ///
    /// `apply_b` evaluates the product with the current approximation. The
    /// oldest pair is evicted when the store is full. Returns whether the
    /// pair was accepted.
    pub fn try_insert_pair<F>(&mut self, s: DVector<f64>, y: DVector<f64>, apply_b: F) -> Result<bool>
    where
        F: Fn(&DVector<f64>) -> DVector<f64>,
    {
        check_dim(self.n, s.len())?;
        check_dim(self.n, y.len())?;
        let bs = apply_b(&s);
        check_dim(self.n, bs.len())?;
        let r = &y - bs;
        let denom = r.dot(&s);
        if !(denom.abs() > SKIP_TOLERANCE * s.norm() * r.norm()) {
            return Ok(false);
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y));
        Ok(true)
    }

    /// Step matrix `S`, oldest pair first.
    pub fn steps(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.pairs.iter().map(|(s, _)| s.clone()).collect::<Vec<_>>())
    }

    /// Gradient-difference matrix `Y`, oldest pair first.
    pub fn grad_diffs(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.pairs.iter().map(|(_, y)| y.clone()).collect::<Vec<_>>())
    }

    pub fn build_factors(&self, gamma: f64) -> Result<LSR1Factors> {
        if self.is_empty() {
            return Err(TrsError::InvalidFactors("no stored pairs".into()));
        }
        LSR1Factors::from_pairs(gamma, &self.steps(), &self.grad_diffs())
    }
}

/// Immutable compact factors of an L-SR1 matrix.
#[derive(Debug, Clone)]
pub struct LSR1Factors {
    gamma: f64,
    psi: DMatrix<f64>,
    middle: DMatrix<f64>,
    middle_inv: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl LSR1Factors {
    /// Builds `Psi = Y - gamma S` and `M^{-1} = D + L + L^T - gamma S^T S`.
    pub fn from_pairs(gamma: f64, s: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        check_gamma(gamma)?;
        if s.shape() != y.shape() {
            return Err(TrsError::InvalidFactors(format!(
                "S is {:?} but Y is {:?}",
                s.shape(),
                y.shape()
            )));
        }
        let m = s.ncols();
        if m == 0 {
            return Err(TrsError::InvalidFactors("no stored pairs".into()));
        }
        let sty = s.tr_mul(y);
        let sts = s.tr_mul(s);
        let mut middle_inv = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                // D + L + L^T: lower triangle of S^T Y mirrored upward.
                let lower = if i >= j { sty[(i, j)] } else { sty[(j, i)] };
                middle_inv[(i, j)] = lower - gamma * sts[(i, j)];
            }
        }
        let psi = y - s * gamma;
        let middle = invert_symmetric(&middle_inv)?;
        Ok(Self::assemble(gamma, psi, middle, middle_inv))
    }

    /// Builds factors from an explicit `Psi` and middle matrix `M`.
    pub fn from_middle(gamma: f64, psi: DMatrix<f64>, middle: DMatrix<f64>) -> Result<Self> {
        check_gamma(gamma)?;
        let m = psi.ncols();
        if m == 0 || middle.shape() != (m, m) {
            return Err(TrsError::InvalidFactors(format!(
                "middle matrix must be {m}x{m}, got {:?}",
                middle.shape()
            )));
        }
        let middle = symmetrize(&middle);
        let middle_inv = invert_symmetric(&middle)?;
        Ok(Self::assemble(gamma, psi, middle, middle_inv))
    }

    fn assemble(gamma: f64, psi: DMatrix<f64>, middle: DMatrix<f64>, middle_inv: DMatrix<f64>) -> Self {
        let gram = symmetrize(&psi.tr_mul(&psi));
        Self { gamma, psi, middle, middle_inv, gram }
    }

    pub fn dim(&self) -> usize {
        self.psi.nrows()
    }

    pub fn rank(&self) -> usize {
        self.psi.ncols()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn middle(&self) -> &DMatrix<f64> {
        &self.middle
    }

    pub fn middle_inv(&self) -> &DMatrix<f64> {
        &self.middle_inv
    }

    /// `Psi^T Psi`, cached at construction.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `B v = gamma v + Psi (M (Psi^T v))`.
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), v.len())?;
        Ok(self.apply_unchecked(v))
    }

    pub(crate) fn apply_unchecked(&self, v: &DVector<f64>) -> DVector<f64> {
        let coeff = &self.middle * tall_t_times(&self.psi, v.as_slice());
        let mut out = v * self.gamma;
        tall_times_add(&self.psi, coeff.as_slice(), out.as_mut_slice());
        out
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma == 0.0 || !gamma.is_finite() {
        return Err(TrsError::InvalidFactors(format!("gamma must be finite and nonzero, got {gamma}")));
    }
    Ok(())
}

pub(crate) fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Inverse of a small symmetric matrix via its eigendecomposition, rejecting
/// matrices whose condition number exceeds [`MAX_MIDDLE_CONDITION`].
fn invert_symmetric(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, vecs) = jacobi_eigh(a)?;
    let largest = vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let smallest = vals.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if !(smallest > 0.0) || largest / smallest > MAX_MIDDLE_CONDITION || !largest.is_finite() {
        return Err(TrsError::IllDefinedCompact { condition: largest / smallest });
    }
    let inv_vals = vals.map(|v| 1.0 / v);
    Ok(symmetrize(&(&vecs * DMatrix::from_diagonal(&inv_vals) * vecs.transpose())))
}
