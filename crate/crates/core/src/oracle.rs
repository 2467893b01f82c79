//! Dense reference solver for small problems.
//!
//! Assembles `B` explicitly, diagonalizes it with a general symmetric
//! eigensolver and locates the multiplier by bisection on the dense secular
//! equation. It shares no code path with [`crate::solver`] beyond the
//! compact factors themselves.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::compact::LSR1Factors;
use crate::error::{check_dim, Result, TrsError};
use crate::solver::{CaseTag, HardCaseStep, TrsSolution};

pub const DEFAULT_CEILING: usize = 200;

const MAX_EXPANSIONS: usize = 200;

/// Relative tolerance (against the spectral radius) for grouping eigenvalues.
const CLUSTER_RTOL: f64 = 1e-9;

/// Gradient weight on the leftmost eigenspace below this fraction of `|g|`
/// counts as orthogonal.
const NULL_WEIGHT_RTOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct DenseProblem {
    pub b: DMatrix<f64>,
    pub g: DVector<f64>,
    pub delta: f64,
}

impl DenseProblem {
    pub fn new(b: DMatrix<f64>, g: DVector<f64>, delta: f64) -> Result<Self> {
        let n = b.nrows();
        check_dim(n, b.ncols())?;
        check_dim(n, g.len())?;
        let asym = (&b - b.transpose()).norm();
        if asym > 1e-12 * b.norm().max(1.0) {
            return Err(TrsError::InvalidFactors(format!("B is not symmetric (|B - B^T| = {asym:.3e})")));
        }
        if !(delta > 0.0) {
            return Err(TrsError::InvalidFactors(format!("trust-region radius must be positive, got {delta}")));
        }
        Ok(Self { b, g, delta })
    }

    pub fn from_factors(factors: &LSR1Factors, g: &DVector<f64>, delta: f64) -> Result<Self> {
        Self::new(assemble_dense(factors)?, g.clone(), delta)
    }

    /// `g^T p + 1/2 p^T B p` with the dense `B`.
    pub fn model_value(&self, p: &DVector<f64>) -> f64 {
        self.g.dot(p) + 0.5 * p.dot(&(&self.b * p))
    }
}

/// `gamma I + Psi M Psi^T`, symmetrized, for `n <= DEFAULT_CEILING`.
pub fn assemble_dense(factors: &LSR1Factors) -> Result<DMatrix<f64>> {
    assemble_dense_with_ceiling(factors, DEFAULT_CEILING)
}

pub fn assemble_dense_with_ceiling(factors: &LSR1Factors, ceiling: usize) -> Result<DMatrix<f64>> {
    let n = factors.dim();
    if n > ceiling {
        return Err(TrsError::OracleTooLarge { n, ceiling });
    }
    let psi = factors.psi();
    let mut b = psi * factors.middle() * psi.transpose();
    for i in 0..n {
        b[(i, i)] += factors.gamma();
    }
    Ok((&b + b.transpose()) * 0.5)
}

pub fn dense_solve(prob: &DenseProblem) -> Result<TrsSolution> {
    let n = prob.b.nrows();
    let eig = SymmetricEigen::new(prob.b.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lambda: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let q = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    let coef: Vec<f64> = q.tr_mul(&prob.g).iter().copied().collect();
    let g_norm = prob.g.norm();
    let delta = prob.delta;

    let scale = lambda.iter().fold(1.0_f64, |acc, l| acc.max(l.abs()));
    let cluster_tol = CLUSTER_RTOL * scale;
    let raw_min = lambda[0];
    let lambda_min = if raw_min.abs() <= cluster_tol { 0.0 } else { raw_min };
    let cluster: Vec<bool> = lambda.iter().map(|l| (l - raw_min).abs() <= cluster_tol).collect();
    let null_weight = coef
        .iter()
        .zip(&cluster)
        .filter(|(_, &c)| c)
        .map(|(c, _)| c * c)
        .sum::<f64>()
        .sqrt();
    let orthogonal = null_weight <= NULL_WEIGHT_RTOL * g_norm;

    // p(sigma) = -Q (Lambda + sigma)^{-1} Q^T g, optionally skipping the leftmost cluster.
    let step = |sigma: f64, skip_cluster: bool| -> DVector<f64> {
        let w = DVector::from_iterator(
            n,
            (0..n).map(|i| if skip_cluster && cluster[i] { 0.0 } else { -coef[i] / (lambda[i] + sigma) }),
        );
        &q * w
    };
    let step_norm = |sigma: f64, skip_cluster: bool| -> f64 {
        (0..n)
            .filter(|&i| !(skip_cluster && cluster[i]))
            .map(|i| (coef[i] / (lambda[i] + sigma)).powi(2))
            .sum::<f64>()
            .sqrt()
    };

    let finish = |p: DVector<f64>, sigma: f64, case: CaseTag, hard_case: Option<HardCaseStep>| TrsSolution {
        p_star: p,
        sigma_star: sigma,
        case,
        hard_case,
        newton: None,
    };

    if lambda_min > 0.0 && step_norm(0.0, false) <= delta {
        return Ok(finish(step(0.0, false), 0.0, CaseTag::Interior, None));
    }

    let sigma_lo = (-lambda_min).max(0.0);
    if orthogonal && lambda_min <= 0.0 {
        let p_hat_norm = step_norm(sigma_lo, true);
        if p_hat_norm <= delta {
            let p_hat = step(sigma_lo, true);
            if lambda_min == 0.0 {
                return Ok(finish(p_hat, 0.0, CaseTag::BoundaryPseudoinverse, None));
            }
            let u_min = q.column(0).into_owned();
            let alpha = (delta * delta - p_hat_norm * p_hat_norm).max(0.0).sqrt();
            let p = &p_hat + &u_min * alpha;
            return Ok(finish(p, sigma_lo, CaseTag::HardCase, Some(HardCaseStep { p_hat, alpha, u_min })));
        }
    }

    // Bracket the root of |p(sigma)| = delta on (sigma_lo, hi].
    let skip = orthogonal;
    let mut lo = sigma_lo;
    let mut hi = sigma_lo + (g_norm / delta).max(1.0);
    let mut expansions = 0;
    while step_norm(hi, skip) > delta {
        lo = hi;
        hi = sigma_lo + 2.0 * (hi - sigma_lo);
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return Err(TrsError::BracketFailure(MAX_EXPANSIONS));
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if step_norm(mid, skip) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sigma = 0.5 * (lo + hi);
    Ok(finish(step(sigma, skip), sigma, CaseTag::BoundaryNewton, None))
}

/// Eigenvalues of the dense matrix, ascending.
pub fn dense_spectrum(b: &DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = b.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}
