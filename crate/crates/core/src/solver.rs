//! Orthonormal-basis solver for the trust-region subproblem
//!
//! ```text
//! minimize  Q(p) = g^T p + 1/2 p^T B p   subject to |p| <= delta
//! ```
//!
//! with `B` an L-SR1 matrix in compact form. The solver dispatches among
//! the interior, boundary and hard cases from the implicit eigenvalues of
//! `B`, finds the multiplier with a monotone Newton iteration when needed,
//! and forms the step by the Sherman-Morrison-Woodbury formula or the
//! pseudoinverse formula.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::compact::LSR1Factors;
use crate::error::{check_dim, Result, TrsError};
use crate::linalg::{dot, eig_tie, tall_affine, tall_t_times, tall_t_times_with};
use crate::secular::{NewtonOutcome, SecularCoefficients, DEFAULT_MAX_ITER, DEFAULT_TAU};
use crate::spectral::{ProjectedGradient, SpectralData};

/// `phi_bar(-lambda_min)` at or above this value selects the pseudoinverse
/// branch instead of Newton.
pub const HARD_CASE_THRESHOLD: f64 = -1e-10;

/// Minimum admissible `tau* = gamma + sigma*` on the SMW path.
const SMW_TAU_MARGIN: f64 = 1e-12;

/// Column-canonical vectors with a shorter projection onto `Range(P_perp)`
/// are passed over when building a `gamma` eigenvector.
const PERP_CANDIDATE_MIN: f64 = 1e-8;

const ORTHOGONALITY_RTOL: f64 = 1e-8;

/// An SMW step whose norm differs from the secular prediction `|p(sigma)|`
/// by more than this relative amount gets one step of iterative refinement.
const REFINE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseTag {
    Interior,
    BoundaryNewton,
    BoundaryPseudoinverse,
    HardCase,
}

impl CaseTag {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseTag::Interior => "interior",
            CaseTag::BoundaryNewton => "boundary_newton",
            CaseTag::BoundaryPseudoinverse => "boundary_pseudoinverse",
            CaseTag::HardCase => "hard_case",
        }
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Eigenvector correction of a hard-case solution, `p* = p_hat + alpha u_min`.
#[derive(Debug, Clone)]
pub struct HardCaseStep {
    pub p_hat: DVector<f64>,
    pub alpha: f64,
    pub u_min: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct TrsSolution {
    pub p_star: DVector<f64>,
    pub sigma_star: f64,
    pub case: CaseTag,
    pub hard_case: Option<HardCaseStep>,
    pub newton: Option<NewtonOutcome>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Newton stops once `|phi_bar(sigma)| <= tau`.
    pub tau: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU, max_iter: DEFAULT_MAX_ITER }
    }
}

/// Residuals of the global optimality conditions
/// `(B + sigma I) p = -g`, `sigma (delta - |p|) = 0`, `B + sigma I >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalityReport {
    pub opt1_abs: f64,
    pub opt1_rel: f64,
    pub opt2: f64,
    pub phi_abs: f64,
    pub psd_margin: f64,
}

pub fn solve(factors: &LSR1Factors, g: &DVector<f64>, delta: f64) -> Result<TrsSolution> {
    solve_with(factors, g, delta, &SolverOptions::default())
}

pub fn solve_with(
    factors: &LSR1Factors,
    g: &DVector<f64>,
    delta: f64,
    opts: &SolverOptions,
) -> Result<TrsSolution> {
    check_dim(factors.dim(), g.len())?;
    let spec = SpectralData::new(factors)?;
    let pg = spec.project_gradient(g)?;
    let secular = SecularCoefficients::from_projection(&pg, delta)?;
    let lambda_min = snapped_lambda_min(&spec);

    let (p_star, sigma_star, case, hard_case, newton) = if lambda_min > 0.0 && secular.phi_bar(0.0) >= 0.0 {
        let p = smw_with_rhs(factors, g, pg.psi_t_g.clone(), factors.gamma())?;
        (p, 0.0, CaseTag::Interior, None, None)
    } else if lambda_min <= 0.0 && secular.phi_bar(-lambda_min) >= HARD_CASE_THRESHOLD {
        let sigma = -lambda_min;
        let p_hat = solve_pseudoinverse(&spec, &pg, g, sigma)?;
        if lambda_min < 0.0 {
            let u_min = leftmost_eigenvector(&spec)?;
            let (z, alpha) = hard_case_step(&p_hat, &u_min, delta)?;
            let p = &p_hat + z;
            (p, sigma, CaseTag::HardCase, Some(HardCaseStep { p_hat, alpha, u_min }), None)
        } else {
            (p_hat, sigma, CaseTag::BoundaryPseudoinverse, None, None)
        }
    } else {
        let outcome = secular.newton_solve(secular.initial_sigma(), opts.tau, opts.max_iter)?;
        let sigma = outcome.sigma;
        if sigma < (-lambda_min).max(0.0) {
            return Err(TrsError::Inconsistent(format!(
                "Newton root {sigma} lies left of max(0, -lambda_min) = {}",
                (-lambda_min).max(0.0)
            )));
        }
        let tau_star = factors.gamma() + sigma;
        if tau_star <= SMW_TAU_MARGIN {
            return Err(TrsError::Inconsistent(format!("tau* = {tau_star} is not positive")));
        }
        let mut p = smw_with_rhs(factors, g, pg.psi_t_g.clone(), tau_star)?;
        let predicted = secular.step_norm_sq(sigma).sqrt();
        if (dot(p.as_slice(), p.as_slice()).sqrt() - predicted).abs() > REFINE_RTOL * predicted {
            let residual = factors.apply_unchecked(&p) + &p * sigma + g;
            p += solve_smw(factors, &residual, tau_star)?;
        }
        (p, sigma, CaseTag::BoundaryNewton, None, Some(outcome))
    };

    Ok(TrsSolution { p_star, sigma_star, case, hard_case, newton })
}

/// `lambda_min`, with values inside the eigenvalue tie tolerance of zero set
/// to exactly zero so a numerically singular PSD matrix is recognized.
fn snapped_lambda_min(spec: &SpectralData) -> f64 {
    let lambda_min = spec.lambda_min();
    if eig_tie(0.0, lambda_min) {
        0.0
    } else {
        lambda_min
    }
}

/// `Q(p) = g^T p + 1/2 p^T B p`.
pub fn model_value(factors: &LSR1Factors, g: &DVector<f64>, p: &DVector<f64>) -> f64 {
    let (w, dots) = tall_t_times_with(factors.psi(), p.as_slice(), &[g.as_slice(), p.as_slice()]);
    let curvature = factors.gamma() * dots[1] + w.dot(&(factors.middle() * &w));
    dots[0] + 0.5 * curvature
}

/// `(B + sigma I)^{-1} g` negated, by Sherman-Morrison-Woodbury with
/// `tau = gamma + sigma`:
/// `p = -(1/tau) [I - Psi (tau M^{-1} + Psi^T Psi)^{-1} Psi^T] g`.
pub fn solve_smw(factors: &LSR1Factors, g: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    check_dim(factors.dim(), g.len())?;
    smw_with_rhs(factors, g, tall_t_times(factors.psi(), g.as_slice()), tau)
}

/// [`solve_smw`] given `Psi^T g`.
fn smw_with_rhs(factors: &LSR1Factors, g: &DVector<f64>, rhs: DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    if tau == 0.0 {
        return Err(TrsError::SmwBreakdown { tau });
    }
    let small: DMatrix<f64> = factors.middle_inv() * tau + factors.gram();
    let lu = small.lu();
    let x = lu.solve(&rhs).ok_or(TrsError::SmwBreakdown { tau })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(TrsError::SmwBreakdown { tau });
    }
    Ok(tall_affine(factors.psi(), x.as_slice(), g.as_slice(), 1.0 / tau))
}

/// `-(B + sigma I)^+ g` from the implicit eigendecomposition.
///
/// Eigenvalues within the tie tolerance of `-sigma` are dropped by the
/// pseudoinverse; when `gamma + sigma` is one of them the `P_perp` term
/// vanishes. The discarded components of `g` should be zero in the cases
/// that call this; their size is logged.
pub fn solve_pseudoinverse(
    spec: &SpectralData,
    pg: &ProjectedGradient,
    g: &DVector<f64>,
    sigma: f64,
) -> Result<DVector<f64>> {
    check_dim(spec.dim(), g.len())?;
    check_dim(spec.rank(), pg.g_par.len())?;
    let mut discarded_sq = 0.0;
    let mut coeff = DVector::zeros(spec.rank());
    for (i, (&lambda, &gp)) in spec.lambda1().iter().zip(pg.g_par.iter()).enumerate() {
        let shifted = lambda + sigma;
        if eig_tie(lambda, -sigma) {
            discarded_sq += gp * gp;
        } else {
            coeff[i] = gp / shifted;
        }
    }

    let gamma = spec.gamma();
    let p = if eig_tie(gamma, -sigma) {
        discarded_sq += pg.g_perp_norm * pg.g_perp_norm;
        -spec.ppar_times(&coeff)?
    } else {
        // -P_par c - (g - P_par g_par)/(gamma + sigma), with one product by Psi.
        let shift = gamma + sigma;
        let combined = coeff - &pg.g_par / shift;
        -(spec.ppar_times(&combined)? + g / shift)
    };
    if discarded_sq > 0.0 {
        log::debug!(
            "pseudoinverse discarded |g| component {:.3e} (|g| = {:.3e})",
            discarded_sq.sqrt(),
            pg.g_norm
        );
    }
    Ok(p)
}

/// A unit eigenvector for `lambda_min`.
///
/// The first column of `P_par` when the leftmost eigenvalue lies in
/// `Lambda_1`; otherwise the projection of the first canonical vector
/// `e_j` that has a nonzero component outside `Range(P_par)`.
pub fn leftmost_eigenvector(spec: &SpectralData) -> Result<DVector<f64>> {
    let n = spec.dim();
    let m = spec.rank();
    if spec.leftmost_in_update_space() {
        let mut e1 = DVector::zeros(m);
        e1[0] = 1.0;
        return Ok(spec.ppar_times(&e1)?.normalize());
    }
    for j in 0..(m + 2).min(n) {
        let coeff = spec.ppar_row(j);
        let mut w = -spec.ppar_times(&coeff)?;
        w[j] += 1.0;
        let norm = w.norm();
        if norm > PERP_CANDIDATE_MIN {
            return Ok(w / norm);
        }
    }
    Err(TrsError::NoLeftmostEigenvector)
}

/// `z* = alpha u_min` with `alpha = sqrt(delta^2 - |p_hat|^2)` taken positive.
pub fn hard_case_step(p_hat: &DVector<f64>, u_min: &DVector<f64>, delta: f64) -> Result<(DVector<f64>, f64)> {
    check_dim(p_hat.len(), u_min.len())?;
    let p_norm = p_hat.norm();
    let dot = p_hat.dot(u_min).abs();
    let bound = ORTHOGONALITY_RTOL * p_norm;
    if dot > bound {
        return Err(TrsError::HardCaseOrthogonality { dot, bound });
    }
    let alpha = (delta * delta - p_norm * p_norm).max(0.0).sqrt();
    Ok((u_min * alpha, alpha))
}

/// Optimality residuals of `(sigma, p)` for the problem `(factors, g, delta)`.
///
/// Only uses products with `B` and the eigenvalues of `B`, so it applies to
/// any candidate solution regardless of how it was produced.
pub fn check_optimality(
    factors: &LSR1Factors,
    p: &DVector<f64>,
    sigma: f64,
    g: &DVector<f64>,
    delta: f64,
) -> Result<OptimalityReport> {
    check_dim(factors.dim(), p.len())?;
    check_dim(factors.dim(), g.len())?;
    let residual = factors.apply_unchecked(p) + p * sigma + g;
    let opt1_abs = residual.norm();
    let g_norm = g.norm();
    let opt1_rel = if g_norm > 0.0 { opt1_abs / g_norm } else { opt1_abs };
    let opt2 = sigma * (p.norm() - delta).abs();

    let spec = SpectralData::new(factors)?;
    let pg = spec.project_gradient(g)?;
    let secular = SecularCoefficients::from_projection(&pg, delta)?;
    let phi_abs = secular.phi_bar(sigma).abs();
    let psd_margin = spec.lambda_min() + sigma;
    Ok(OptimalityReport { opt1_abs, opt1_rel, opt2, phi_abs, psd_margin })
}

impl TrsSolution {
    pub fn optimality(&self, factors: &LSR1Factors, g: &DVector<f64>, delta: f64) -> Result<OptimalityReport> {
        check_optimality(factors, &self.p_star, self.sigma_star, g, delta)
    }

    /// `Q(p*) = g^T p* + 1/2 p*^T B p*`.
    pub fn model_value(&self, factors: &LSR1Factors, g: &DVector<f64>) -> f64 {
        model_value(factors, g, &self.p_star)
    }

    pub fn alpha(&self) -> Option<f64> {
        self.hard_case.as_ref().map(|h| h.alpha)
    }
}
