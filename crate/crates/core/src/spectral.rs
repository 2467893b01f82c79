//! Implicit spectral decomposition `B = P diag(Lambda_1, gamma I) P^T` of an
//! L-SR1 matrix, with `P_par = Psi R^{-1} U` never formed explicitly.

use nalgebra::{DMatrix, DVector};

use crate::compact::{symmetrize, LSR1Factors};
use crate::error::{check_dim, Result, TrsError};
use crate::linalg::{cholesky_upper, eig_tie, jacobi_eigh, tall_t_times, tall_t_times_with, tall_times_add};

/// Pivots of `R` below this multiple of `|Psi|_F` mean `Psi` lost rank.
pub const RANK_RTOL: f64 = 1e-10;

/// Below this fraction of `|g|^2` the norm identity for `|g_perp|^2` has
/// cancelled too many digits and `g - P_par g_par` is formed instead.
const PERP_CANCELLATION: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct SpectralData<'a> {
    factors: &'a LSR1Factors,
    r: DMatrix<f64>,
    u: DMatrix<f64>,
    lambda_hat: DVector<f64>,
    lambda1: DVector<f64>,
    lambda_min: f64,
    multiplicity: usize,
    r_inv_u: DMatrix<f64>,
}

/// Gradient expressed in the eigenbasis of `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedGradient {
    /// `P_par^T g`.
    pub g_par: DVector<f64>,
    /// `|P_perp^T g|`.
    pub g_perp_norm: f64,
    /// `(g_par, |g_perp|)`.
    pub a: DVector<f64>,
    /// `(Lambda_1, gamma)`, aligned with `a`.
    pub lambda_ext: DVector<f64>,
    pub g_norm: f64,
    /// `Psi^T g`, kept so later products with `g` need no further pass over `Psi`.
    pub psi_t_g: DVector<f64>,
}

impl<'a> SpectralData<'a> {
    pub fn new(factors: &'a LSR1Factors) -> Result<Self> {
        let m = factors.rank();
        let n = factors.dim();
        let gamma = factors.gamma();
        let psi_norm = factors.gram().trace().max(0.0).sqrt();
        let r = cholesky_upper(factors.gram(), RANK_RTOL * psi_norm)
            .map_err(|(index, value)| TrsError::RankDeficient { index, value })?;

        let rmr = symmetrize(&(&r * factors.middle() * r.transpose()));
        let (lambda_hat, u) = jacobi_eigh(&rmr)?;
        if let Some(bad) = lambda_hat.iter().find(|&&l| eig_tie(gamma + l, gamma)) {
            return Err(TrsError::InvalidFactors(format!(
                "R M R^T has an eigenvalue {bad:.3e} indistinguishable from zero"
            )));
        }
        let lambda1 = lambda_hat.add_scalar(gamma);
        let lambda_min = lambda1[0].min(gamma);
        let mut multiplicity = lambda1.iter().filter(|&&l| eig_tie(lambda_min, l)).count();
        if eig_tie(lambda_min, gamma) {
            multiplicity += n - m;
        }

        let r_inv_u = r
            .solve_upper_triangular(&u)
            .ok_or(TrsError::RankDeficient { index: 0, value: 0.0 })?;

        Ok(Self { factors, r, u, lambda_hat, lambda1, lambda_min, multiplicity, r_inv_u })
    }

    pub fn factors(&self) -> &'a LSR1Factors {
        self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.dim()
    }

    pub fn rank(&self) -> usize {
        self.factors.rank()
    }

    pub fn gamma(&self) -> f64 {
        self.factors.gamma()
    }

    /// Upper-triangular factor with `Psi^T Psi = R^T R`.
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Orthogonal eigenvectors of `R M R^T`.
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Eigenvalues of `R M R^T`, ascending.
    pub fn lambda_hat(&self) -> &DVector<f64> {
        &self.lambda_hat
    }

    /// `Lambda_hat + gamma`, ascending.
    pub fn lambda1(&self) -> &DVector<f64> {
        &self.lambda1
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// Algebraic multiplicity of `lambda_min` in the full spectrum.
    pub fn multiplicity(&self) -> usize {
        self.multiplicity
    }

    /// True when the leftmost eigenvalue belongs to `Lambda_1` rather than
    /// the `gamma` block.
    pub fn leftmost_in_update_space(&self) -> bool {
        self.lambda1[0] < self.gamma()
    }

    /// The full spectrum, ascending: `Lambda_1` merged with `n - m` copies of `gamma`.
    pub fn full_spectrum(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.lambda1.iter().copied().collect();
        all.extend(std::iter::repeat_n(self.gamma(), self.dim() - self.rank()));
        all.sort_by(f64::total_cmp);
        all
    }

    /// `P_par w = Psi (R^{-1} (U w))`.
    pub fn ppar_times(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.rank(), w.len())?;
        let mut out = DVector::zeros(self.dim());
        tall_times_add(self.factors.psi(), (&self.r_inv_u * w).as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// `P_par^T v = U^T R^{-T} Psi^T v`.
    pub fn ppar_t_times(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), v.len())?;
        Ok(self.r_inv_u.tr_mul(&tall_t_times(self.factors.psi(), v.as_slice())))
    }

    /// `P_par^T e_j`, the j-th row of `P_par`.
    pub(crate) fn ppar_row(&self, j: usize) -> DVector<f64> {
        let psi_row = self.factors.psi().row(j).transpose();
        self.r_inv_u.tr_mul(&psi_row)
    }

    pub fn project_gradient(&self, g: &DVector<f64>) -> Result<ProjectedGradient> {
        check_dim(self.dim(), g.len())?;
        let (psi_t_g, sq) = tall_t_times_with(self.factors.psi(), g.as_slice(), &[g.as_slice()]);
        let g_par = self.r_inv_u.tr_mul(&psi_t_g);
        let g_sq = sq[0];
        let g_norm = g_sq.sqrt();
        let perp_sq = g_sq - g_par.norm_squared();
        let g_perp_norm = if perp_sq > PERP_CANCELLATION * g_sq {
            perp_sq.sqrt()
        } else if g_sq == 0.0 {
            0.0
        } else {
            (g - self.ppar_times(&g_par)?).norm()
        };

        let m = self.rank();
        let mut a = DVector::zeros(m + 1);
        a.rows_mut(0, m).copy_from(&g_par);
        a[m] = g_perp_norm;
        let mut lambda_ext = DVector::zeros(m + 1);
        lambda_ext.rows_mut(0, m).copy_from(&self.lambda1);
        lambda_ext[m] = self.gamma();
        Ok(ProjectedGradient { g_par, g_perp_norm, a, lambda_ext, g_norm, psi_t_g })
    }
}
