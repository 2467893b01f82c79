//! Exact solutions of the two-norm trust-region subproblem
//!
//! ```text
//! minimize  g^T p + 1/2 p^T B p   subject to |p|_2 <= delta
//! ```
//!
//! when `B = gamma I + Psi M Psi^T` is a limited-memory SR1 matrix. The
//! eigenvalues of `B` are obtained from a thin factorization of `Psi` and an
//! `m x m` eigenproblem, which makes every case (positive definite,
//! singular, indefinite and the hard case) solvable by formula plus a
//! scalar Newton iteration. Cost is `O(n m^2)` per solve.
//!
//! ```
//! use nalgebra::{dvector, DMatrix};
//! use obs_trs::{solve, LSR1Factors};
//!
//! // B = diag(2, 1, 1)
//! let psi = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
//! let factors = LSR1Factors::from_middle(1.0, psi, DMatrix::identity(1, 1)).unwrap();
//! let sol = solve(&factors, &dvector![1.0, 1.0, 0.0], 2.0).unwrap();
//! assert_eq!(sol.sigma_star, 0.0);
//! assert!((sol.p_star - dvector![-0.5, -1.0, 0.0]).norm() < 1e-15);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compact;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod oracle;
pub mod secular;
pub mod snapshot;
pub mod solver;
pub mod spectral;

pub use compact::{LSR1Factors, PairStore};
pub use error::{Result, TrsError};
pub use experiment::{ExperimentReport, ExperimentSpec, Family, Instance};
pub use secular::{NewtonOutcome, SecularCoefficients};
pub use snapshot::Snapshot;
pub use solver::{check_optimality, solve, solve_with, CaseTag, OptimalityReport, SolverOptions, TrsSolution};
pub use spectral::{ProjectedGradient, SpectralData};

pub use nalgebra::{DMatrix, DVector};
