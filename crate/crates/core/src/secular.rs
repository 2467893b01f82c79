//! The secular function `phi(sigma) = 1/|p(sigma)| - 1/delta`, its continuous
//! extension across poles, and the monotone Newton iteration for its root.

use crate::error::{Result, TracePoint, TrsError};
use crate::linalg::eig_tie;
use crate::spectral::ProjectedGradient;

/// Aggregated weights at or below this multiple of `|g|` are treated as zero.
pub const WEIGHT_DROP_RTOL: f64 = 1e-10;

pub const DEFAULT_TAU: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100;

/// `|p(sigma)|^2 = sum_i a_bar_i^2 / (lambda_bar_i + sigma)^2` over distinct
/// eigenvalues with nonzero weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SecularCoefficients {
    lambda_bar: Vec<f64>,
    a_bar: Vec<f64>,
    delta: f64,
    raw_a: Vec<f64>,
    raw_lambda: Vec<f64>,
}

impl SecularCoefficients {
    /// Groups tied eigenvalues, aggregates their weights in the two-norm and
    /// drops groups whose weight is negligible relative to `|a|`.
    pub fn new(raw_a: &[f64], raw_lambda: &[f64], delta: f64) -> Result<Self> {
        if raw_a.len() != raw_lambda.len() {
            return Err(TrsError::DimensionMismatch { expected: raw_lambda.len(), found: raw_a.len() });
        }
        if !(delta > 0.0) {
            return Err(TrsError::InvalidFactors(format!("trust-region radius must be positive, got {delta}")));
        }
        let g_norm = raw_a.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut order: Vec<usize> = (0..raw_a.len()).collect();
        order.sort_by(|&i, &j| raw_lambda[i].total_cmp(&raw_lambda[j]));

        let mut lambda_bar = Vec::new();
        let mut a_bar = Vec::new();
        let mut k = 0;
        while k < order.len() {
            let anchor = raw_lambda[order[k]];
            let mut weight_sq = 0.0;
            let mut end = k;
            while end < order.len() && eig_tie(anchor, raw_lambda[order[end]]) {
                weight_sq += raw_a[order[end]].powi(2);
                end += 1;
            }
            let weight = weight_sq.sqrt();
            if weight > WEIGHT_DROP_RTOL * g_norm {
                lambda_bar.push(anchor);
                a_bar.push(weight);
            }
            k = end;
        }
        Ok(Self {
            lambda_bar,
            a_bar,
            delta,
            raw_a: raw_a.to_vec(),
            raw_lambda: raw_lambda.to_vec(),
        })
    }

    pub fn from_projection(pg: &ProjectedGradient, delta: f64) -> Result<Self> {
        Self::new(pg.a.as_slice(), pg.lambda_ext.as_slice(), delta)
    }

    pub fn lambda_bar(&self) -> &[f64] {
        &self.lambda_bar
    }

    pub fn a_bar(&self) -> &[f64] {
        &self.a_bar
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn raw_a(&self) -> &[f64] {
        &self.raw_a
    }

    pub fn raw_lambda(&self) -> &[f64] {
        &self.raw_lambda
    }

    /// Number of distinct poles.
    pub fn len(&self) -> usize {
        self.lambda_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda_bar.is_empty()
    }

    fn at_pole(&self, sigma: f64) -> bool {
        self.lambda_bar.iter().any(|&l| eig_tie(l, -sigma))
    }

    /// `|p(sigma)|^2`; infinite at a pole.
    pub fn step_norm_sq(&self, sigma: f64) -> f64 {
        if self.at_pole(sigma) {
            return f64::INFINITY;
        }
        self.lambda_bar
            .iter()
            .zip(&self.a_bar)
            .map(|(&l, &a)| (a / (l + sigma)).powi(2))
            .sum()
    }

    /// Continuous extension of the secular function.
    ///
    /// Equals `-1/delta` at every pole. With no terms (`g = 0`) the step is
    /// identically zero and `+inf` is returned.
    pub fn phi_bar(&self, sigma: f64) -> f64 {
        if self.at_pole(sigma) {
            return -1.0 / self.delta;
        }
        let norm_sq = self.step_norm_sq(sigma);
        if norm_sq == 0.0 {
            return f64::INFINITY;
        }
        1.0 / norm_sq.sqrt() - 1.0 / self.delta
    }

    pub fn phi_bar_prime(&self, sigma: f64) -> Result<f64> {
        if self.is_empty() {
            return Err(TrsError::EmptySecular);
        }
        if self.at_pole(sigma) {
            return Err(TrsError::DerivativeAtPole { sigma });
        }
        let (mut s2, mut s3) = (0.0, 0.0);
        for (&l, &a) in self.lambda_bar.iter().zip(&self.a_bar) {
            let t = a / (l + sigma);
            s2 += t * t;
            s3 += t * t / (l + sigma);
        }
        Ok(s3 / (s2 * s2.sqrt()))
    }

    /// Safe Newton start `max(0, max_i |a_i|/delta - lambda_i)` over the
    /// unaggregated coefficients.
    pub fn initial_sigma(&self) -> f64 {
        initial_sigma(&self.raw_a, &self.raw_lambda, self.delta)
    }

    /// Newton's method on `phi_bar` from `sigma0` until `|phi_bar| <= tau`.
    ///
    /// The iterates must be non-decreasing; a decrease means the start was
    /// to the right of the root.
    pub fn newton_solve(&self, sigma0: f64, tau: f64, max_iter: usize) -> Result<NewtonOutcome> {
        let mut sigma = sigma0;
        let mut phi = self.phi_bar(sigma);
        let mut trace = vec![(sigma, phi)];
        let mut iterations = 0;
        while phi.abs() > tau {
            if iterations == max_iter {
                return Err(TrsError::NewtonMaxIter { max_iter, trace });
            }
            let slope = match self.phi_bar_prime(sigma) {
                Ok(s) => s,
                Err(e) => {
                    log::debug!("newton trace before failure: {trace:?}");
                    return Err(e);
                }
            };
            let next = sigma - phi / slope;
            if next < sigma - 10.0 * f64::EPSILON * sigma.abs().max(1.0) || !next.is_finite() {
                return Err(TrsError::MonotonicityViolated { from: sigma, to: next, trace });
            }
            sigma = next.max(sigma);
            phi = self.phi_bar(sigma);
            trace.push((sigma, phi));
            iterations += 1;
        }
        Ok(NewtonOutcome { sigma, iterations, trace })
    }
}

/// `max(0, max_i |a_i|/delta - lambda_i)`.
pub fn initial_sigma(raw_a: &[f64], raw_lambda: &[f64], delta: f64) -> f64 {
    raw_a
        .iter()
        .zip(raw_lambda)
        .map(|(a, l)| a.abs() / delta - l)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub sigma: f64,
    pub iterations: usize,
    /// `(sigma, phi_bar(sigma))` for the start and every iterate.
    pub trace: Vec<TracePoint>,
}
