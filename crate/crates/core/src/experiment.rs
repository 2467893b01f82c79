//! Random benchmark instances for each definiteness class, the suite runner
//! and CSV output.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::compact::LSR1Factors;
use crate::error::{Result, TrsError};
use crate::secular::DEFAULT_TAU;
use crate::solver::{solve_pseudoinverse, solve_smw, solve_with, SolverOptions, TrsSolution};
use crate::spectral::SpectralData;

pub const CSV_HEADER: &str = "family,n,run,case,opt1_abs,opt1_rel,opt2,sigma_star,phi_abs,time_s";

/// Offset added to every shifted eigenvalue so the class margins are not razor thin.
const SPECTRAL_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Positive definite, unconstrained minimizer inside the region.
    F1,
    /// Positive definite, unconstrained minimizer outside.
    F2,
    /// Singular PSD, `-B^+ g` inside.
    F3a,
    /// Singular PSD, `-B^+ g` outside.
    F3b,
    /// Indefinite, random gradient.
    F4a,
    /// Indefinite, gradient orthogonal to the leftmost eigenspace, Newton path.
    F4b,
    /// Hard case with `lambda_min` in the update space.
    F5a,
    /// Hard case with `lambda_min = gamma`.
    F5b,
}

impl Family {
    pub const ALL: [Family; 8] =
        [Family::F1, Family::F2, Family::F3a, Family::F3b, Family::F4a, Family::F4b, Family::F5a, Family::F5b];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::F1 => "1",
            Family::F2 => "2",
            Family::F3a => "3a",
            Family::F3b => "3b",
            Family::F4a => "4a",
            Family::F4b => "4b",
            Family::F5a => "5a",
            Family::F5b => "5b",
        }
    }

    /// Default `gamma`: 0.5, negated for the family whose leftmost eigenvalue is `gamma`.
    pub fn default_gamma(self) -> f64 {
        match self {
            Family::F5b => -0.5,
            _ => 0.5,
        }
    }

    fn needs_negative_gamma(self) -> bool {
        matches!(self, Family::F5b)
    }

    /// Families whose leftmost eigenvalue is doubled and removed from `g`.
    fn leftmost_multiplicity(self) -> usize {
        match self {
            Family::F4b | Family::F5a => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = TrsError;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| TrsError::InvalidExperiment(format!("unknown family {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub family: Family,
    pub n: usize,
    pub m_pairs: usize,
    pub gamma: f64,
    pub seed: u64,
    pub repeats: usize,
    pub tau: f64,
}

impl ExperimentSpec {
    pub fn new(family: Family, n: usize, seed: u64) -> Self {
        Self { family, n, m_pairs: 5, gamma: family.default_gamma(), seed, repeats: 5, tau: DEFAULT_TAU }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TrsError::InvalidExperiment(msg));
        if self.m_pairs == 0 {
            return bad("at least one pair is required".into());
        }
        if self.n < self.m_pairs + 2 {
            return bad(format!("n = {} must be at least pairs + 2 = {}", self.n, self.m_pairs + 2));
        }
        if self.repeats == 0 {
            return bad("repeats must be positive".into());
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !self.gamma.is_finite() || self.gamma == 0.0 {
            return bad(format!("gamma must be finite and nonzero, got {}", self.gamma));
        }
        if self.family.needs_negative_gamma() != (self.gamma < 0.0) {
            let want = if self.family.needs_negative_gamma() { "negative" } else { "positive" };
            return bad(format!("family {} requires {want} gamma, got {}", self.family, self.gamma));
        }
        if self.m_pairs < self.family.leftmost_multiplicity() {
            return bad(format!("family {} needs at least {} pairs", self.family, self.family.leftmost_multiplicity()));
        }
        Ok(())
    }

    /// Seed of the `run`-th repeat.
    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub factors: LSR1Factors,
    pub g: DVector<f64>,
    pub delta: f64,
}

fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(rng))
}

/// `mu ~ Uniform(0, 1)`, excluding zero.
fn unit_fraction(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let mu: f64 = rng.random();
        if mu > 0.0 {
            return mu;
        }
    }
}

/// Draws random pairs and then rewrites the eigenvalues of `R M R^T` so that
/// `B` falls in the family's definiteness class, keeping `Psi`, `R` and `U`.
pub fn generate_instance(spec: &ExperimentSpec) -> Result<Instance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, m, gamma) = (spec.n, spec.m_pairs, spec.gamma);
    let s = normal_matrix(&mut rng, n, m);
    let y = normal_matrix(&mut rng, n, m);
    let mut g = normal_vector(&mut rng, n);
    let mu = unit_fraction(&mut rng);

    let base = LSR1Factors::from_pairs(gamma, &s, &y)?;
    let base_spec = SpectralData::new(&base)?;
    let magnitudes: Vec<f64> = base_spec.lambda_hat().iter().map(|l| l.abs() + SPECTRAL_MARGIN).collect();
    let mut new_hat = DVector::from_vec(magnitudes.iter().map(|v| v + (-gamma).max(0.0)).collect());

    let family = spec.family;
    match family {
        Family::F1 | Family::F2 | Family::F5b => {}
        Family::F3a | Family::F3b => new_hat[0] = -gamma,
        Family::F4a => new_hat[0] = -gamma - magnitudes[0],
        Family::F4b | Family::F5a => {
            new_hat[0] = -gamma - magnitudes[0];
            new_hat[1] = new_hat[0];
        }
    }

    // M = R^{-1} U diag(new) U^T R^{-T}.
    let r_inv_u = base_spec
        .r()
        .solve_upper_triangular(base_spec.u())
        .ok_or(TrsError::RankDeficient { index: 0, value: 0.0 })?;
    let middle = &r_inv_u * DMatrix::from_diagonal(&new_hat) * r_inv_u.transpose();
    let psi = base.psi().clone();
    let factors = LSR1Factors::from_middle(gamma, psi, middle)?;

    let spectral = SpectralData::new(&factors)?;
    match family {
        Family::F3a | Family::F3b | Family::F4b | Family::F5a => {
            let k = family.leftmost_multiplicity();
            // Two passes of projection against the leftmost P_par columns.
            for _ in 0..2 {
                let mut coeff = spectral.ppar_t_times(&g)?;
                coeff.rows_mut(k, m - k).fill(0.0);
                g -= spectral.ppar_times(&coeff)?;
            }
        }
        Family::F5b => {
            let coeff = spectral.ppar_t_times(&g)?;
            g = spectral.ppar_times(&coeff)?;
        }
        _ => {}
    }

    let delta = match family {
        Family::F1 | Family::F2 => {
            let p_u = solve_smw(&factors, &g, gamma)?;
            let scale = if family == Family::F1 { 1.25 } else { mu };
            scale * p_u.norm()
        }
        _ => {
            let sigma = (-spectral.lambda_min()).max(0.0);
            let sigma = if matches!(family, Family::F3a | Family::F3b) { 0.0 } else { sigma };
            let pg = spectral.project_gradient(&g)?;
            let p_hat = solve_pseudoinverse(&spectral, &pg, &g, sigma)?;
            let scale = match family {
                Family::F3a | Family::F5a | Family::F5b => 1.0 + mu,
                _ => mu,
            };
            scale * p_hat.norm()
        }
    };
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(TrsError::InvalidExperiment(format!("degenerate radius {delta} for family {family}")));
    }
    Ok(Instance { factors, g, delta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub family: Family,
    pub n: usize,
    pub run: usize,
    /// Case tag, or `error: ...` when the solver failed.
    pub case: String,
    pub opt1_abs: f64,
    pub opt1_rel: f64,
    pub opt2: f64,
    pub sigma_star: f64,
    pub phi_abs: f64,
    pub time_s: f64,
    pub newton_iterations: Option<usize>,
}

impl RunRecord {
    pub fn is_error(&self) -> bool {
        self.case.starts_with("error")
    }

    fn failed(family: Family, n: usize, run: usize, err: &TrsError, time_s: f64) -> Self {
        Self {
            family,
            n,
            run,
            case: format!("error: {err}").replace(',', ";"),
            opt1_abs: f64::NAN,
            opt1_rel: f64::NAN,
            opt2: f64::NAN,
            sigma_star: f64::NAN,
            phi_abs: f64::NAN,
            time_s,
            newton_iterations: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub runs: Vec<RunRecord>,
}

impl ExperimentReport {
    /// The run with the median solve time.
    pub fn representative(&self) -> Option<&RunRecord> {
        let mut ok: Vec<&RunRecord> = self.runs.iter().filter(|r| !r.is_error()).collect();
        ok.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        ok.get(ok.len().saturating_sub(1) / 2).copied()
    }
}

/// Generates, solves and checks one instance. Only the solve is timed.
pub fn run_instance(spec: &ExperimentSpec, run: usize) -> Result<(RunRecord, Instance, TrsSolution)> {
    let run_spec = ExperimentSpec { seed: spec.run_seed(run), ..spec.clone() };
    let inst = generate_instance(&run_spec)?;
    let opts = SolverOptions { tau: spec.tau, ..SolverOptions::default() };
    let start = Instant::now();
    let sol = solve_with(&inst.factors, &inst.g, inst.delta, &opts);
    let time_s = start.elapsed().as_secs_f64();
    let sol = match sol {
        Ok(sol) => sol,
        Err(e) => {
            log::warn!("family {} n {} run {run}: {e}", spec.family, spec.n);
            return Err(e);
        }
    };
    let report = sol.optimality(&inst.factors, &inst.g, inst.delta)?;
    let record = RunRecord {
        family: spec.family,
        n: spec.n,
        run,
        case: sol.case.to_string(),
        opt1_abs: report.opt1_abs,
        opt1_rel: report.opt1_rel,
        opt2: report.opt2,
        sigma_star: sol.sigma_star,
        phi_abs: report.phi_abs,
        time_s,
        newton_iterations: sol.newton.as_ref().map(|o| o.iterations),
    };
    Ok((record, inst, sol))
}

pub fn run_suite(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let runs = (0..spec.repeats)
        .map(|run| match run_instance(spec, run) {
            Ok((record, _, _)) => record,
            Err(e) => RunRecord::failed(spec.family, spec.n, run, &e, f64::NAN),
        })
        .collect();
    Ok(ExperimentReport { spec: spec.clone(), runs })
}

/// Scientific notation with a signed, at least two-digit exponent: `3.24e-15`.
pub fn format_sci(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let raw = format!("{:.*e}", digits, x);
    let (mantissa, exp) = raw.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn csv_row(r: &RunRecord, full_precision: bool) -> String {
    let digits = if full_precision { 16 } else { 2 };
    let f = |x: f64| format_sci(x, digits);
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.family,
        r.n,
        r.run,
        r.case,
        f(r.opt1_abs),
        f(r.opt1_rel),
        f(r.opt2),
        f(r.sigma_star),
        f(r.phi_abs),
        format_sci(r.time_s, digits)
    )
}

pub fn write_csv<W: Write>(mut out: W, reports: &[ExperimentReport], full_precision: bool) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for report in reports {
        for r in &report.runs {
            writeln!(out, "{}", csv_row(r, full_precision))?;
        }
    }
    out.flush()
}

pub fn emit_csv(report: &ExperimentReport, path: &Path, full_precision: bool) -> Result<()> {
    let io_err = |source| TrsError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io_err)?;
    write_csv(BufWriter::new(file), std::slice::from_ref(report), full_precision).map_err(io_err)
}
