use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use obs_trs::experiment::{csv_row, emit_csv, generate_instance, run_suite, CSV_HEADER};
use obs_trs::oracle::{dense_solve, DenseProblem, DEFAULT_CEILING};
use obs_trs::secular::DEFAULT_TAU;
use obs_trs::{solve, solve_with, ExperimentSpec, Family, SecularCoefficients, Snapshot, SolverOptions, SpectralData};

/// Trust-region subproblem solver for limited-memory SR1 matrices.
#[derive(Parser, Debug)]
#[command(name = "obs-trs", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment family and write per-run metrics as CSV.
    Bench(BenchArgs),
    /// Solve the subproblem for a pair snapshot.
    Solve(SolveArgs),
    /// Write a random pair snapshot.
    Snapshot(SnapshotArgs),
    /// Print `sigma,phi_bar` samples of the secular function of one instance.
    Phi(PhiArgs),
}

#[derive(clap::Args, Debug)]
struct BenchArgs {
    #[arg(long, value_parser = parse_family)]
    family: Family,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    pairs: usize,
    /// Defaults to 0.5, or -0.5 for family 5b.
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long)]
    out: PathBuf,
    /// Print metrics with 17 significant digits.
    #[arg(long)]
    full_precision: bool,
    /// Compare every run against the dense solver (n <= 200 only).
    #[arg(long)]
    oracle_check: bool,
}

#[derive(clap::Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// Number of leading components of p* to print.
    #[arg(long, default_value_t = 5)]
    show: usize,
}

#[derive(clap::Args, Debug)]
struct SnapshotArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    pairs: usize,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct PhiArgs {
    #[arg(long, value_parser = parse_family)]
    family: Family,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 400)]
    points: usize,
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    s.parse().map_err(|e: obs_trs::TrsError| e.to_string())
}

const ORACLE_RTOL: f64 = 1e-6;

fn bench(args: BenchArgs) -> Result<bool> {
    let spec = ExperimentSpec {
        family: args.family,
        n: args.n,
        m_pairs: args.pairs,
        gamma: args.gamma.unwrap_or(args.family.default_gamma()),
        seed: args.seed,
        repeats: args.repeats,
        tau: args.tau,
    };
    spec.validate()?;
    if args.oracle_check && spec.n > DEFAULT_CEILING {
        bail!("--oracle-check needs n <= {DEFAULT_CEILING}, got {}", spec.n);
    }
    let report = run_suite(&spec)?;
    emit_csv(&report, &args.out, args.full_precision)?;

    let mut ok = true;
    for r in report.runs.iter().filter(|r| r.is_error()) {
        eprintln!("run {}: {}", r.run, r.case);
        ok = false;
    }
    if let Some(rep) = report.representative() {
        println!("{CSV_HEADER}");
        println!("{}", csv_row(rep, args.full_precision));
    }

    if args.oracle_check {
        let opts = SolverOptions { tau: spec.tau, ..SolverOptions::default() };
        for run in 0..spec.repeats {
            let inst = generate_instance(&ExperimentSpec { seed: spec.run_seed(run), ..spec.clone() })?;
            let ours = solve_with(&inst.factors, &inst.g, inst.delta, &opts)?;
            let prob = DenseProblem::from_factors(&inst.factors, &inst.g, inst.delta)?;
            let reference = dense_solve(&prob)?;
            let (q_ours, q_ref) = (prob.model_value(&ours.p_star), prob.model_value(&reference.p_star));
            let dq = (q_ours - q_ref).abs() / q_ref.abs().max(1.0);
            let ds = (ours.sigma_star - reference.sigma_star).abs() / reference.sigma_star.abs().max(1.0);
            if dq > ORACLE_RTOL || ds > ORACLE_RTOL {
                eprintln!("oracle mismatch in run {run}: rel dQ = {dq:.2e}, rel dsigma = {ds:.2e}");
                ok = false;
            }
        }
        if ok {
            eprintln!("oracle check: {} runs agree", spec.repeats);
        }
    }
    Ok(ok)
}

fn solve_snapshot(args: SolveArgs) -> Result<bool> {
    let snap = Snapshot::read(&args.input)?;
    let factors = snap.factors().context("building compact factors")?;
    let g = snap.gradient();
    let opts = SolverOptions { tau: args.tau, ..SolverOptions::default() };
    let sol = solve_with(&factors, &g, args.delta, &opts)?;
    let report = sol.optimality(&factors, &g, args.delta)?;

    println!("n = {}, pairs = {}, gamma = {}", snap.dim(), snap.pairs(), snap.gamma);
    println!("case        {}", sol.case);
    println!("sigma*      {:.16e}", sol.sigma_star);
    println!("|p*|        {:.16e}", sol.p_star.norm());
    println!("Q(p*)       {:.16e}", sol.model_value(&factors, &g));
    if let Some(h) = &sol.hard_case {
        println!("alpha       {:.16e}", h.alpha);
        println!("|p_hat|     {:.16e}", h.p_hat.norm());
    }
    if let Some(out) = &sol.newton {
        println!("newton its  {}", out.iterations);
    }
    let shown = args.show.min(sol.p_star.len());
    let head: Vec<String> = sol.p_star.iter().take(shown).map(|v| format!("{v:.6e}")).collect();
    println!("p*[..{shown}]   [{}]", head.join(", "));
    println!("opt1_abs    {:.3e}", report.opt1_abs);
    println!("opt1_rel    {:.3e}", report.opt1_rel);
    println!("opt2        {:.3e}", report.opt2);
    println!("phi_abs     {:.3e}", report.phi_abs);
    println!("psd_margin  {:.3e}", report.psd_margin);
    Ok(true)
}

fn snapshot(args: SnapshotArgs) -> Result<bool> {
    if args.pairs == 0 || args.pairs > args.n {
        bail!("pairs must lie in 1..={}, got {}", args.n, args.pairs);
    }
    Snapshot::random(args.n, args.pairs, args.gamma, args.seed).write(&args.out)?;
    Ok(true)
}

fn phi(args: PhiArgs) -> Result<bool> {
    if args.points < 2 {
        bail!("need at least 2 points");
    }
    let spec = ExperimentSpec::new(args.family, args.n, args.seed);
    spec.validate()?;
    let inst = generate_instance(&spec)?;
    let spectral = SpectralData::new(&inst.factors)?;
    let pg = spectral.project_gradient(&inst.g)?;
    let c = SecularCoefficients::from_projection(&pg, inst.delta)?;
    let sigma_star = solve(&inst.factors, &inst.g, inst.delta)?.sigma_star;

    let poles = c.lambda_bar();
    let lo = -poles.last().copied().unwrap_or(0.0) - 1.0;
    let hi = sigma_star.max(c.initial_sigma()).max(-lo) + 1.0;
    println!("sigma,phi_bar");
    for k in 0..args.points {
        let sigma = lo + (hi - lo) * k as f64 / (args.points - 1) as f64;
        println!("{sigma:.16e},{:.16e}", c.phi_bar(sigma));
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(a) => bench(a),
        Command::Solve(a) => solve_snapshot(a),
        Command::Snapshot(a) => snapshot(a),
        Command::Phi(a) => phi(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            log::debug!("{e:?}");
            ExitCode::FAILURE
        }
    }
}
