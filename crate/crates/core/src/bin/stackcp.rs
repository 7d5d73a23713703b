use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stacked_cp::conformal::{run_oracle_check, stability_probe, OracleCheckConfig, ProbeConfig, DEFAULT_DENOM_FLOOR};
use stacked_cp::experiment::{run_experiment, ExperimentConfig, Overrides};
use stacked_cp::learners::LearnerSpec;
use stacked_cp::synth::SyntheticSpec;
use stacked_cp::{Error, Result};

#[derive(Parser)]
#[command(name = "stackcp", version, about = "Stacked conformal prediction intervals for regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train/test experiment driven by a key=value config file.
    Run(RunArgs),
    /// Compare the fast interval search against brute-force refits.
    OracleCheck(OracleArgs),
    /// Estimate how far the feasible stack drifts from the symmetric stack.
    StabilityProbe(ProbeArgs),
    /// Write a synthetic dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file.
    config: PathBuf,
    /// Miscoverage levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Absolute bisection tolerance.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Bracket half-width in response standard deviations.
    #[arg(long)]
    u: Option<f64>,
    #[arg(long)]
    train_frac: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long, default_value_t = 30)]
    n_min: usize,
    #[arg(long, default_value_t = 80)]
    n_max: usize,
    #[arg(long, default_value_t = 1)]
    m_min: usize,
    #[arg(long, default_value_t = 4)]
    m_max: usize,
    #[arg(long, default_value_t = 2000)]
    grid_points: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1000)]
    rank_one_instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ProbeArgs {
    /// Generator spec, e.g. `fn=friedman,d=5,noise=gaussian:1`.
    #[arg(long, default_value = "fn=friedman,d=5,noise=gaussian:1")]
    synthetic: String,
    /// Learner specs, `;` separated.
    #[arg(long, default_value = "ridge;knn;forest")]
    learners: String,
    /// Training size of the feasible stack.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Tolerance grid, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.05,0.1,0.2,0.5")]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_DENOM_FLOOR)]
    denom_floor: f64,
    /// Output CSV (`epsilon,delta_hat,h_hat,trials`).
    #[arg(long, default_value = "stability.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator spec, e.g. `fn=sine,n=500,d=3,noise=hetero:0.5,seed=1`.
    spec: String,
    /// Output CSV with columns `x1..xd,y`.
    #[arg(long)]
    out: PathBuf,
}

fn parse_learners(text: &str) -> Result<Vec<LearnerSpec>> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = Overrides {
        alphas: args.alpha,
        folds: args.folds,
        seed: args.seed,
        epsilon: args.epsilon,
        u: args.u,
        train_frac: args.train_frac,
        out: args.out,
    }
    .apply(ExperimentConfig::load(&args.config)?)?;
    let outcome = run_experiment(&cfg)?;
    print!("{}", outcome.table);
    println!(
        "n_train={} n_test={} n_cal={} dropped_rows={} out={}",
        outcome.n_train,
        outcome.n_test,
        outcome.n_cal,
        outcome.dropped,
        cfg.out.display()
    );
    Ok(())
}

fn oracle_check(args: OracleArgs) -> Result<()> {
    let summary = run_oracle_check(&OracleCheckConfig {
        instances: args.instances,
        n_range: (args.n_min, args.n_max),
        m_range: (args.m_min, args.m_max),
        grid_points: args.grid_points,
        alpha: args.alpha,
        rank_one_instances: args.rank_one_instances,
        seed: args.seed,
    })?;
    for failure in &summary.interval_failures {
        println!("mismatch: {failure}");
    }
    println!(
        "intervals: {}/{} within tolerance (worst gap/tolerance {:.3})",
        summary.instances - summary.interval_failures.len(),
        summary.instances,
        summary.worst_gap_ratio
    );
    println!(
        "rank-one updates: {} instances, worst residual {:.3e}",
        summary.rank_one_instances, summary.rank_one_worst_residual
    );
    if summary.passed() {
        println!("oracle check passed");
        Ok(())
    } else {
        Err(Error::Config("oracle check failed".into()))
    }
}

fn probe(args: ProbeArgs) -> Result<()> {
    let generator: SyntheticSpec = args.synthetic.parse()?;
    let learners = parse_learners(&args.learners)?;
    let report = stability_probe(
        &generator,
        &learners,
        &ProbeConfig {
            n: args.n,
            folds: args.folds,
            alpha: args.alpha,
            eps_grid: args.eps,
            trials: args.trials,
            seed: args.seed,
            denom_floor: args.denom_floor,
        },
    )?;
    let mut w = csv::Writer::from_path(&args.out)?;
    w.write_record(["epsilon", "delta_hat", "h_hat", "trials"])?;
    for ((eps, d), h) in report.eps_grid.iter().zip(&report.delta_hat).zip(&report.h_hat) {
        w.write_record([eps.to_string(), d.to_string(), h.to_string(), report.trials.to_string()])?;
        println!("epsilon={eps} delta_hat={d} h_hat={h}");
    }
    w.flush()?;
    println!(
        "coverage over {} trials: symmetric {:.3}, feasible {:.3}",
        report.trials, report.symmetric_coverage, report.feasible_coverage
    );
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let data = args.spec.parse::<SyntheticSpec>()?.generate()?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(&args.out)?;
    let mut header: Vec<String> = data.names().to_vec();
    header.push("y".into());
    w.write_record(&header)?;
    for (row, y) in data.x().row_iter().zip(data.y()) {
        w.write_record(row.iter().chain(std::iter::once(y)).map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::OracleCheck(a) => oracle_check(a),
        Command::StabilityProbe(a) => probe(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stackcp: error: {e}");
            ExitCode::FAILURE
        }
    }
}
