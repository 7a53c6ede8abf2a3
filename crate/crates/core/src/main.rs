use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use guardsim::harness::{aggregate_dir, gr_bias_mc, oracle_check};
use guardsim::{default_sweep_plan, execute_plan, load_plan, Error, ExperimentPlan};

/// Boundary-defense guard allocation simulator.
#[derive(Parser)]
#[command(name = "guardsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment plan in a config file (TOML or JSON).
    Run(RunArgs),
    /// Run the built-in budget x truncation x attacker sweep.
    Sweep(CommonArgs),
    /// Check the resampling update's expectation against its closed form.
    BenchGr(BenchGrArgs),
    /// Compare top-k selection against brute-force enumeration.
    OracleCheck(OracleCheckArgs),
    /// Rebuild aggregate.csv from the run summaries in a directory.
    Aggregate(AggregateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Base seed override for all derived streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread cap; defaults to one thread per core.
    #[arg(long, env = "GUARD_SIM_JOBS")]
    jobs: Option<usize>,
    /// Comma-separated subset of the plan's policies to run.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<String>>,
}

#[derive(Args)]
struct RunArgs {
    /// Plan file, .toml or .json.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct BenchGrArgs {
    /// Monte Carlo trials per (probability, truncation, reward) point.
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct OracleCheckArgs {
    /// Random instances to test.
    #[arg(long, default_value_t = 1000)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AggregateArgs {
    /// Run directory containing runs/*.json.
    #[arg(long)]
    out: PathBuf,
}

fn apply_common(plan: &mut ExperimentPlan, common: &CommonArgs) -> guardsim::Result<()> {
    if let Some(seed) = common.seed {
        plan.base_seed = Some(seed);
    }
    if let Some(out) = &common.out {
        plan.output_dir = out.clone();
    }
    if let Some(policies) = &common.policies {
        plan.retain_policies(policies)?;
    }
    Ok(())
}

fn run_plan(plan: &ExperimentPlan, jobs: Option<usize>) -> guardsim::Result<()> {
    let outputs = execute_plan(plan, jobs)?;
    println!(
        "{} runs written under {}",
        outputs.run_count,
        outputs.dir.display()
    );
    Ok(())
}

fn bench_gr(args: &BenchGrArgs) -> guardsim::Result<()> {
    println!(
        "{:>6} {:>4} {:>8} {:>12} {:>12} {:>10} {:>8}",
        "p", "M", "reward", "empirical", "analytic", "std_err", "sigmas"
    );
    let mut worst: f64 = 0.0;
    for &p in &[0.1, 0.5, 0.9] {
        for &m in &[3usize, 8, 15] {
            for &reward in &[0.25, 1.0] {
                let check = gr_bias_mc(p, m, reward, args.trials, args.seed)?;
                let sigmas = if check.std_error > 0.0 {
                    (check.empirical_mean - check.analytic).abs() / check.std_error
                } else {
                    0.0
                };
                worst = worst.max(sigmas);
                println!(
                    "{:>6} {:>4} {:>8} {:>12.6} {:>12.6} {:>10.6} {:>8.2}",
                    p, m, reward, check.empirical_mean, check.analytic, check.std_error, sigmas
                );
            }
        }
    }
    println!("worst deviation: {worst:.2} standard errors");
    Ok(())
}

fn run_oracle_check(args: &OracleCheckArgs) -> guardsim::Result<()> {
    let report = oracle_check(args.instances, args.seed)?;
    println!(
        "{} checks over {} instances, {} mismatches",
        report.checked, args.instances, report.mismatches
    );
    if report.mismatches > 0 {
        return Err(Error::InvalidInput(
            "top-k selection disagrees with enumeration".to_string(),
        ));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => load_plan(&args.config).and_then(|mut plan| {
            apply_common(&mut plan, &args.common)?;
            run_plan(&plan, args.common.jobs)
        }),
        Command::Sweep(common) => {
            let mut plan = default_sweep_plan();
            apply_common(&mut plan, common).and_then(|()| run_plan(&plan, common.jobs))
        }
        Command::BenchGr(args) => bench_gr(args),
        Command::OracleCheck(args) => run_oracle_check(args),
        Command::Aggregate(args) => aggregate_dir(&args.out).map(|path| {
            println!("wrote {}", path.display());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
