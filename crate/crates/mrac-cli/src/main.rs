//! Command-line front end: single closed-loop runs, Monte Carlo sweeps,
//! gain-region export and gain checking.
//!
//! All human-readable text goes to stderr; the last line on stdout is a
//! machine-readable `key=value` summary. Exit codes: 0 success, 2 config
//! error, 3 gain violation, 4 divergence or fail-fast monitor breach.

use clap::{Args, Parser, Subcommand};
use mrac::config::{self, RunConfig};
use mrac::csv_out;
use mrac::gain_region;
use mrac::laws::{validate_gains, GainCheck, GainMode, GainSpec};
use mrac::sim;
use mrac::Error;

#[derive(Parser)]
#[command(name = "mrac", version, about = "Discrete-time model-reference adaptive control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop simulation and write a trajectory CSV.
    Simulate(SimulateArgs),
    /// Run the Monte Carlo protocol and write a statistics CSV.
    Montecarlo(MontecarloArgs),
    /// Scan the high-order tuner gain region and write it as CSV.
    Region(RegionArgs),
    /// Check adaptive-law gains for admissibility.
    CheckGains(CheckGainsArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: String,
    /// Trajectory CSV output path.
    #[arg(long)]
    out: Option<String>,
    /// Dotted-path config override, e.g. law.gamma=0.9 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// RNG seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Enable monitoring and abort on the first certificate breach.
    #[arg(long)]
    fail_fast: bool,
}

#[derive(Args)]
struct MontecarloArgs {
    #[arg(long)]
    config: String,
    /// Statistics CSV output path.
    #[arg(long)]
    out: Option<String>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Number of trials (overrides the config's monte_carlo.trials).
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    fail_fast: bool,
}

#[derive(Args)]
struct RegionArgs {
    /// Region CSV output path.
    #[arg(long)]
    out: Option<String>,
    /// Grid resolution as GAMMAxBETAxLAMBDA, default 401x201x1001.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args)]
struct CheckGainsArgs {
    /// Law to check: gd or hot.
    #[arg(long)]
    law: String,
    #[arg(long)]
    gamma: f64,
    /// Required for the high-order tuner.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    /// proposition (default) or extended-region.
    #[arg(long, default_value = "proposition")]
    mode: String,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::GainCondition(_) => 3,
        Error::Diverged { .. } | Error::CertificateBreach { .. } => 4,
        _ => 2,
    }
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Montecarlo(args) => cmd_montecarlo(args),
        Command::Region(args) => cmd_region(args),
        Command::CheckGains(args) => cmd_check_gains(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code(&err));
        }
    }
}

fn load_with_overrides(
    path: &str,
    sets: &[String],
    seed: Option<u64>,
    fail_fast: bool,
) -> Result<RunConfig, Error> {
    let mut value = config::load_config_value(path)?;
    for assignment in sets {
        config::apply_override(&mut value, assignment)?;
    }
    let mut cfg = config::config_from_value(value)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if fail_fast {
        cfg.monitor.enabled = true;
        cfg.monitor.fail_fast = true;
    }
    Ok(cfg)
}

fn cmd_simulate(args: SimulateArgs) -> Result<i32, Error> {
    let cfg = load_with_overrides(&args.config, &args.set, args.seed, args.fail_fast)?;
    let (built, result) = sim::run_from_config(&cfg)?;
    let n = built.scenario.plant.state_dim();
    let m = built.scenario.plant.input_dim();

    if let Some(out) = &args.out {
        csv_out::emit_trajectory_csv(out, &result.records, n, m, built.monitor.enabled)?;
        eprintln!("trajectory written to {out}");
    }
    eprintln!(
        "simulated {} steps: final |e| = {:.6e}, final |eps| = {:.6e}, monitor violations = {}",
        result.records.len(),
        result.final_e_norm(),
        result.final_eps_norm(),
        result.violations.len()
    );
    println!(
        "status=ok command=simulate steps={} final_e_norm={} final_eps_norm={} violations={}",
        result.records.len(),
        result.final_e_norm(),
        result.final_eps_norm(),
        result.violations.len()
    );
    Ok(0)
}

fn cmd_montecarlo(args: MontecarloArgs) -> Result<i32, Error> {
    let cfg = load_with_overrides(&args.config, &args.set, args.seed, args.fail_fast)?;
    let mc = cfg.monte_carlo.unwrap_or(config::MonteCarloConfig {
        trials: 2000,
        perturb_low: -0.5,
        perturb_high: 2.0,
    });
    let trials = args.trials.unwrap_or(mc.trials);
    let stats = sim::run_monte_carlo(&cfg, trials, mc.perturb_low, mc.perturb_high)?;

    if let Some(out) = &args.out {
        csv_out::emit_stats_csv(out, &stats)?;
        eprintln!("statistics written to {out}");
    }
    let final_e = *stats.e.mean.last().unwrap_or(&0.0);
    let peak_e = stats.e.mean.iter().copied().fold(0.0, f64::max);
    eprintln!(
        "{} trials over {} steps: diverged = {}, mean |e| final = {:.6e}, peak = {:.6e}",
        trials,
        stats.steps(),
        stats.diverged_count(),
        final_e,
        peak_e
    );
    if stats.monitor_violations > 0 {
        eprintln!(
            "warning: {} certificate-monitor breaches recorded",
            stats.monitor_violations
        );
    }
    println!(
        "status=ok command=montecarlo trials={} steps={} diverged={} final_e_mean={} peak_e_mean={}",
        trials,
        stats.steps(),
        stats.diverged_count(),
        final_e,
        peak_e
    );
    Ok(0)
}

fn parse_grid(spec: &str) -> Result<(usize, usize, usize), Error> {
    let parts: Vec<&str> = spec.split('x').collect();
    if parts.len() != 3 {
        return Err(Error::config(format!(
            "--grid must look like 401x201x1001, got '{spec}'"
        )));
    }
    let mut dims = [0usize; 3];
    for (slot, part) in dims.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|_| Error::config(format!("bad grid dimension '{part}'")))?;
    }
    Ok((dims[0], dims[1], dims[2]))
}

fn cmd_region(args: RegionArgs) -> Result<i32, Error> {
    let (g, b, l) = match &args.grid {
        Some(spec) => parse_grid(spec)?,
        None => (401, 201, gain_region::DEFAULT_LAMBDA_RESOLUTION),
    };
    let grid = gain_region::build_region_grid(g, b, l)?;
    if let Some(out) = &args.out {
        csv_out::emit_region_csv(out, &grid)?;
        eprintln!("region grid written to {out}");
    }
    eprintln!(
        "scanned {}x{} gain pairs at lambda resolution {}: allowable = {}, closed-form admissible = {}",
        g,
        b,
        l,
        grid.allowable_count(),
        grid.prop3_count()
    );
    println!(
        "status=ok command=region gamma_steps={} beta_steps={} lambda_resolution={} allowable={} prop3={}",
        g,
        b,
        l,
        grid.allowable_count(),
        grid.prop3_count()
    );
    Ok(0)
}

fn cmd_check_gains(args: CheckGainsArgs) -> Result<i32, Error> {
    let spec = match args.law.as_str() {
        "gd" => GainSpec::Gd {
            gamma: args.gamma,
            mu: args.mu,
        },
        "hot" => {
            let beta = args
                .beta
                .ok_or_else(|| Error::config("--beta is required for the hot law"))?;
            let mode = match args.mode.as_str() {
                "proposition" => GainMode::Proposition,
                "extended-region" => GainMode::ExtendedRegion,
                other => {
                    return Err(Error::config(format!(
                        "unknown mode '{other}' (proposition | extended-region)"
                    )))
                }
            };
            GainSpec::Hot {
                gamma: args.gamma,
                beta,
                mu: args.mu,
                mode,
            }
        }
        other => return Err(Error::config(format!("unknown law '{other}' (gd | hot)"))),
    };
    match validate_gains(&spec) {
        GainCheck::Ok { alpha } => {
            match alpha {
                Some(a) => eprintln!("gains admissible, alpha = {a:.6}"),
                None => eprintln!("gains admissible"),
            }
            match alpha {
                Some(a) => println!("status=ok command=check-gains alpha={a}"),
                None => println!("status=ok command=check-gains"),
            }
            Ok(0)
        }
        GainCheck::Violation { condition } => {
            eprintln!("gain condition violated: {condition}");
            println!("status=violation command=check-gains condition=\"{condition}\"");
            Ok(3)
        }
    }
}
