use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use closedloop_cli::{
    cmd_compare, cmd_equilibrium, cmd_isi, cmd_pbs, cmd_solve, cmd_sweep, exit_code, load, Options, SweepParam,
    UsageError, DEFAULT_RMSE_THRESHOLD,
};

/// Closed-loop advection-diffusion channel: spectral solver, particle
/// simulator and ISI analysis.
#[derive(Parser)]
#[command(name = "closedloop", version)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Scenario JSON file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file (or directory for `sweep`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the sequence and particle seeds in the scenario
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Thread count for parallel work (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Report concentrations per released molecule (default)
    #[arg(long, global = true, overrides_with = "raw")]
    normalized: bool,

    /// Report concentrations in molecules
    #[arg(long, global = true, overrides_with = "normalized")]
    raw: bool,

    /// Normalized RMSE above which `compare` exits with status 3
    #[arg(long, global = true, default_value_t = DEFAULT_RMSE_THRESHOLD)]
    rmse_threshold: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral solution at the receiver
    Solve {
        /// Also write the full coefficient trajectory
        #[arg(long)]
        coefficients: bool,
    },
    /// Particle-based simulation at the receiver
    Pbs {
        /// Dump particle positions at this time (repeatable)
        #[arg(long = "snapshot")]
        snapshots: Vec<f64>,
    },
    /// Spectral solution against the particle simulation
    Compare,
    /// Decompose the received signal of the scenario's bit sequence
    Isi,
    /// Closed- vs open-loop deviation over a range of one parameter
    Sweep {
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Equilibrium concentration for the scenario's damping
    Equilibrium {
        /// Symbol duration (defaults to the scenario sequence's)
        #[arg(long)]
        symbol_duration: Option<f64>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    if let Some(n) = g.workers {
        if n == 0 {
            return Err(UsageError("--workers must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let config = g.config.as_ref().ok_or_else(|| UsageError("--config is required".into()))?;
    let opts = Options {
        seed: g.seed,
        normalized: !g.raw,
        rmse_threshold: g.rmse_threshold,
    };
    let loaded = load(config, g.seed)?;
    let out = |default: &str| g.out.clone().unwrap_or_else(|| PathBuf::from(default));

    match cli.command {
        Command::Solve { coefficients } => {
            let s = cmd_solve(&loaded, &out("rx.csv"), coefficients, &opts)?;
            println!(
                "mass at t_end {:.6e}, peak {:.6e} at t = {:.4} s",
                s.mass_end, s.peak_value, s.peak_time
            );
        }
        Command::Pbs { snapshots } => {
            for w in cmd_pbs(&loaded, &out("pbs.csv"), &snapshots, &opts)? {
                eprintln!("warning: {w}");
            }
        }
        Command::Compare => {
            let path = out("compare.json");
            let result = cmd_compare(&loaded, &path, &opts);
            if let Ok(r) = &result {
                for w in &r.warnings {
                    eprintln!("warning: {w}");
                }
                println!(
                    "normalized RMSE {:.4e}, max deviation {:.4e}, 3-sigma coverage {:.3}",
                    r.normalized_rmse, r.max_deviation, r.band_coverage
                );
            }
            result?;
        }
        Command::Isi => {
            let s = cmd_isi(&loaded, &out("isi.csv"), &opts)?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            match s.transition_time.time() {
                Some(t) => println!("transition time {t:.3} s"),
                None => println!("transition time not reached"),
            }
            if let Some(r) = s.equilibrium {
                println!("equilibrium {r:.6e} per m");
            }
        }
        Command::Sweep { param, values } => {
            let dir = out("sweep");
            let rows = cmd_sweep(&loaded, param, &values, &dir, &opts)?;
            for r in rows {
                if let Some(w) = &r.warning {
                    eprintln!("warning: {w}");
                }
                println!("{param} = {:?}: max|r - r_open| = {:.6e}", r.value, r.max_abs_diff);
            }
        }
        Command::Equilibrium { symbol_duration } => {
            let r = cmd_equilibrium(&loaded, symbol_duration, g.out.as_deref(), &opts)?;
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            println!("r_eq = {:?}", r.r_eq);
            if let Some(adj) = r.r_eq_adjusted {
                println!("r_eq (sequence ones fraction) = {adj:?}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { closedloop_cli::exit::VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
