use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use isac_uav::cli::{cmd_run, cmd_sweep, parse_seeds, RunOptions, SweepSpec, EXIT_ERROR};
use isac_uav::orchestrate::Scheme;

/// Secrecy-rate maximization for a UAV ISAC transmitter.
///
/// Without --sweep, runs one scheme and writes convergence.csv,
/// trajectory.csv, metrics.csv and summary.json to --out-dir. With
/// --sweep, runs every scheme (or only --scheme) at each point.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    /// Key-value config file; absent keys take default values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed, or a comma-separated list for sweeps.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// `<axis>=<v1,v2,...>` with axis power_dbm, sense_rate or slots.
    #[arg(long)]
    sweep: Option<String>,
    /// proposed, opt-bf-fixed-traj or mrt-fixed-traj.
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    quiet: bool,
    /// Parallel sweep points.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Also write channels.csv with the final channel vectors.
    #[arg(long)]
    dump_channels: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let seeds = match args.seed.as_deref().map(parse_seeds).transpose() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR as u8);
        }
    };
    let mut opts = RunOptions {
        config: args.config,
        seed: None,
        out_dir: args.out_dir,
        scheme: args.scheme.unwrap_or(Scheme::Proposed),
        max_iters: args.max_iters,
        quiet: args.quiet,
        dump_channels: args.dump_channels,
    };
    let code = match args.sweep {
        None => {
            if let Some(s) = &seeds {
                if s.len() != 1 {
                    eprintln!("error: a single run takes one seed");
                    return ExitCode::from(EXIT_ERROR as u8);
                }
                opts.seed = Some(s[0]);
            }
            cmd_run(&opts)
        }
        Some(text) => {
            let seeds = match seeds {
                Some(s) => s,
                None => match isac_uav::cli::load_scenario(&opts) {
                    Ok(cfg) => vec![cfg.rng_seed],
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(isac_uav::cli::exit_code(&e) as u8);
                    }
                },
            };
            match SweepSpec::parse(&text, seeds) {
                Ok(spec) => {
                    let schemes = args.scheme.map_or(Scheme::ALL.to_vec(), |k| vec![k]);
                    cmd_sweep(&opts, &spec, &schemes, args.jobs)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_ERROR
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
