//! Command-line front end for the surface-leasing game: single-instance
//! solves with JSON dumps, Monte-Carlo sweeps with CSV output, and SVG
//! trend plots.

mod config;
mod plot;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use config::FileConfig;
use irsgame::game::{
    self, leader_grid_report, GameOutcome, SchemeKind, StackelbergOptions,
};
use irsgame::scenario::{generate_channels, trial_rng};
use irsgame::sweep::{run_sweep, to_csv_string, ResultTable, SweepVariable};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "irsgame",
    version,
    about = "Pricing game between a reflecting-surface operator and a base station: \
             the operator leases reflection modules per unit of amplitude, the \
             station best-responds with beamforming and a group-sparse reflection."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one random instance under each requested scheme.
    Solve(SolveArgs),
    /// Run a Monte-Carlo sweep and write the aggregated CSV table.
    Sweep(SweepArgs),
    /// Print the effective configuration as a TOML document.
    PrintConfig(PrintConfigArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// TOML configuration file; absent keys keep built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Trial index; `--seed S --trial T` reproduces trial T of a sweep with
    /// master seed S exactly.
    #[arg(long, default_value_t = 0)]
    trial: usize,
    /// Comma-separated schemes to run.
    #[arg(long, value_delimiter = ',', default_values_t = SchemeKind::ALL)]
    schemes: Vec<SchemeKind>,
    /// Directory for per-scheme JSON outcome dumps; no files when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also scan this many fixed prices, re-solving the follower at each, and
    /// report the best one found next to the negotiated price.
    #[arg(long, default_value_t = 0)]
    grid: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML configuration file; absent keys keep built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override trials per sweep value.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the swept parameter (p_max_dbm or num_modules).
    #[arg(long)]
    variable: Option<SweepVariable>,
    /// Override the sweep values, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Option<Vec<f64>>,
    /// Override the schemes, comma-separated.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<SchemeKind>>,
    /// Worker threads; 0 means one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output directory for the CSV table and any plots.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write one SVG trend plot per metric.
    #[arg(long)]
    plots: bool,
}

#[derive(Args)]
struct PrintConfigArgs {
    /// TOML configuration file to merge over the defaults first.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Solve(args) => cmd_solve(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::PrintConfig(args) => cmd_print_config(args),
    }
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let mut file = FileConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        file.scenario.rng_seed = seed;
    }
    let cfg = file.scenario;
    cfg.validate()?;
    let mut channel_rng = trial_rng(cfg.rng_seed, 2 * args.trial as u64);
    let ch = generate_channels(&cfg, &mut channel_rng)?;

    println!(
        "{:<16} {:>10} {:>10} {:>10} {:>10} {:>6} {:>7} {:>6}  status",
        "scheme", "price", "U (bits)", "V", "sum rate", "on", "inner", "outer"
    );
    for scheme in args.schemes {
        let mut outcome = match scheme {
            SchemeKind::Stackelberg => {
                game::run_stackelberg_with(&ch, &cfg, StackelbergOptions::default())?
            }
            SchemeKind::RandomPricing => {
                let mut price_rng = trial_rng(cfg.rng_seed, 2 * args.trial as u64 + 1);
                game::run_random_pricing(&ch, &cfg, &mut price_rng)?
            }
            SchemeKind::DirectLink => game::run_direct_link(&ch, &cfg)?,
        };
        if args.grid > 0 && scheme != SchemeKind::DirectLink {
            let grid = leader_grid_report(&ch, &cfg, &outcome, args.grid)?;
            println!(
                "  [{}] best fixed price over {} grid points: {:.4} earning {:.4} (negotiated earns {:.4})",
                scheme, grid.grid_points, grid.best_price, grid.best_revenue, grid.equilibrium_revenue
            );
            match outcome.equilibrium.as_mut() {
                Some(report) => report.leader_grid = Some(grid),
                None => {
                    outcome.equilibrium = Some(game::EquilibriumReport {
                        follower_checks: 0,
                        follower_best_gain: f64::NEG_INFINITY,
                        leader_grid: Some(grid),
                    })
                }
            }
        }
        print_outcome_row(&outcome, cfg.num_modules);
        if let Some(dir) = &args.out {
            let path = dir.join(format!("solve_{}.json", scheme.label().replace('-', "_")));
            let json = serde_json::to_string_pretty(&outcome).context("serializing outcome")?;
            write_atomic(&path, json.as_bytes())?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn print_outcome_row(outcome: &GameOutcome, num_modules: usize) {
    let mut status = Vec::new();
    if outcome.direct_fallback {
        status.push("fallback");
    }
    if !outcome.inner_converged {
        status.push("inner-cap");
    }
    if !outcome.outer_converged {
        status.push("outer-cap");
    }
    if status.is_empty() {
        status.push("ok");
    }
    println!(
        "{:<16} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>6} {:>7} {:>6}  {}",
        outcome.scheme.label(),
        outcome.price,
        outcome.utilities.follower,
        outcome.utilities.leader,
        outcome.utilities.sum_rate,
        format!("{}/{}", outcome.utilities.triggered, num_modules),
        outcome.inner_iterations,
        outcome.outer_iterations,
        status.join(",")
    );
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut file = FileConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        file.sweep.master_seed = seed;
    }
    if let Some(trials) = args.trials {
        file.sweep.trials = trials;
    }
    if let Some(variable) = args.variable {
        file.sweep.variable = variable;
    }
    if let Some(values) = args.values {
        file.sweep.values = values;
    }
    if let Some(schemes) = args.schemes {
        file.sweep.schemes = schemes;
    }
    let spec = file.sweep_spec();
    eprintln!(
        "sweeping {} over {:?}: {} trials × {} schemes, seed {}",
        spec.variable,
        spec.values,
        spec.trials,
        spec.schemes.len(),
        spec.master_seed
    );

    let start = Instant::now();
    let output = run_sweep(&spec, args.threads)?;
    eprintln!("finished in {:.1}s", start.elapsed().as_secs_f64());
    if !output.failures.is_empty() {
        eprintln!("{} trial(s) failed and were excluded:", output.failures.len());
        for failure in output.failures.iter().take(5) {
            eprintln!(
                "  {}={} {} trial {}: {}",
                spec.variable, failure.value, failure.scheme, failure.trial, failure.message
            );
        }
    }

    print!("{}", format_table(&output.table));
    let csv_path = args.out.join(format!("sweep_{}.csv", spec.variable));
    write_atomic(&csv_path, to_csv_string(&output.table).as_bytes())?;
    println!("wrote {}", csv_path.display());
    if args.plots {
        for path in plot::render_plots(&output.table, &args.out)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn format_table(table: &ResultTable) -> String {
    use std::fmt::Write;
    let mut text = String::new();
    writeln!(
        text,
        "{:>10} {:<16} {:>6} {:>19} {:>19} {:>19} {:>6} {:>5}",
        "value", "scheme", "trials", "U ± ci", "V ± ci", "sum rate ± ci", "on", "fail"
    )
    .unwrap();
    for row in &table.rows {
        writeln!(
            text,
            "{:>10} {:<16} {:>6} {:>19} {:>19} {:>19} {:>6.2} {:>5}",
            row.sweep_value,
            row.scheme.label(),
            row.trials,
            format!("{:.4} ± {:.4}", row.mean_u, row.ci95_u),
            format!("{:.4} ± {:.4}", row.mean_v, row.ci95_v),
            format!("{:.4} ± {:.4}", row.mean_sum_rate, row.ci95_sum_rate),
            row.mean_triggered,
            row.failure_count
        )
        .unwrap();
    }
    text
}

fn cmd_print_config(args: PrintConfigArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    print!("{}", file.to_toml()?);
    Ok(())
}

/// Write through a sibling temp file and rename, so an interrupted run never
/// leaves a truncated output behind.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("moving {} into place", path.display()))?;
    Ok(())
}
