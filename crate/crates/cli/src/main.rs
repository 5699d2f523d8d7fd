//! Command-line front end: single-instance optimization, figure sweeps,
//! and the gradient self check.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
//! error.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use risrank_core::channel::{
    realization_rng, sample_rayleigh, ChannelRealization, RisPhases, SeedProvenance,
};
use risrank_core::effective_rank::gradient_self_check;
use risrank_core::evaluation::{
    records_to_csv, records_to_json, run_monte_carlo, SweepVariable,
};
use risrank_core::optimizer::alternate;

use config::FileConfig;

#[derive(Debug)]
pub enum CliError {
    /// Configuration problem: exit code 2.
    Config(String),
    /// Failure during an otherwise valid run: exit code 1.
    Runtime(String),
}

#[derive(Parser)]
#[command(
    name = "risrank",
    version,
    about = "RIS-assisted MU-MISO capacity simulator: effective-rank phase optimization with MRT/MMSE water-filling precoding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one seeded realization and print the trace summary
    Single(SingleArgs),
    /// Monte-Carlo sweep over SNR (dB)
    SweepSnr(SweepArgs),
    /// Monte-Carlo sweep over the RIS element count N
    SweepN(SweepArgs),
    /// Monte-Carlo sweep over the BS antenna count M
    SweepM(SweepArgs),
    /// Verify the analytic phase gradient against finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the realization count
    #[arg(long)]
    realizations: Option<usize>,
    /// Progress logging on stderr (repeat for more)
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output file (default: <subcommand>.<format>)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Args)]
struct SingleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Write the per-scheme optimization traces as JSON
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Load the channel from a JSON dump instead of sampling
    #[arg(long, value_name = "PATH")]
    channel: Option<PathBuf>,
    /// Dump the sampled channel as JSON
    #[arg(long, value_name = "PATH")]
    dump_channel: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of seeded instances
    #[arg(long, default_value_t = 50)]
    instances: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Single(args) => run_single(args),
        Command::SweepSnr(args) => run_sweep(SweepVariable::SnrDb, "sweep-snr", args),
        Command::SweepN(args) => run_sweep(SweepVariable::RisElements, "sweep-n", args),
        Command::SweepM(args) => run_sweep(SweepVariable::TxAntennas, "sweep-m", args),
        Command::Gradcheck(args) => run_gradcheck(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn load_with_overrides(common: &CommonArgs) -> Result<FileConfig, CliError> {
    let mut fc = FileConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        fc.master_seed = seed;
    }
    if let Some(realizations) = common.realizations {
        fc.realizations = realizations;
    }
    Ok(fc)
}

fn run_sweep(variable: SweepVariable, name: &str, args: SweepArgs) -> Result<(), CliError> {
    let fc = load_with_overrides(&args.common)?;
    let cfg = fc.simulation(variable);
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if args.common.verbose > 0 {
        eprintln!(
            "{name}: M={} K={} N={} Pt={} sigma2={} seed={} realizations={} values={:?}",
            cfg.dims.m,
            cfg.dims.k,
            cfg.dims.n,
            cfg.pt_watts,
            cfg.sigma2_watts,
            cfg.master_seed,
            cfg.realizations,
            cfg.sweep.values
        );
    }
    let started = Instant::now();
    let records = run_monte_carlo(&cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    if args.common.verbose > 0 {
        eprintln!("{name}: finished in {:.2?}", started.elapsed());
    }
    let (text, extension) = match args.format {
        OutputFormat::Csv => (records_to_csv(&records), "csv"),
        OutputFormat::Json => (records_to_json(&records), "json"),
    };
    let path = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("{name}.{extension}")));
    output::write_atomic(&path, &text)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
    println!("wrote {} records to {}", records.len(), path.display());
    Ok(())
}

fn run_single(args: SingleArgs) -> Result<(), CliError> {
    let fc = load_with_overrides(&args.common)?;
    let mut rng = realization_rng(fc.master_seed, 0);

    let (ch, provenance) = match &args.channel {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read channel {}: {e}", path.display()))
            })?;
            let (ch, seed) = ChannelRealization::from_json(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            (ch, seed)
        }
        None => {
            let ch = sample_rayleigh(fc.dims, fc.direct_link, &mut rng);
            let provenance = SeedProvenance {
                master_seed: fc.master_seed,
                realization: 0,
            };
            (ch, Some(provenance))
        }
    };
    let theta0 = RisPhases::random(ch.dims.n, &mut rng);

    if let Some(path) = &args.dump_channel {
        output::write_atomic(path, &ch.to_json(provenance))
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
        println!("wrote channel dump to {}", path.display());
    }

    let mut traces = Vec::new();
    for &scheme in &fc.schemes {
        let trace = alternate(
            &ch,
            scheme,
            fc.pt_watts,
            fc.sigma2_watts,
            &theta0,
            &fc.optimizer,
        )
        .map_err(|e| CliError::Runtime(format!("scheme {scheme}: {e}")))?;
        let status = if trace.converged {
            "converged"
        } else {
            "capped"
        };
        println!(
            "{scheme}: E {:.4} (from {:.4}), C {:.4} bits/s/Hz (from {:.4}), {} outer iterations, {status}",
            trace.final_effective_rank(),
            trace.initial_effective_rank,
            trace.final_capacity(),
            trace.initial_capacity,
            trace.rows.len(),
        );
        if args.common.verbose > 0 {
            for row in &trace.rows {
                eprintln!(
                    "  iter {:>3}: E {:.6} C {:.6} inner {:>4} alpha {:.3e}",
                    row.iteration,
                    row.effective_rank,
                    row.capacity_bits,
                    row.inner_steps,
                    row.step_size
                );
            }
        }
        traces.push((scheme, trace));
    }

    if let Some(path) = &args.out {
        let entries: Vec<serde_json::Value> = traces
            .iter()
            .map(|(scheme, trace)| {
                let trace_value: serde_json::Value =
                    serde_json::from_str(&trace.to_json()).expect("trace json is valid");
                serde_json::json!({ "scheme": scheme.to_string(), "trace": trace_value })
            })
            .collect();
        let text = serde_json::to_string_pretty(&entries).expect("traces are serializable");
        output::write_atomic(path, &text)
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
        println!("wrote traces to {}", path.display());
    }
    Ok(())
}

fn run_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    let fc = load_with_overrides(&args.common)?;
    let report = gradient_self_check(fc.dims, fc.pt_watts, args.instances, fc.master_seed, 1e-6)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "gradcheck: {} instances, max relative error {:e}",
        report.instances, report.max_rel_error
    );
    if report.max_rel_error >= 1e-4 {
        return Err(CliError::Runtime(format!(
            "analytic gradient deviates from finite differences: {:e} >= 1e-4",
            report.max_rel_error
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn seed_override_applies() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"schema_version":1,"master_seed":3}"#).unwrap();
        let args = CommonArgs {
            config: path,
            seed: Some(7),
            realizations: None,
            verbose: 0,
        };
        let fc = load_with_overrides(&args).unwrap();
        assert_eq!(fc.master_seed, 7);
    }
}
