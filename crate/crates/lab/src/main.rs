use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dbar_lab::config::{ExperimentConfig, ExperimentKind};
use dbar_lab::error::{CliError, CliResult};
use dbar_lab::report::{compare_runs, RunReport};
use dbar_lab::run::{execute, output_dir, write_output};

#[derive(Parser)]
#[command(name = "lab", version, about = "Weighted dbar-Neumann experiments")]
struct Cli {
    /// Override the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    plots: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Growth conditions on the Levi eigenvalue of a weight.
    CheckWeight { config: PathBuf },
    /// Kohn-Morrey residuals under grid refinement.
    KohnMorrey { config: PathBuf },
    /// Lowest eigenvalues of the weighted box Laplacian.
    Spectrum { config: PathBuf },
    /// Tail bounds for the lowest eigenforms.
    Tail { config: PathBuf },
    /// Compactness probe.
    Probe { config: PathBuf },
    /// Property (P) certificate on a bounded domain.
    PropertyP { config: PathBuf },
    /// Diff two reports of the same kind.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Print the summary as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let (kind, path) = match cli.cmd {
        Cmd::Compare { a, b, json } => {
            let d = compare_runs(&RunReport::load(&a)?, &RunReport::load(&b)?)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&d)?);
            } else {
                println!(
                    "{} values compared, {} differ, max |delta| {:.3e}, max relative {:.3e}",
                    d.compared_values, d.differing_values, d.max_abs_delta, d.max_rel_delta
                );
                for m in &d.mismatches {
                    println!("mismatch {m}");
                }
                for t in &d.tables {
                    print!("{}", t.to_text());
                }
            }
            return Ok(());
        }
        Cmd::CheckWeight { config } => (ExperimentKind::CheckWeight, config),
        Cmd::KohnMorrey { config } => (ExperimentKind::KohnMorrey, config),
        Cmd::Spectrum { config } => (ExperimentKind::Spectrum, config),
        Cmd::Tail { config } => (ExperimentKind::Tail, config),
        Cmd::Probe { config } => (ExperimentKind::Probe, config),
        Cmd::PropertyP { config } => (ExperimentKind::PropertyP, config),
    };
    let mut cfg = ExperimentConfig::load(&path)?;
    if cfg.kind != kind {
        return Err(CliError::Config(format!(
            "{} is a {} config, not {}",
            path.display(),
            cfg.kind.name(),
            kind.name()
        )));
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.plots |= cli.plots;
    let out = execute(&cfg)?;
    let dir = output_dir(&cfg);
    write_output(&out, &dir)?;
    for w in &out.report.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", dir.join("report.json").display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
