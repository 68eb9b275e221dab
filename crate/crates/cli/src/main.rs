//! `fairtrust` command line: write a config template, generate synthetic
//! data, run the pipeline, and re-emit plots from a stored report.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use fairtrust::config::{load_config, template};
use fairtrust::pipeline::{run_pipeline, RunOptions};
use fairtrust::report::{emit_plots, RunReport};
use fairtrust::synth::{generate_synthetic, SynthConfig};

// Training allocates and frees many mid-sized buffers per mini-batch; the
// system allocator keeps returning that memory to the OS and faulting it back.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(
    name = "fairtrust",
    version,
    about = "Counterfactual trust scoring for batched reward classifiers"
)]
struct Cli {
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a commented configuration template.
    Init {
        #[arg(long, default_value = "fairtrust.toml")]
        config: PathBuf,
        /// Input data path written into the template.
        #[arg(long, default_value = "synthetic.csv")]
        input: String,
        /// Overwrite an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Generate a synthetic news corpus.
    Synth {
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "synthetic.csv")]
        out: PathBuf,
    },
    /// Run the full pipeline.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-emit plot tables from a stored report.
    Report {
        /// `report.json`, or the run directory holding it.
        #[arg(long)]
        report: PathBuf,
        /// Defaults to `plots/` next to the report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code_of(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<fairtrust::pipeline::PipelineError>() {
        return e.exit_code() as u8;
    }
    if let Some(e) = err.downcast_ref::<fairtrust::Error>() {
        return e.exit_code() as u8;
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_of(&err))
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Init { config, input, force } => {
            if config.exists() && !force {
                anyhow::bail!("{} already exists (use --force to overwrite)", config.display());
            }
            std::fs::write(&config, template(&input)).with_context(|| format!("writing {}", config.display()))?;
            if !quiet {
                println!("wrote {}", config.display());
            }
        }
        Command::Synth { n, k, seed, out } => {
            generate_synthetic(&SynthConfig { n, k, seed }, &out)?;
            if !quiet {
                println!("wrote {n} synthetic records to {}", out.display());
            }
        }
        Command::Run { config, seed, out } => {
            let loaded = load_config(&config)?;
            let opts = RunOptions {
                seed,
                output_dir: out,
                verbose: !quiet,
            };
            let outcome = run_pipeline(&loaded, &opts).map_err(|e| {
                if let Some(q) = &e.quarantine {
                    eprintln!("partial outputs moved to {}", q.display());
                }
                anyhow::Error::new(e)
            })?;
            if !quiet {
                let r = &outcome.report;
                println!("batch  drift   trust  smoothed");
                for (d, t) in r.drift.iter().zip(&r.trust.rows) {
                    let flag = if r.alerts.contains(&t.batch) { "  alert" } else { "" };
                    println!(
                        "{:>5}  {:.3}   {:.3}  {:.3}{flag}",
                        t.batch, d.drift_score, t.trust, t.smoothed
                    );
                }
                println!("outputs in {}", outcome.output_dir.display());
            }
        }
        Command::Report { report, out } => {
            let path = if report.is_dir() {
                report.join("report.json")
            } else {
                report
            };
            let loaded = RunReport::load(&path)?;
            let dir = out.unwrap_or_else(|| {
                path.parent()
                    .map(|p| p.join("plots"))
                    .unwrap_or_else(|| PathBuf::from("plots"))
            });
            let files = emit_plots(&loaded, &dir)?;
            if !quiet {
                for f in files {
                    println!("wrote {}", f.display());
                }
            }
        }
    }
    Ok(())
}
