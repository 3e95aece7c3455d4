use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use simdreg_core::regularizers::GroupSpec;

use crate::bench::{bench_gemv, bench_rtf};
use crate::checkpoint::Checkpoint;
use crate::config::load_config;
use crate::error::{CliError, Result};
use crate::heatmap::{csv_path_for, misaligned_zero_runs, write_heatmap};
use crate::train::cmd_train;

#[derive(Debug, Parser)]
#[command(
    name = "simdreg",
    version,
    about = "Group-regularized sparse GRU decoder experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a decoder and write a checkpoint plus a loss-trace CSV.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "checkpoint.json")]
        checkpoint: PathBuf,
        #[arg(long, default_value = "trace.csv")]
        trace: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Time dense, CSR and block-sparse gemv on square random matrices.
    BenchGemv {
        #[arg(long, value_delimiter = ',', default_value = "256,1024")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.7")]
        sparsity: Vec<f64>,
        #[arg(long, default_value_t = 16)]
        group: usize,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Real-time factor of autoregressive generation on both execution paths.
    BenchRtf {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        #[arg(long, default_value_t = 22050.0)]
        sample_rate: f64,
        #[arg(long, default_value_t = 30)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export a weight-magnitude heatmap (PGM) and the raw values (CSV).
    Heatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "fc1")]
        layer: String,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the PGM path with a `.csv` extension.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| CliError::io(path, e))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            checkpoint,
            trace,
            seed,
            quiet,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = cmd_train(&cfg, &checkpoint, &trace, !quiet)?;
            let last = out.trace.last();
            println!(
                "trained {} steps: valid nll {:.4}, sparsity {:.3}",
                out.steps,
                out.valid_nll,
                last.map_or(0.0, |r| r.sparsity)
            );
            println!(
                "checkpoint {}  trace {}",
                checkpoint.display(),
                trace.display()
            );
        }
        Command::BenchGemv {
            sizes,
            sparsity,
            group,
            reps,
            out,
            seed,
        } => {
            let report = bench_gemv(&sizes, &sparsity, group, reps, seed)?;
            print!("{}", report.table());
            match out {
                Some(p) => write_json(&p, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        Command::BenchRtf {
            checkpoint,
            seconds,
            sample_rate,
            reps,
            out,
            seed,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let report = bench_rtf(&ck, seconds, sample_rate, reps, seed)?;
            print!("{}", report.table());
            match out {
                Some(p) => write_json(&p, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        Command::Heatmap {
            checkpoint,
            layer,
            out,
            csv,
            seed: _,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let t = ck.tensor(&layer)?;
            let csv = csv.unwrap_or_else(|| csv_path_for(&out));
            write_heatmap(&t.values, t.rows, t.cols, &out, &csv)?;
            let spec = GroupSpec::new(ck.config.group_size)?;
            let zero = t.values.iter().filter(|v| **v == 0.0).count();
            println!(
                "{} {}x{}: {:.1}% zeros, {} zero runs off the {}-column grid",
                t.name,
                t.rows,
                t.cols,
                100.0 * zero as f64 / t.values.len().max(1) as f64,
                misaligned_zero_runs(&t.values, t.cols, spec.size()).len(),
                spec.size()
            );
            println!("wrote {} and {}", out.display(), csv.display());
        }
    }
    Ok(())
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
