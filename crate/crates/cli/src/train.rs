//! `train` command: config in, checkpoint and loss trace out.

use std::fs;
use std::path::Path;

use simdreg_core::model::data::{Dataset, SyntheticTask};
use simdreg_core::model::train::{train_with, TraceRow, TrainConfig, TrainOutcome};

use crate::checkpoint::Checkpoint;
use crate::error::{CliError, Result};

/// Synthetic train/validation split for a config; fully determined by its seed.
pub fn dataset_for(cfg: &TrainConfig) -> Dataset {
    SyntheticTask::new(cfg.model, cfg.data, cfg.seed).dataset(cfg.seed.wrapping_add(1))
}

pub fn write_trace(rows: &[TraceRow], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn run_training(cfg: &TrainConfig, on_row: impl FnMut(&TraceRow)) -> Result<TrainOutcome> {
    let data = dataset_for(cfg);
    Ok(train_with(cfg, &data, on_row)?)
}

/// Train and write both output files.
pub fn cmd_train(
    cfg: &TrainConfig,
    checkpoint: &Path,
    trace: &Path,
    verbose: bool,
) -> Result<TrainOutcome> {
    let out = run_training(cfg, |r| {
        if verbose {
            eprintln!(
                "step {:>7}  nll {:>9.4}  reg {:>10.3}  total {:>9.4}  sparsity {:.3}",
                r.step, r.nll, r.reg, r.total, r.sparsity
            );
        }
    })?;
    write_trace(&out.trace, trace)?;
    Checkpoint::from_outcome(cfg, &out).save(checkpoint)?;
    Ok(out)
}
