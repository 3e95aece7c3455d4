//! Single-threaded timing harness for the gemv kernels and the decode loop.

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use simdreg_core::model::data::SyntheticTask;
use simdreg_core::model::infer::InferenceDecoder;
use simdreg_core::model::SampleGuard;
use simdreg_core::pruning::masked;
use simdreg_core::regularizers::GroupSpec;
use simdreg_core::sparse::{csr_from_masked_dense, from_masked_dense};
use simdreg_core::{compute_group_mask, DenseMatrix, MatVec};

use crate::checkpoint::Checkpoint;
use crate::error::{CliError, Result};

pub const MIN_REPS: usize = 30;

/// Order statistics of a set of wall-clock samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub reps: usize,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

impl TimingStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (s.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
        };
        Self {
            reps: s.len(),
            median: q(0.5),
            p10: q(0.1),
            p90: q(0.9),
        }
    }
}

/// Warmup iterations discarded before timing `reps` runs.
pub fn warmup_for(reps: usize) -> usize {
    (reps / 10).max(5)
}

fn time_reps(reps: usize, mut f: impl FnMut()) -> Vec<f64> {
    for _ in 0..warmup_for(reps) {
        f();
    }
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_nanos() as f64
        })
        .collect()
}

pub fn machine_descriptor() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|v| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    format!(
        "{cpu}; {}-{}; single thread; {} build",
        std::env::consts::ARCH,
        std::env::consts::OS,
        if cfg!(debug_assertions) {
            "debug"
        } else {
            "optimized"
        }
    )
}

fn check_reps(reps: usize) -> Result<()> {
    if reps < MIN_REPS {
        return Err(CliError::Usage(format!(
            "--reps must be at least {MIN_REPS}, got {reps}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GemvRecord {
    pub rows: usize,
    pub cols: usize,
    pub group_size: usize,
    pub sparsity: f64,
    pub kernel: String,
    pub warmup: usize,
    /// Nanoseconds per gemv.
    pub time_ns: TimingStats,
    /// Dense median over this kernel's median.
    pub speedup_vs_dense: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GemvReport {
    pub machine: String,
    pub records: Vec<GemvRecord>,
}

impl GemvReport {
    pub fn find(&self, size: usize, sparsity: f64, kernel: &str) -> Option<&GemvRecord> {
        self.records
            .iter()
            .find(|r| r.rows == size && r.kernel == kernel && (r.sparsity - sparsity).abs() < 1e-12)
    }

    pub fn table(&self) -> String {
        let mut out = format!("# {}\n", self.machine);
        out.push_str(&format!(
            "{:>6} {:>4} {:>8} {:>6} {:>12} {:>12} {:>12} {:>8}\n",
            "size", "G", "sparsity", "kernel", "median_ns", "p10_ns", "p90_ns", "speedup"
        ));
        for r in &self.records {
            out.push_str(&format!(
                "{:>6} {:>4} {:>8.3} {:>6} {:>12.0} {:>12.0} {:>12.0} {:>8.2}\n",
                r.rows,
                r.group_size,
                r.sparsity,
                r.kernel,
                r.time_ns.median,
                r.time_ns.p10,
                r.time_ns.p90,
                r.speedup_vs_dense
            ));
        }
        out
    }
}

/// Dense, CSR and block-sparse gemv on the same group-masked random matrix.
pub fn bench_gemv(
    sizes: &[usize],
    sparsities: &[f64],
    group: usize,
    reps: usize,
    seed: u64,
) -> Result<GemvReport> {
    check_reps(reps)?;
    let spec = GroupSpec::new(group).map_err(|e| CliError::Usage(e.to_string()))?;
    for &n in sizes {
        if n == 0 || n % group != 0 {
            return Err(CliError::Usage(format!(
                "size {n} is not a positive multiple of group size {group}"
            )));
        }
    }
    for &s in sparsities {
        if !(0.0..1.0).contains(&s) {
            return Err(CliError::Usage(format!("sparsity {s} must lie in [0, 1)")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for &n in sizes {
        for &s in sparsities {
            let w = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0f32..1.0));
            let x: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let mask = compute_group_mask(&w, spec, s)?;
            let dense = masked(&w, &mask)?;
            let csr = csr_from_masked_dense(&w, &mask)?;
            let bsr = from_masked_dense(&w, &mask, spec)?;
            let mut y = vec![0.0f32; n];
            let mut run = |m: &dyn MatVec| {
                let samples = time_reps(reps, || {
                    m.gemv_into(black_box(&x), black_box(&mut y));
                });
                TimingStats::from_samples(&samples)
            };
            let timings = [
                ("dense", run(&dense)),
                ("csr", run(&csr)),
                ("bsr", run(&bsr)),
            ];
            let dense_median = timings[0].1.median;
            for (kernel, t) in timings {
                records.push(GemvRecord {
                    rows: n,
                    cols: n,
                    group_size: group,
                    sparsity: mask.element_sparsity(),
                    kernel: kernel.into(),
                    warmup: warmup_for(reps),
                    time_ns: t,
                    speedup_vs_dense: dense_median / t.median,
                });
            }
        }
    }
    Ok(GemvReport {
        machine: machine_descriptor(),
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtfRecord {
    pub path: String,
    pub warmup: usize,
    /// Seconds spent in the decode loop per run.
    pub t_inference: TimingStats,
    pub rtf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtfReport {
    pub machine: String,
    pub sample_rate: f64,
    pub bands: usize,
    pub multi: usize,
    pub forward_steps: usize,
    /// Seconds of signal produced per run.
    pub t_data: f64,
    pub group_size: usize,
    /// Fraction of pruned groups over the pruned matrices.
    pub sparsity: f64,
    pub records: Vec<RtfRecord>,
    /// Dense RTF over block-sparse RTF.
    pub speedup: f64,
}

impl RtfReport {
    pub fn rtf(&self, path: &str) -> Option<f64> {
        self.records.iter().find(|r| r.path == path).map(|r| r.rtf)
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "# {}\n# T_data = {:.3} s ({} steps at {} Hz, B={}, M={}), sparsity {:.3}\n",
            self.machine,
            self.t_data,
            self.forward_steps,
            self.sample_rate,
            self.bands,
            self.multi,
            self.sparsity
        );
        out.push_str(&format!(
            "{:>13} {:>12} {:>12} {:>12} {:>8}\n",
            "path", "median_s", "p10_s", "p90_s", "rtf"
        ));
        for r in &self.records {
            out.push_str(&format!(
                "{:>13} {:>12.6} {:>12.6} {:>12.6} {:>8.4}\n",
                r.path, r.t_inference.median, r.t_inference.p10, r.t_inference.p90, r.rtf
            ));
        }
        out.push_str(&format!("speedup {:.2}\n", self.speedup));
        out
    }
}

/// `T_inference / T_data`.
pub fn rtf(t_inference: f64, t_data: f64) -> f64 {
    t_inference / t_data
}

/// Time autoregressive generation of `seconds` of signal on both execution
/// paths. Only the decode loop is timed.
pub fn bench_rtf(
    ck: &Checkpoint,
    seconds: f64,
    sample_rate: f64,
    reps: usize,
    seed: u64,
) -> Result<RtfReport> {
    check_reps(reps)?;
    if !(seconds > 0.0 && sample_rate > 0.0) {
        return Err(CliError::Usage(
            "--seconds and --sample-rate must be positive".into(),
        ));
    }
    let cfg = &ck.config;
    let shape = cfg.model;
    let spec = cfg.group()?;
    let params = ck.params()?;
    let masks = ck.mask_store()?;

    let vectors_per_second = sample_rate / shape.bands as f64;
    let forward_steps =
        ((seconds * vectors_per_second / shape.multi as f64).round() as usize).max(1);
    let t_data = (forward_steps * shape.multi) as f64 / vectors_per_second;

    let task = SyntheticTask::new(shape, cfg.data, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seq = task.sequence(forward_steps, &mut rng);
    let cond = &seq.cond[..forward_steps * shape.cond_dim];
    let init = seq.prev(0).to_vec();
    let guard = SampleGuard::default();

    let mut dense = InferenceDecoder::dense(&params, &masks)?;
    let mut sparse = InferenceDecoder::block_sparse(&params, &masks, spec)?;

    // Alternate the two paths rep by rep so slow drifts in machine speed hit
    // both medians alike.
    let sampling_rng = || ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (mut dense_t, mut sparse_t) = (Vec::with_capacity(reps), Vec::with_capacity(reps));
    for rep in 0..warmup_for(reps) + reps {
        let t = Instant::now();
        dense.reset();
        black_box(dense.generate(&init, cond, &mut sampling_rng(), &guard)?);
        let td = t.elapsed().as_secs_f64();
        let t = Instant::now();
        sparse.reset();
        black_box(sparse.generate(&init, cond, &mut sampling_rng(), &guard)?);
        let ts = t.elapsed().as_secs_f64();
        if rep >= warmup_for(reps) {
            dense_t.push(td);
            sparse_t.push(ts);
        }
    }

    let records: Vec<RtfRecord> = [("dense", dense_t), ("block_sparse", sparse_t)]
        .into_iter()
        .map(|(path, t)| {
            let stats = TimingStats::from_samples(&t);
            RtfRecord {
                path: path.into(),
                warmup: warmup_for(reps),
                t_inference: stats,
                rtf: rtf(stats.median, t_data),
            }
        })
        .collect();
    let speedup = records[0].rtf / records[1].rtf;
    Ok(RtfReport {
        machine: machine_descriptor(),
        sample_rate,
        bands: shape.bands,
        multi: shape.multi,
        forward_steps,
        t_data,
        group_size: spec.size(),
        sparsity: masks.group_sparsity(spec),
        records,
        speedup,
    })
}
