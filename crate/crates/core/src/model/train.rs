//! Teacher-forced training with regularization and gradual group pruning.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::data::{Dataset, SignalSequence};
use super::decoder::{sequence_backward, sequence_nll};
use super::{DecoderParams, DecoderShape};
use crate::error::{Error, Result};
use crate::pruning::{pruning_step, MaskStore, PruneSchedule};
use crate::real::Real;
use crate::regularizers::{combined_objective, GroupSpec, RegularizerKind};

use super::data::DataConfig;

/// Regularizer selected in a training configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum RegularizerChoice {
    None,
    Lasso,
    #[cfg_attr(feature = "serde", serde(rename = "glasso"))]
    GroupLassoColumn,
    #[default]
    Proposed,
}

impl RegularizerChoice {
    pub fn name(&self) -> &'static str {
        match self {
            RegularizerChoice::None => "none",
            RegularizerChoice::Lasso => "lasso",
            RegularizerChoice::GroupLassoColumn => "glasso",
            RegularizerChoice::Proposed => "proposed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub lambda: f64,
    pub regularizer: RegularizerChoice,
    pub group_size: usize,
    /// `None` disables pruning.
    pub schedule: Option<PruneSchedule>,
    pub model: DecoderShape,
    pub data: DataConfig,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub total_steps: u64,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    /// Steps between trace rows.
    pub log_interval: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            regularizer: RegularizerChoice::Proposed,
            group_size: 16,
            schedule: Some(PruneSchedule {
                target_density: 0.3,
                ramp_start: 8_000,
                ramp_length: 8_000,
                recompute_interval: 100,
            }),
            model: DecoderShape::default(),
            data: DataConfig::default(),
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            total_steps: 20_000,
            batch_size: 4,
            seed: 0,
            log_interval: 100,
        }
    }
}

impl TrainConfig {
    pub fn group(&self) -> Result<GroupSpec> {
        GroupSpec::new(self.group_size).map_err(|_| Error::InvalidConfig {
            field: "group_size",
            reason: "must be at least 1".into(),
        })
    }

    pub fn regularizer_kind(&self) -> Result<RegularizerKind> {
        Ok(match self.regularizer {
            RegularizerChoice::None => RegularizerKind::None,
            RegularizerChoice::Lasso => RegularizerKind::Lasso,
            RegularizerChoice::GroupLassoColumn => RegularizerKind::GroupLassoColumn,
            RegularizerChoice::Proposed => RegularizerKind::ProposedGroup(self.group()?),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |field: &'static str, reason: &str| Error::InvalidConfig {
            field,
            reason: reason.into(),
        };
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", "must be a finite value >= 0"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate", "must be a finite value > 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(invalid("beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid("beta2", "must lie in [0, 1)"));
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(invalid("adam_eps", "must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be at least 1"));
        }
        if self.log_interval == 0 {
            return Err(invalid("log_interval", "must be at least 1"));
        }
        if self.data.train_sequences == 0 {
            return Err(invalid("data.train_sequences", "must be at least 1"));
        }
        if self.data.valid_sequences == 0 {
            return Err(invalid("data.valid_sequences", "must be at least 1"));
        }
        if self.data.segment_steps == 0 {
            return Err(invalid("data.segment_steps", "must be at least 1"));
        }
        if let Some(s) = &self.schedule {
            s.validate()?;
        }
        self.model.validate(self.group()?)
    }
}

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRow {
    pub step: u64,
    /// Mean training NLL per sample vector over the logging window.
    pub nll: f64,
    /// Unscaled regularization value at the end of the window.
    pub reg: f64,
    /// `nll + lambda * reg`.
    pub total: f64,
    /// Pruned groups over all pruned matrices.
    pub sparsity: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: DecoderParams<f32>,
    pub masks: MaskStore,
    pub trace: Vec<TraceRow>,
    /// Validation NLL right before the pruning ramp starts, when there is one.
    pub pre_prune_valid_nll: Option<f64>,
    pub valid_nll: f64,
    pub steps: u64,
}

/// Loss decomposition of one minibatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub nll: f64,
    pub reg: f64,
    pub total: f64,
}

/// Mean NLL over the batch plus `lambda * reg` over the pruned matrices, with
/// gradients written to `grads` (overwritten, not accumulated).
pub fn batch_loss_grad<T: Real>(
    p: &DecoderParams<T>,
    batch: &[&SignalSequence],
    kind: RegularizerKind,
    lambda: f64,
    grads: &mut DecoderParams<T>,
) -> Result<LossParts> {
    for t in grads.tensors_mut() {
        t.iter_mut().for_each(|v| *v = T::zero());
    }
    let count: usize = batch.iter().map(|s| s.steps() * p.shape.multi).sum();
    let scale = T::lit(1.0 / count as f64);
    let mut sum = 0.0;
    for seq in batch {
        sum += sequence_backward(p, seq, scale, grads)?;
    }
    let nll = sum / count as f64;
    let mut reg = 0.0;
    if !matches!(kind, RegularizerKind::None) {
        let lam = T::lit(lambda);
        for (w, g) in p.pruned().into_iter().zip(grads.pruned_mut()) {
            reg += if lambda > 0.0 {
                kind.accumulate_grad(w, lam, g)?.as_f64()
            } else {
                kind.value(w)?.as_f64()
            };
        }
    }
    Ok(LossParts {
        nll,
        reg,
        total: combined_objective(nll, reg, lambda),
    })
}

/// Mean NLL per sample vector over a set of sequences.
pub fn evaluate<T: Real>(p: &DecoderParams<T>, seqs: &[SignalSequence]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0;
    for s in seqs {
        let (a, b) = sequence_nll(p, s)?;
        sum += a;
        count += b;
    }
    Ok(sum / count as f64)
}

/// Adam with bias correction over the flattened parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, sizes: &[usize]) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut DecoderParams<f32>, grads: &DecoderParams<f32>) {
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let step = (self.lr * c2.sqrt() / c1) as f32;
        let eps = (self.eps * c2.sqrt()) as f32;
        for (k, (p, g)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .enumerate()
        {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= step * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}

/// Train with the default (silent) observer.
pub fn train(cfg: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    train_with(cfg, data, |_| {})
}

/// Train, calling `on_row` for every trace row as it is produced.
pub fn train_with(
    cfg: &TrainConfig,
    data: &Dataset,
    mut on_row: impl FnMut(&TraceRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let spec = cfg.group()?;
    let kind = cfg.regularizer_kind()?;
    if data.train.is_empty() || data.valid.is_empty() {
        return Err(Error::InvalidConfig {
            field: "data",
            reason: format!(
                "need training and validation sequences, got {} and {}",
                data.train.len(),
                data.valid.len()
            ),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = DecoderParams::<f32>::init(cfg.model, &mut rng);
    let mut grads = DecoderParams::<f32>::zeros(cfg.model);
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut adam = Adam::new(
        cfg.learning_rate,
        cfg.beta1,
        cfg.beta2,
        cfg.adam_eps,
        &sizes,
    );
    let mut masks = MaskStore::all_ones(params.pruned().iter().map(|w| w.shape()));
    let mut trace = Vec::new();
    let mut pre_prune = None;
    let mut window = (0.0f64, 0u64);
    let mut batch: Vec<&SignalSequence> = Vec::with_capacity(cfg.batch_size);

    if let Some(s) = &cfg.schedule {
        if s.ramp_start == 0 {
            pre_prune = Some(evaluate(&params, &data.valid)?);
        }
    }

    for step in 1..=cfg.total_steps {
        batch.clear();
        for _ in 0..cfg.batch_size {
            batch.push(&data.train[rng.random_range(0..data.train.len())]);
        }
        let parts = batch_loss_grad(&params, &batch, kind, cfg.lambda, &mut grads)?;
        if !parts.total.is_finite() {
            return Err(Error::Diverged { step });
        }
        adam.step(&mut params, &grads);
        if let Some(s) = &cfg.schedule {
            pruning_step(&mut masks, &mut params.pruned_mut(), s, spec, step)?;
            if step == s.ramp_start {
                pre_prune = Some(evaluate(&params, &data.valid)?);
            }
        }
        window.0 += parts.nll;
        window.1 += 1;
        if step % cfg.log_interval == 0 || step == cfg.total_steps {
            let nll = window.0 / window.1 as f64;
            let reg = if cfg.lambda > 0.0 {
                parts.reg
            } else {
                params
                    .pruned()
                    .iter()
                    .map(|w| kind.value(*w).map(|v| v.as_f64()))
                    .sum::<Result<f64>>()?
            };
            let row = TraceRow {
                step,
                nll,
                reg,
                total: combined_objective(nll, reg, cfg.lambda),
                sparsity: masks.group_sparsity(spec),
            };
            if !(row.nll.is_finite() && row.total.is_finite()) {
                return Err(Error::Diverged { step });
            }
            on_row(&row);
            trace.push(row);
            window = (0.0, 0);
        }
    }

    let valid_nll = evaluate(&params, &data.valid)?;
    Ok(TrainOutcome {
        params,
        masks,
        trace,
        pre_prune_valid_nll: pre_prune,
        valid_nll,
        steps: cfg.total_steps,
    })
}
