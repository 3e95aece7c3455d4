use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simdreg_core::model::data::{
    global_gaussian_baseline, DataConfig, SignalSequence, SyntheticTask,
};
use simdreg_core::model::decoder::forward_step;
use simdreg_core::model::train::{batch_loss_grad, train, RegularizerChoice, TrainConfig};
use simdreg_core::model::{DecoderParams, DecoderShape};
use simdreg_core::regularizers::GroupSpec;
use simdreg_core::PruneSchedule;

fn small_config() -> TrainConfig {
    TrainConfig {
        model: DecoderShape {
            bands: 2,
            multi: 2,
            cond_dim: 12,
            fc1_units: 16,
            hidden: 32,
            fc2_units: 16,
        },
        data: DataConfig {
            train_sequences: 32,
            valid_sequences: 8,
            segment_steps: 8,
            ..DataConfig::default()
        },
        schedule: Some(PruneSchedule::new(0.3, 100, 200, 20).unwrap()),
        learning_rate: 3e-3,
        total_steps: 400,
        batch_size: 2,
        log_interval: 50,
        ..TrainConfig::default()
    }
}

#[test]
fn schedule_reaches_seventy_percent_per_matrix() {
    let cfg = small_config();
    let data = SyntheticTask::new(cfg.model, cfg.data, 1).dataset(2);
    let out = train(&cfg, &data).unwrap();
    let spec = GroupSpec::default();
    for m in out.masks.masks() {
        let tol = 1.0 / m.group_count(spec) as f64;
        assert!((m.group_sparsity(spec) - 0.7).abs() <= tol + 1e-12);
        assert!(m.is_group_constant(spec));
    }
    for (w, m) in out.params.pruned().into_iter().zip(out.masks.masks()) {
        for (v, keep) in w.as_slice().iter().zip(m.bits()) {
            assert!(*keep || *v == 0.0);
        }
    }
    assert!(out.pre_prune_valid_nll.is_some());
    assert!(out.trace.windows(2).all(|w| w[0].step < w[1].step));
    assert!((out.trace.last().unwrap().sparsity - 0.7).abs() < 0.05);
}

#[test]
fn training_is_deterministic() {
    let cfg = TrainConfig {
        total_steps: 120,
        ..small_config()
    };
    let data = SyntheticTask::new(cfg.model, cfg.data, 1).dataset(2);
    let a = train(&cfg, &data).unwrap();
    let b = train(&cfg, &data).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.params, b.params);
}

#[test]
fn unregularized_training_beats_global_gaussian() {
    let cfg = TrainConfig {
        lambda: 0.0,
        regularizer: RegularizerChoice::None,
        schedule: None,
        total_steps: 1500,
        ..small_config()
    };
    let data = SyntheticTask::new(cfg.model, cfg.data, 3).dataset(4);
    let out = train(&cfg, &data).unwrap();
    assert!(out.trace.iter().all(|r| r.sparsity == 0.0));
    let baseline = global_gaussian_baseline(&data);
    assert!(out.valid_nll < baseline, "{} vs {baseline}", out.valid_nll);
}

fn relu_pattern(p: &DecoderParams<f64>, batch: &[&SignalSequence]) -> Vec<bool> {
    let mut out = Vec::new();
    for seq in batch {
        let mut h = vec![0.0; p.shape.hidden];
        for k in 0..seq.steps() {
            let input: Vec<f64> = seq
                .prev(k)
                .iter()
                .chain(seq.cond(k))
                .map(|&v| v as f64)
                .collect();
            let cache = forward_step(p, &h, input);
            out.extend(cache.a1.iter().chain(&cache.a2).map(|&v| v > 0.0));
            h = cache.hidden().to_vec();
        }
    }
    out
}

#[test]
fn total_loss_gradient_matches_finite_differences() {
    let cfg = small_config();
    let task = SyntheticTask::new(cfg.model, cfg.data, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let seqs: Vec<_> = (0..2).map(|_| task.sequence(4, &mut rng)).collect();
    let batch: Vec<_> = seqs.iter().collect();
    let mut p = DecoderParams::<f64>::init(cfg.model, &mut rng);
    for t in p.tensors_mut() {
        t.iter_mut().for_each(|v| *v += rng.random_range(-0.2..0.2));
    }
    let kind = cfg.regularizer_kind().unwrap();
    let lambda = 1e-2;
    let mut grads = DecoderParams::<f64>::zeros(cfg.model);
    batch_loss_grad(&p, &batch, kind, lambda, &mut grads).unwrap();
    let mut scratch = DecoderParams::<f64>::zeros(cfg.model);
    let sizes: Vec<usize> = p.tensors().iter().map(|t| t.len()).collect();
    let h = 1e-3;
    let mut checked = 0;
    while checked < 20 {
        let t = rng.random_range(0..sizes.len());
        let i = rng.random_range(0..sizes[t]);
        let orig = p.tensors()[t][i];
        // The loss has ReLU kinks; a stencil that straddles one measures no derivative.
        p.tensors_mut()[t][i] = orig + h;
        let pattern_up = relu_pattern(&p, &batch);
        p.tensors_mut()[t][i] = orig - h;
        let pattern_down = relu_pattern(&p, &batch);
        p.tensors_mut()[t][i] = orig;
        if pattern_up != pattern_down {
            continue;
        }
        checked += 1;
        p.tensors_mut()[t][i] = orig + h;
        let up = batch_loss_grad(&p, &batch, kind, lambda, &mut scratch)
            .unwrap()
            .total;
        p.tensors_mut()[t][i] = orig - h;
        let down = batch_loss_grad(&p, &batch, kind, lambda, &mut scratch)
            .unwrap()
            .total;
        p.tensors_mut()[t][i] = orig;
        let fd = (up - down) / (2.0 * h);
        let a = grads.tensors()[t][i];
        assert!(
            (a - fd).abs() <= 1e-6 + 1e-3 * a.abs().max(fd.abs()),
            "tensor {t} index {i}: {a} vs {fd}"
        );
    }
}
