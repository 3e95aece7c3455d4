use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simdreg_core::pruning::{group_norms, masked};
use simdreg_core::regularizers::GroupSpec;
use simdreg_core::{compute_group_mask, pruning_step, MaskStore, Matrix, PruneSchedule};

/// Sort all groups by (norm, flat index) and drop the first floor(s * n).
fn brute_force(w: &Matrix<f32>, g: usize, s: f64) -> Vec<bool> {
    let per_row = w.cols() / g;
    let mut groups: Vec<(f64, usize)> = (0..w.rows() * per_row)
        .map(|k| {
            let (i, b) = (k / per_row, k % per_row);
            let n = w.row(i)[b * g..(b + 1) * g]
                .iter()
                .map(|&v| (v as f64) * (v as f64))
                .sum::<f64>()
                .sqrt();
            (n, k)
        })
        .collect();
    groups.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let k = (s * groups.len() as f64 + 1e-9).floor() as usize;
    let mut bits = vec![true; w.rows() * w.cols()];
    for &(_, idx) in &groups[..k] {
        let (i, b) = (idx / per_row, idx % per_row);
        bits[i * w.cols() + b * g..i * w.cols() + (b + 1) * g]
            .iter_mut()
            .for_each(|x| *x = false);
    }
    bits
}

#[test]
fn mask_matches_brute_force_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..50 {
        let g = [1, 2, 4, 8, 16][trial % 5];
        let rows = rng.random_range(1..=32);
        let cols = g * rng.random_range(1..=64 / g);
        // Quantized values so that exact ties between group norms occur.
        let w = Matrix::from_fn(rows, cols, |_, _| rng.random_range(-3i32..=3) as f32 * 0.5);
        let s = rng.random_range(0.0..1.0);
        let spec = GroupSpec::new(g).unwrap();
        let mask = compute_group_mask(&w, spec, s).unwrap();
        assert_eq!(
            mask.bits(),
            brute_force(&w, g, s).as_slice(),
            "trial {trial}"
        );
        assert!(mask.is_group_constant(spec));
        let n = mask.group_count(spec) as f64;
        assert!((mask.group_sparsity(spec) - s).abs() <= 1.0 / n + 1e-12);
        assert_eq!(group_norms(&w, spec).unwrap().len(), mask.group_count(spec));
    }
}

#[test]
fn gradual_pruning_reaches_target_and_freezes() {
    let spec = GroupSpec::new(16).unwrap();
    let sched = PruneSchedule::new(0.3, 10, 40, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut a = Matrix::from_fn(32, 64, |_, _| rng.random_range(-1.0f32..1.0));
    let mut b = Matrix::from_fn(16, 32, |_, _| rng.random_range(-1.0f32..1.0));
    let mut store = MaskStore::all_ones([a.shape(), b.shape()]);
    let mut last = 0.0;
    for s in 0..=80 {
        pruning_step(&mut store, &mut [&mut a, &mut b], &sched, spec, s).unwrap();
        let now = store.group_sparsity(spec);
        assert!(now + 1e-12 >= last, "sparsity decreased at step {s}");
        last = now;
        if s >= sched.ramp_end() {
            for (m, w) in store.masks().iter().zip([&a, &b]) {
                assert!((m.group_sparsity(spec) - 0.7).abs() <= 1.0 / m.group_count(spec) as f64);
                assert_eq!(&masked(w, m).unwrap(), w);
            }
        }
    }
    let frozen = store.clone();
    a.as_mut_slice().iter_mut().for_each(|v| *v = -*v * 3.0);
    pruning_step(&mut store, &mut [&mut a, &mut b], &sched, spec, 500).unwrap();
    assert_eq!(store, frozen);
}
