use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simdreg_core::regularizers::{
    glasso_column, lasso, proposed_group, GroupSpec, RegularizerKind,
};
use simdreg_core::Matrix;

const H: f64 = 1e-3;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    // Keep entries away from zero so the Lasso kink is never straddled by the stencil.
    Matrix::from_fn(rows, cols, |_, _| {
        let m = rng.random_range(0.05..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

fn check_fd(kind: RegularizerKind, w: &Matrix<f64>) {
    let analytic = kind.evaluate(w).unwrap().grad;
    for i in 0..w.rows() {
        for j in 0..w.cols() {
            let mut plus = w.clone();
            plus.set(i, j, w.get(i, j) + H);
            let mut minus = w.clone();
            minus.set(i, j, w.get(i, j) - H);
            let fd = (kind.value(&plus).unwrap() - kind.value(&minus).unwrap()) / (2.0 * H);
            let a = analytic.get(i, j);
            assert!(
                (a - fd).abs() <= 1e-6 + 1e-4 * a.abs().max(fd.abs()),
                "{kind:?} ({i},{j}): analytic {a} vs fd {fd}"
            );
        }
    }
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let w = random_matrix(&mut rng, 8, 16);
        check_fd(RegularizerKind::Lasso, &w);
        check_fd(RegularizerKind::GroupLassoColumn, &w);
        for g in [1, 4, 8, 16] {
            check_fd(
                RegularizerKind::ProposedGroup(GroupSpec::new(g).unwrap()),
                &w,
            );
        }
    }
}

#[test]
fn proposed_reduces_to_lasso_and_row_norms() {
    let w = Matrix::from_rows(&[&[3.0, -4.0, 0.0, 1.0], &[0.5, 0.25, -2.0, 0.0]]).unwrap();
    let g1 = proposed_group(&w, GroupSpec::new(1).unwrap()).unwrap();
    let l = lasso(&w);
    assert_eq!(g1.value, l.value);
    assert_eq!(g1.grad, l.grad);
    let gj = proposed_group(&w, GroupSpec::new(4).unwrap()).unwrap();
    let rows: f64 = (0..2)
        .map(|i| w.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum();
    assert!((gj.value - rows).abs() < 1e-12);
}

#[test]
fn column_glasso_is_proposed_on_the_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = random_matrix(&mut rng, 6, 16);
    let wt = Matrix::from_fn(16, 6, |i, j| w.get(j, i));
    let col = glasso_column(&w);
    let row = proposed_group(&wt, GroupSpec::new(6).unwrap()).unwrap();
    assert!((col.value - row.value).abs() < 1e-12);
    for i in 0..6 {
        for j in 0..16 {
            assert!((col.grad.get(i, j) - row.grad.get(j, i)).abs() < 1e-12);
        }
    }
}

#[test]
fn indivisible_widths_are_rejected() {
    let w = Matrix::<f32>::zeros(2, 10);
    assert!(proposed_group(&w, GroupSpec::new(16).unwrap()).is_err());
    assert!(GroupSpec::new(0).is_err());
}
