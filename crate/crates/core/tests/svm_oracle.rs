mod common;

use isarec::classifier::{
    dual_objective, kernel_matrix, solve_dual, train_binary_svm, train_multiclass, DEFAULT_KKT_TOL,
};
use isarec::rng::seeded;
use proptest::prelude::*;
use rand::seq::SliceRandom;

#[test]
fn dual_matches_brute_force_qp() {
    for (x, y, c, gamma) in common::small_svm_fixtures() {
        let k = kernel_matrix(&x, gamma);
        let (best, _) = common::brute_force_dual(&k, &y, c);
        let sol = solve_dual(&k, &y, c, DEFAULT_KKT_TOL);
        let got = dual_objective(&k, &y, &sol.alpha);
        assert!((got - best).abs() <= 1e-4, "C={c} gamma={gamma}: {got} vs {best}");
    }
}

#[test]
fn kkt_bands_and_feasibility_hold() {
    let mut problems = common::small_svm_fixtures();
    let (x, y) = common::separable_fixture();
    problems.push((x, y, 1.0, 0.5));
    for (x, y, c, gamma) in problems {
        let k = kernel_matrix(&x, gamma);
        let sol = solve_dual(&k, &y, c, DEFAULT_KKT_TOL);
        assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
        let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(balance.abs() <= 1e-6);
        let v = common::kkt_violation(&k, &y, c, &sol.alpha, sol.bias, DEFAULT_KKT_TOL);
        assert!(v <= 0.0, "violation {v}");
    }
}

#[test]
fn separable_fixture_is_fit_exactly() {
    let (x, y) = common::separable_fixture();
    let svm = train_binary_svm(&x, &y, 10.0, 0.5, DEFAULT_KKT_TOL).unwrap();
    for (xi, yi) in x.iter().zip(&y) {
        assert_eq!(svm.decision_value(xi).unwrap().signum(), *yi);
    }
}

#[test]
fn two_point_closed_form() {
    let gamma = 0.7f64;
    let x = vec![vec![0.0], vec![1.0]];
    let y = vec![1.0, -1.0];
    let svm = train_binary_svm(&x, &y, 1e6, gamma, DEFAULT_KKT_TOL).unwrap();
    let alpha = 1.0 / (1.0 - (-gamma).exp());
    assert_eq!(svm.dual_coefs.len(), 2);
    assert!((svm.dual_coefs[0] - alpha).abs() <= 1e-12 * alpha);
    assert!((svm.dual_coefs[1] + alpha).abs() <= 1e-12 * alpha);
    assert_eq!(svm.bias, 0.0);
}

#[test]
fn prediction_ignores_training_order() {
    let mut rng = seeded(3);
    let mut data: Vec<(Vec<f64>, String)> = Vec::new();
    for (label, cx) in [("a", -3.0), ("b", 0.0), ("c", 3.0)] {
        for _ in 0..6 {
            data.push((vec![cx + rand::Rng::random_range(&mut rng, -0.5..0.5), 0.0], label.to_string()));
        }
    }
    let fit = |d: &[(Vec<f64>, String)]| {
        let (x, y): (Vec<_>, Vec<_>) = d.iter().cloned().unzip();
        train_multiclass(&x, &y, 10.0, 0.5, DEFAULT_KKT_TOL).unwrap()
    };
    let base = fit(&data);
    for _ in 0..5 {
        data.shuffle(&mut rng);
        let other = fit(&data);
        for q in [-3.2, -1.6, -0.1, 0.2, 1.4, 2.9, 5.0] {
            assert_eq!(base.predict(&[q, 0.0]).unwrap(), other.predict(&[q, 0.0]).unwrap());
        }
    }
}

proptest! {
    #[test]
    fn kernel_is_symmetric_and_bounded(
        a in prop::collection::vec(-5.0f64..5.0, 3),
        b in prop::collection::vec(-5.0f64..5.0, 3),
        gamma in 1e-3f64..2.0,
    ) {
        let kab = isarec::classifier::rbf_kernel(&a, &b, gamma).unwrap();
        let kba = isarec::classifier::rbf_kernel(&b, &a, gamma).unwrap();
        prop_assert_eq!(kab, kba);
        prop_assert!(kab > 0.0 && kab <= 1.0);
    }
}
