mod common;

use common::lyapunov_integral;
use inertial_drift::linalg::{
    self, eigenvalues, matrix_exponential, max_abs, solve_lyapunov, solve_sylvester, spectral_abscissa,
};
use inertial_drift::Matrix;
use proptest::prelude::*;
use proptest::strategy::ValueTree;

fn matrix(n: usize, m: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0..1.0f64, n * m).prop_map(move |v| Matrix::from_row_slice(n, m, &v))
}

/// `R − (‖R‖_F + shift) I`: every eigenvalue has real part below `−shift`.
fn stable(n: usize, shift: f64) -> impl Strategy<Value = Matrix> {
    matrix(n, n).prop_map(move |r| {
        let s = r.norm() + shift;
        r - Matrix::identity(n, n) * s
    })
}

fn psd(n: usize) -> impl Strategy<Value = Matrix> {
    matrix(n, n).prop_map(|w| &w * w.transpose())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lyapunov_residual((f, w) in (1usize..=6).prop_flat_map(|n| (stable(n, 0.2), psd(n)))) {
        let x = solve_lyapunov(&f, &w).unwrap();
        let residual = &f * &x + &x * f.transpose() - &w;
        prop_assert!(max_abs(&residual) <= 1e-10, "residual {}", max_abs(&residual));
        prop_assert!(linalg::is_symmetric(&x, 0.0));
    }

    #[test]
    fn sylvester_residual(
        (f, g, c) in (1usize..=6, 1usize..=6)
            .prop_flat_map(|(n, m)| (stable(n, 0.3), stable(m, 0.3), matrix(n, m)))
    ) {
        // With F and G both stable the spectra of F and −G lie on opposite sides.
        let x = solve_sylvester(&f, &g, &c).unwrap();
        let residual = &f * &x + &x * &g - &c;
        prop_assert!(max_abs(&residual) <= 1e-10, "residual {}", max_abs(&residual));
    }

    #[test]
    fn exponential_semigroup(
        f in (1usize..=5).prop_flat_map(|n| matrix(n, n)),
        s in 0.0..2.0f64,
        t in 0.0..2.0f64,
    ) {
        let n = f.nrows();
        let lhs = matrix_exponential(&f, s + t).unwrap();
        let rhs = matrix_exponential(&f, s).unwrap() * matrix_exponential(&f, t).unwrap();
        prop_assert!(max_abs(&(&lhs - rhs)) <= 1e-11 * max_abs(&lhs).max(1.0));
        let inverse = matrix_exponential(&f, -t).unwrap();
        prop_assert!(max_abs(&(matrix_exponential(&f, t).unwrap() * inverse - Matrix::identity(n, n))) <= 1e-11);
    }

    #[test]
    fn abscissa_bounds_the_spectrum(f in (1usize..=6).prop_flat_map(|n| matrix(n, n))) {
        let a = spectral_abscissa(&f).unwrap();
        let eig = eigenvalues(&f).unwrap();
        prop_assert_eq!(eig.len(), f.nrows());
        let trace: f64 = eig.iter().map(|e| e.0).sum();
        prop_assert!((trace - f.trace()).abs() <= 1e-9);
        prop_assert!(eig.iter().all(|e| e.0 <= a + 1e-12));
    }
}

#[test]
fn lyapunov_matches_quadrature() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    for k in 0..20 {
        let n = 1 + k % 6;
        // A spectral margin of 1 makes the tail beyond t = 40 negligible.
        let f = stable(n, 1.0).new_tree(&mut runner).unwrap().current();
        let w = matrix(n, n).new_tree(&mut runner).unwrap().current();
        let w = &w * w.transpose() + Matrix::identity(n, n) * 0.1;
        let x = solve_lyapunov(&f, &(-&w)).unwrap();
        let q = lyapunov_integral(&f, &w, 40.0, 0.05);
        let rel = max_abs(&(&x - &q)) / max_abs(&q);
        assert!(rel <= 1e-6, "instance {k}: relative gap {rel}");
    }
}

#[test]
fn exponential_of_known_generators() {
    let rot = Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let e = matrix_exponential(&rot, 0.3).unwrap();
    let expected = Matrix::from_row_slice(2, 2, &[0.3f64.cos(), -0.3f64.sin(), 0.3f64.sin(), 0.3f64.cos()]);
    assert!(max_abs(&(e - expected)) < 1e-15);
    let nil = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let e = matrix_exponential(&nil, 2.5).unwrap();
    assert!(max_abs(&(e - Matrix::from_row_slice(2, 2, &[1.0, 2.5, 0.0, 1.0]))) < 1e-15);
    let big = Matrix::from_row_slice(1, 1, &[-40.0]);
    assert!((matrix_exponential(&big, 1.0).unwrap()[(0, 0)] / (-40.0f64).exp() - 1.0).abs() < 1e-13);
}

#[test]
fn unstable_lyapunov_is_rejected() {
    let f = Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -1.0]);
    assert!(solve_lyapunov(&f, &Matrix::identity(2, 2)).is_err());
}
