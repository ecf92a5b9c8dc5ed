mod common;

use common::*;
use inertial_drift::drift::compute_m;
use inertial_drift::harness::stats::{batch_means, mean_se};
use inertial_drift::linalg::{max_abs, psd_sqrt};
use inertial_drift::model::{builtin_cellular, CustomModel};
use inertial_drift::sde::{
    cellular_split_step, coarsen_increments, integrate_limit, run_coupled, BrownianStream, DrivingPath, GeneralLimit,
    MuRule, OuStepper, SimConfig,
};
use inertial_drift::{Alpha, Matrix, NoiseSpec, Vector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Innovation covariance of an OU step for diagonal `A`, entrywise:
/// `(BBᵀ)_ij (1 − e^{−(a_i+a_j)dt/ε}) / ((a_i + a_j) ε)`.
fn diagonal_step_covariance(a: &[f64], b: &Matrix, eps: f64, dt: f64) -> Matrix {
    let bb = b * b.transpose();
    Matrix::from_fn(a.len(), a.len(), |i, j| {
        let s = a[i] + a[j];
        bb[(i, j)] * (-(-s * dt / eps).exp_m1()) / (s * eps)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn ou_step_covariance_is_exact(
        a in prop::collection::vec(0.2..5.0f64, 1..4),
        seed in any::<u64>(),
        eps in 1e-3..1.0f64,
        dt in 1e-5..0.1f64,
    ) {
        let n = a.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_matrix(&mut rng, n, 2, 1.0);
        let noise = NoiseSpec::new(Matrix::from_diagonal(&Vector::from_column_slice(&a)), b.clone()).unwrap();
        let ou = OuStepper::new(&noise, &compute_m(&noise).unwrap(), eps, dt).unwrap();
        let expected = diagonal_step_covariance(&a, &b, eps, dt);
        let scale = max_abs(&expected).max(1e-300);
        prop_assert!(max_abs(&(ou.step_covariance() - &expected)) <= 1e-12 * scale.max(1.0),
            "{} vs {}", ou.step_covariance(), expected);
        let decay = Matrix::from_diagonal(&Vector::from_iterator(n, a.iter().map(|ai| (-ai * dt / eps).exp())));
        prop_assert!(max_abs(&(ou.decay() - decay)) <= 1e-14);
    }

    #[test]
    fn coarsening_sums_increments(seed in any::<u64>(), stride in 1usize..5) {
        let mut stream = BrownianStream::new(seed, 3);
        let fine = stream.increments(20, 2, 0.01);
        let coarse = coarsen_increments(&fine, stride);
        prop_assert_eq!(coarse.len(), 20 / stride);
        for (k, c) in coarse.iter().enumerate() {
            let s: Vector = fine[k * stride..(k + 1) * stride].iter().sum();
            prop_assert!((c - s).norm() <= 1e-15);
        }
    }
}

#[test]
fn scalar_ou_step_reference() {
    let noise = NoiseSpec::identity(1);
    let (eps, dt) = (0.1, 0.01);
    let ou = OuStepper::new(&noise, &compute_m(&noise).unwrap(), eps, dt).unwrap();
    let expected = (1.0 - (-2.0 * dt / eps).exp()) / (2.0 * eps);
    assert!((ou.step_covariance()[(0, 0)] - expected).abs() <= 1e-12);
}

/// `√ε z` over 10⁶ exact steps has covariance `M`; batch means absorb the
/// autocorrelation.
#[test]
fn ou_long_run_covariance() {
    let noise = NoiseSpec::new(
        Matrix::from_row_slice(2, 2, &[1.5, 0.4, -0.3, 0.8]),
        Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.7]),
    )
    .unwrap();
    let m = compute_m(&noise).unwrap();
    let eps = 0.05;
    let dt = 0.01;
    let ou = OuStepper::new(&noise, &m, eps, dt).unwrap();
    let mut stream = BrownianStream::new(11, 0);
    let root = psd_sqrt(&(&m / eps), 0.0).unwrap();
    let mut z = &root * Vector::from_fn(2, |_, _| stream.standard_normal());
    let steps = 1_000_000;
    let mut series: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(steps)).collect();
    let mut gauss = vec![0.0; ou.gaussian_dim()];
    for _ in 0..steps {
        stream.fill_standard(&mut gauss);
        z = ou.step(&z, &gauss).0;
        let s = &z * eps.sqrt();
        series[0].push(s[0] * s[0]);
        series[1].push(s[0] * s[1]);
        series[2].push(s[1] * s[1]);
    }
    for (k, (r, c)) in [(0, 0), (0, 1), (1, 1)].into_iter().enumerate() {
        let (est, se) = batch_means(&series[k], 100);
        assert!(
            (est - m[(r, c)]).abs() <= 4.0 * se,
            "M[{r},{c}]: {est} ± {se} vs {}",
            m[(r, c)]
        );
    }
}

/// The exact joint sampler reproduces `Cov(η, ΔW)` and `Var ΔW`.
#[test]
fn ou_brownian_cross_covariance() {
    let noise = NoiseSpec::identity(1);
    let (eps, dt) = (0.2, 0.1);
    let ou = OuStepper::new(&noise, &compute_m(&noise).unwrap(), eps, dt).unwrap();
    let mut stream = BrownianStream::new(5, 0);
    let zero = Vector::zeros(1);
    let mut gauss = vec![0.0; 2];
    let (mut cross, mut var_w) = (Vec::new(), Vec::new());
    for _ in 0..200_000 {
        stream.fill_standard(&mut gauss);
        let (eta, dw) = ou.step(&zero, &gauss);
        cross.push(eta[0] * dw[0]);
        var_w.push(dw[0] * dw[0]);
    }
    let (c, se) = mean_se(&cross);
    let expected = 1.0 - (-dt / eps).exp();
    assert!((c - expected).abs() <= 4.0 * se, "{c} ± {se} vs {expected}");
    let (v, se) = mean_se(&var_w);
    assert!((v - dt).abs() <= 4.0 * se);
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let a: Vec<f64> = (0..5)
        .map({
            let mut s = BrownianStream::new(9, 4);
            move |_| s.standard_normal()
        })
        .collect();
    let b: Vec<f64> = (0..5)
        .map({
            let mut s = BrownianStream::new(9, 4);
            move |_| s.standard_normal()
        })
        .collect();
    let c: Vec<f64> = (0..5)
        .map({
            let mut s = BrownianStream::new(9, 5);
            move |_| s.standard_normal()
        })
        .collect();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

/// Constant coefficients: the limit is Brownian motion with drift
/// `γ⁻¹b` and diffusion `γ⁻¹σA⁻¹B`, and the coupled pre-limit path
/// approaches it at the rate of the OU fluctuations.
#[test]
fn constant_coefficients_converge_pathwise() {
    let model = CustomModel::constant(
        Vector::from_vec(vec![0.3, -0.2]),
        Matrix::from_row_slice(2, 2, &[2.0, 0.3, -0.2, 1.5]),
        Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 0.8]),
    )
    .unwrap();
    let noise = NoiseSpec::identity(2);
    let mut means = Vec::new();
    for eps in [0.1, 0.01] {
        let sups: Vec<f64> = (0..40)
            .map(|i| {
                let config = SimConfig {
                    horizon: 1.0,
                    dt: eps / 20.0,
                    epsilon: eps,
                    mu: MuRule::Proportional(1.0),
                    alpha: Alpha::Finite(1.0),
                    x0: vec![0.0, 0.0],
                    v0: vec![0.0, 0.0],
                    seed: 21,
                    trajectory_index: i,
                };
                run_coupled(&config, &model, &noise).unwrap().sup_distance
            })
            .collect();
        means.push(mean_se(&sups));
    }
    // The gap scales like √(ε log(1/ε)): a ratio of about 0.45 here.
    let ratio = means[1].0 / means[0].0;
    assert!((0.3..0.6).contains(&ratio), "{means:?}");
    assert!(means[0].0 - means[1].0 > 3.0 * means[0].1.hypot(means[1].1));
}

/// The limit integrator on constant coefficients is exact in law: the
/// terminal mean and covariance match `x₀ + γ⁻¹bT` and `T GGᵀ`.
#[test]
fn limit_terminal_law_for_constant_coefficients() {
    let gamma = Matrix::from_row_slice(2, 2, &[2.0, 0.3, -0.2, 1.5]);
    let sigma = Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 0.8]);
    let b = Vector::from_vec(vec![0.3, -0.2]);
    let model = CustomModel::constant(b.clone(), gamma.clone(), sigma.clone()).unwrap();
    let noise = NoiseSpec::identity(2);
    let limit = GeneralLimit::new(&model, &noise, Alpha::Finite(1.0)).unwrap();
    let gi = gamma.try_inverse().unwrap();
    let mean = &gi * &b;
    let g = &gi * &sigma;
    let cov = &g * g.transpose();
    let n = 4000;
    let terminal: Vec<Vector> = (0..n)
        .map(|i| {
            let dw = BrownianStream::new(3, i).increments(10, 2, 0.1);
            integrate_limit(&limit, &dw, 0.1, &Vector::zeros(2))
                .unwrap()
                .terminal()
                .clone()
        })
        .collect();
    for r in 0..2 {
        let (m, se) = mean_se(&terminal.iter().map(|x| x[r]).collect::<Vec<_>>());
        assert!((m - mean[r]).abs() <= 4.0 * se);
        for c in r..2 {
            let prod: Vec<f64> = terminal.iter().map(|x| (x[r] - mean[r]) * (x[c] - mean[c])).collect();
            let (m, se) = mean_se(&prod);
            assert!(
                (m - cov[(r, c)]).abs() <= 4.0 * se,
                "cov[{r},{c}] {m} ± {se} vs {}",
                cov[(r, c)]
            );
        }
    }
}

/// With no drift (`α = 0`) the split step only moves along streamlines.
#[test]
fn cellular_split_step_keeps_psi_without_drift() {
    let c = builtin_cellular(1.0, 1.5, 1.0).unwrap();
    let mut stream = BrownianStream::new(1, 0);
    let mut x = Vector::from_vec(vec![0.4, 0.3]);
    let psi0 = c.psi(&x);
    for _ in 0..1000 {
        let dw = stream.standard_normal() * 0.1;
        x = cellular_split_step(&c, Alpha::Zero, &x, 0.01, dw).unwrap();
    }
    assert!((c.psi(&x) - psi0).abs() <= 1e-8);
}

#[test]
fn driving_path_starts_at_rest() {
    let noise = NoiseSpec::identity(1);
    let ou = OuStepper::new(&noise, &compute_m(&noise).unwrap(), 0.1, 0.01).unwrap();
    let path = DrivingPath::generate(&ou, 10, &mut BrownianStream::new(0, 0));
    assert_eq!(path.z[0][0], 0.0);
    assert_eq!(path.n_steps(), 10);
    assert_eq!(path.z_mean.len(), 10);
}
