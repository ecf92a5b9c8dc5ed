mod common;

use common::{grad_hessian, Hd};
use inertial_drift::drift::{
    cellular_diagnostics, cellular_divergence_closed_form, cellular_psi_rate_closed_form, turbulence_drift,
    turbulence_ito_drift,
};
use inertial_drift::model::{
    builtin_cellular, builtin_pipe, builtin_vortex, centrifugal_sum, PipeProfile, RadialProfile, TranslationalFlow,
    TurbulenceModel,
};
use inertial_drift::{Alpha, Vector};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Identities of the cellular flow against autodiff of `ψ` alone:
    /// the field is `∇⊥ψ`, tangent to level sets, and `∇ψ·Dξ ξ` carries
    /// the bracket `cos²(k₁x₁) + sin²(k₂x₂)`.
    #[test]
    fn cellular_identities_against_autodiff(
        k1 in 0.3..3.0f64,
        k2 in 0.3..3.0f64,
        x1 in -6.0..6.0f64,
        x2 in -6.0..6.0f64,
        alpha in 0.0..5.0f64,
    ) {
        let c = builtin_cellular(k1, k2, 1.3).unwrap();
        let psi = |v: [Hd; 2]| (Hd::constant(k1) * v[0]).sin() * (Hd::constant(k2) * v[1]).cos();
        let (g, h) = grad_hessian(psi, [x1, x2]);
        let xi = [-g[1], g[0]];
        // Row i of Dξ holds ∂_j ξ_i.
        let dxi = [[-h[1][0], -h[1][1]], [h[0][0], h[0][1]]];
        let dxi_xi = [
            dxi[0][0] * xi[0] + dxi[0][1] * xi[1],
            dxi[1][0] * xi[0] + dxi[1][1] * xi[1],
        ];
        let oracle = g[0] * dxi_xi[0] + g[1] * dxi_xi[1];

        let x = Vector::from_vec(vec![x1, x2]);
        let fields = c.fields(&x);
        prop_assert!((fields[(0, 0)] - xi[0]).abs() <= 1e-12 && (fields[(1, 0)] - xi[1]).abs() <= 1e-12);
        let jac = &c.field_jacobians(&x)[0];
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((jac[(i, j)] - dxi[i][j]).abs() <= 1e-12);
            }
        }

        let a = Alpha::new(alpha).unwrap();
        let diag = cellular_diagnostics(&c, a, &x);
        prop_assert!(diag.grad_psi_dot_xi.abs() <= 1e-10);
        prop_assert!((diag.grad_psi_dot_dxixi - oracle).abs() <= 1e-10);
        let bracket = (k1 * x1).cos().powi(2) + (k2 * x2).sin().powi(2);
        let expanded = (k1 * k2).powi(2) * diag.psi * bracket;
        prop_assert!((oracle - expanded).abs() <= 1e-10);

        // Itô generator on ψ: ∇ψ·(drift) + ½ ξᵀ ∇²ψ ξ.
        let drift = turbulence_ito_drift(&c, a, &x).unwrap();
        let second = xi[0] * (h[0][0] * xi[0] + h[0][1] * xi[1]) + xi[1] * (h[1][0] * xi[0] + h[1][1] * xi[1]);
        let generator = g[0] * drift[0] + g[1] * drift[1] + 0.5 * second;
        prop_assert!((generator - cellular_psi_rate_closed_form(&c, a, &x)).abs() <= 1e-10);
        prop_assert!((diag.psi_rate - generator).abs() <= 1e-10);
    }

    #[test]
    fn cellular_divergence_against_finite_differences(
        x1 in -4.0..4.0f64,
        x2 in -4.0..4.0f64,
        alpha in 0.0..5.0f64,
    ) {
        let c = builtin_cellular(1.0, 2.0, 0.7).unwrap();
        let a = Alpha::new(alpha).unwrap();
        let h = 1e-5;
        let b = |p: [f64; 2]| turbulence_drift(&c, a, &Vector::from_vec(p.to_vec())).unwrap().total;
        let div = (b([x1 + h, x2])[0] - b([x1 - h, x2])[0] + b([x1, x2 + h])[1] - b([x1, x2 - h])[1]) / (2.0 * h);
        let x = Vector::from_vec(vec![x1, x2]);
        prop_assert!((div - cellular_divergence_closed_form(&c, a, &x)).abs() <= 1e-7);
        prop_assert!((cellular_diagnostics(&c, a, &x).div_minus_b - cellular_divergence_closed_form(&c, a, &x)).abs() <= 1e-10);
    }

    #[test]
    fn vortex_drift_is_radial(r in 0.01..3.0f64, phi in 0.0..6.3f64, alpha in 0.0..10.0f64, width in 0.5..2.0f64) {
        let lambda = 1.4;
        for profile in [RadialProfile::Linear { r_cut: 1.5 }, RadialProfile::Gaussian { width }] {
            let v = builtin_vortex(profile.clone(), lambda).unwrap();
            let x = Vector::from_vec(vec![r * phi.cos(), r * phi.sin()]);
            let a = Alpha::new(alpha).unwrap();
            let d = turbulence_drift(&v, a, &x).unwrap();
            let (f1, _) = profile.derivatives(r * r);
            let expected = &x * (2.0 * a.interpolation_weight(lambda) * f1 * f1);
            prop_assert!((&d.total - &expected).norm() <= 1e-9 * (1.0 + expected.norm()));
            prop_assert_eq!(d.turbophoretic.norm(), 0.0);
            // Dξ ξ = −4 f'² x for any stream function f(|x|²).
            let sum = centrifugal_sum(&v, &x);
            prop_assert!((&sum + &x * (4.0 * f1 * f1)).norm() <= 1e-9 * (1.0 + sum.norm()));
        }
    }

    #[test]
    fn pipe_drift_points_down_the_energy_gradient(x1 in -2.0..2.0f64, x2 in -2.0..2.0f64, alpha in 0.01..10.0f64) {
        let pipe = builtin_pipe(PipeProfile::default()).unwrap();
        let x = Vector::from_vec(vec![x1, x2]);
        let d = turbulence_drift(&pipe, Alpha::Finite(alpha), &x).unwrap().total;
        let g = pipe.grad_k_t(&x);
        prop_assert!(d.dot(&g) <= 0.0);
        if g.norm() > 0.0 {
            prop_assert!(d.dot(&g) < 0.0);
        }
        let zero = turbulence_drift(&pipe, Alpha::Zero, &x).unwrap().total;
        prop_assert_eq!(zero.norm(), 0.0);
    }
}

#[test]
fn constant_fields_produce_no_centrifugal_drift() {
    let flow = TranslationalFlow::new(vec![[1.0, 0.0], [0.3, 2.0], [-1.0, 1.0]], 0.8).unwrap();
    for p in [[0.0, 0.0], [1.3, -2.1], [5.0, 0.5]] {
        let x = Vector::from_vec(p.to_vec());
        let d = turbulence_drift(&flow, Alpha::Finite(2.0), &x).unwrap();
        assert!(d.centrifugal.norm() <= 1e-14);
        assert!(d.total.norm() <= 1e-14);
    }
}

#[test]
fn reference_points() {
    let c = builtin_cellular(1.0, 1.0, 1.0).unwrap();
    let x = Vector::from_vec(vec![std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4]);
    assert!((c.psi(&x) - 0.5).abs() < 1e-15);
    assert!(cellular_psi_rate_closed_form(&c, Alpha::Finite(1.0), &x) < 0.0);

    let pipe = builtin_pipe(PipeProfile::default()).unwrap();
    let d = turbulence_drift(&pipe, Alpha::Finite(1.0), &Vector::from_vec(vec![0.0, 0.5])).unwrap();
    assert!((d.total[1] - 0.17778).abs() < 5e-6, "{}", d.total[1]);
}
