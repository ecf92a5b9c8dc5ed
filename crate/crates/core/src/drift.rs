//! Ingredients of the limit equation.
//!
//! For a mass-to-correlation-time ratio `α ∈ [0, ∞]` the limit of the
//! inertial system is the Itô SDE
//!
//! ```text
//! dx = [γ⁻¹b + f_α](x) dt + (γ⁻¹σ)(x) A⁻¹B dw
//! [f_α]_i = ∂_l γ⁻¹_ij [αN_α]_lj + ∂_l (γ⁻¹σ)_ik A⁻¹_kh [L_α]_lh
//! ```
//!
//! where `M` is the stationary covariance of the OU driver (`AM + MAᵀ = BBᵀ`),
//! `L_α` solves `γL + αLAᵀ = σM` and `N_α` solves
//! `γN + Nγᵀ = L_ασᵀ + σL_αᵀ`. The endpoints `α = 0` and `α = ∞` are
//! handled as separate branches rather than by thresholding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{
    self, centrifugal_sum, field_covariance, CellularFlow, CoefficientModel, NoiseSpec, ScalarFrictionModel,
    TurbulenceModel,
};

/// The limit of `μ(ε)/ε`, an extended real in `[0, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Alpha {
    Zero,
    Finite(f64),
    Infinite,
}

impl Alpha {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in [0, inf], got {value}"
            )));
        }
        Ok(if value == 0.0 {
            Alpha::Zero
        } else if value.is_infinite() {
            Alpha::Infinite
        } else {
            Alpha::Finite(value)
        })
    }

    /// Numeric value, with `f64::INFINITY` for the upper endpoint.
    pub fn value(self) -> f64 {
        match self {
            Alpha::Zero => 0.0,
            Alpha::Finite(a) => a,
            Alpha::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Alpha::Finite(a) => Some(a),
            _ => None,
        }
    }

    /// `α / (λ + α)`, continuously extended to both endpoints.
    pub fn interpolation_weight(self, lambda: f64) -> f64 {
        match self {
            Alpha::Zero => 0.0,
            Alpha::Finite(a) => a / (lambda + a),
            Alpha::Infinite => 1.0,
        }
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Alpha::Zero => write!(f, "0"),
            Alpha::Finite(a) => write!(f, "{a}"),
            Alpha::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for Alpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" | "∞" => Ok(Alpha::Infinite),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("cannot parse alpha from {s:?}")))
                .and_then(Alpha::new),
        }
    }
}

impl From<Alpha> for String {
    fn from(a: Alpha) -> String {
        a.to_string()
    }
}

impl TryFrom<String> for Alpha {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// `M`, `L_α`, `N_α` and `α N_α` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftMatrices {
    pub m: Matrix,
    pub l_alpha: Matrix,
    /// Zero at `α = ∞`, where only the product `α N_α` has a limit.
    pub n_alpha: Matrix,
    pub alpha_n: Matrix,
    pub alpha: Alpha,
}

/// Exponential mixing rate `ω_α = min{γ₀/α, λ̄}` of the frozen fast system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingRate {
    pub omega_alpha: f64,
}

impl MixingRate {
    pub fn new(model: &dyn CoefficientModel, noise: &NoiseSpec, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mixing rate needs a finite positive alpha, got {alpha}"
            )));
        }
        let gamma0 = model.friction_bounds().0;
        Ok(Self {
            omega_alpha: (gamma0 / alpha).min(noise.spectral_gap()),
        })
    }

    /// Burn-in of `8 / ω_α` used by the covariance experiment.
    pub fn suggested_burn_in(&self) -> f64 {
        8.0 / self.omega_alpha
    }
}

/// Stationary covariance `M` of the unit-time OU process:
/// `A M + M Aᵀ = B Bᵀ`.
pub fn compute_m(noise: &NoiseSpec) -> Result<Matrix> {
    let bbt = noise.b() * noise.b().transpose();
    linalg::solve_lyapunov(&(-noise.a()), &(-bbt))
}

fn check_point(model: &dyn CoefficientModel, x: &Vector) -> Result<()> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            context: "evaluation point",
            expected: model.dim().to_string(),
            got: x.len().to_string(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("evaluation point"));
    }
    Ok(())
}

fn check_noise(model: &dyn CoefficientModel, noise: &NoiseSpec) -> Result<()> {
    if model.noise_dim() != noise.dim() {
        return Err(Error::DimensionMismatch {
            context: "model noise dimension vs NoiseSpec",
            expected: model.noise_dim().to_string(),
            got: noise.dim().to_string(),
        });
    }
    Ok(())
}

/// `L_α(x)`: `γ⁻¹σM` at `α = 0`, zero at `α = ∞`, otherwise the solution
/// of `γ L + α L Aᵀ = σ M`.
pub fn compute_l_alpha(
    model: &dyn CoefficientModel,
    noise: &NoiseSpec,
    m: &Matrix,
    alpha: Alpha,
    x: &Vector,
) -> Result<Matrix> {
    check_point(model, x)?;
    check_noise(model, noise)?;
    let sigma = model.diffusion(x);
    match alpha {
        Alpha::Zero => Ok(model::invert(&model.friction(x))? * sigma * m),
        Alpha::Infinite => Ok(Matrix::zeros(model.dim(), noise.dim())),
        Alpha::Finite(a) => {
            let gamma = model.friction(x);
            linalg::solve_sylvester(&gamma, &(noise.a().transpose() * a), &(sigma * m))
        }
    }
}

/// `(N_α, α N_α)`. At `α = ∞` the product solves
/// `γX + Xγᵀ = σ(M A⁻ᵀ + A⁻¹M)σᵀ`.
pub fn compute_n_alpha(
    model: &dyn CoefficientModel,
    noise: &NoiseSpec,
    m: &Matrix,
    l_alpha: &Matrix,
    alpha: Alpha,
    x: &Vector,
) -> Result<(Matrix, Matrix)> {
    check_point(model, x)?;
    check_noise(model, noise)?;
    let d = model.dim();
    let gamma = model.friction(x);
    let sigma = model.diffusion(x);
    match alpha {
        Alpha::Infinite => {
            let a_inv = model::invert(noise.a())?;
            let inner = m * a_inv.transpose() + &a_inv * m;
            let rhs = &sigma * inner * sigma.transpose();
            let alpha_n = linalg::solve_lyapunov(&(-&gamma), &(-rhs))?;
            Ok((Matrix::zeros(d, d), alpha_n))
        }
        Alpha::Zero | Alpha::Finite(_) => {
            let rhs = l_alpha * sigma.transpose() + &sigma * l_alpha.transpose();
            let n = linalg::solve_lyapunov(&(-&gamma), &(-rhs))?;
            let alpha_n = match alpha {
                Alpha::Finite(a) => &n * a,
                _ => Matrix::zeros(d, d),
            };
            Ok((n, alpha_n))
        }
    }
}

/// Stationary covariance `Q_α(x)` of the frozen fast system
/// `du = (−γu + σz)/α dt`, `dz = −Az dt + B dw`, from one Lyapunov solve
/// on the joint `(u, z)` state.
pub fn assemble_q_alpha(model: &dyn CoefficientModel, noise: &NoiseSpec, alpha: Alpha, x: &Vector) -> Result<Matrix> {
    check_point(model, x)?;
    check_noise(model, noise)?;
    let a = alpha
        .finite()
        .ok_or_else(|| Error::InvalidParameter(format!("Q_alpha needs alpha in (0, inf), got {alpha}")))?;
    let d = model.dim();
    let n = noise.dim();
    let mut generator = Matrix::zeros(d + n, d + n);
    generator
        .view_mut((0, 0), (d, d))
        .copy_from(&(model.friction(x) * (-1.0 / a)));
    generator.view_mut((0, d), (d, n)).copy_from(&(model.diffusion(x) / a));
    generator.view_mut((d, d), (n, n)).copy_from(&(-noise.a()));
    let mut forcing = Matrix::zeros(d + n, d + n);
    forcing
        .view_mut((d, d), (n, n))
        .copy_from(&(noise.b() * noise.b().transpose()));
    linalg::solve_lyapunov(&generator, &(-forcing))
}

/// Generator and forcing covariance of the frozen fast system, for the
/// simulation side.
pub(crate) fn frozen_fast_generator(
    model: &dyn CoefficientModel,
    noise: &NoiseSpec,
    alpha: f64,
    x: &Vector,
) -> (Matrix, Matrix) {
    let d = model.dim();
    let n = noise.dim();
    let mut generator = Matrix::zeros(d + n, d + n);
    generator
        .view_mut((0, 0), (d, d))
        .copy_from(&(model.friction(x) * (-1.0 / alpha)));
    generator
        .view_mut((0, d), (d, n))
        .copy_from(&(model.diffusion(x) / alpha));
    generator.view_mut((d, d), (n, n)).copy_from(&(-noise.a()));
    let mut forcing = Matrix::zeros(d + n, d + n);
    forcing
        .view_mut((d, d), (n, n))
        .copy_from(&(noise.b() * noise.b().transpose()));
    (generator, forcing)
}

/// `f_α(x)` from precomputed matrices and derivative tensors.
pub fn contract_drift(derivs: &model::DerivativeBundle, a_inv: &Matrix, mats: &DriftMatrices) -> Vector {
    let d = mats.alpha_n.nrows();
    let l_scaled = &mats.l_alpha * a_inv.transpose();
    let mut f = Vector::zeros(d);
    for l in 0..d {
        f += &derivs.d_friction_inv[l] * mats.alpha_n.row(l).transpose();
        f += &derivs.d_scaled_diffusion[l] * l_scaled.row(l).transpose();
    }
    f
}

/// Caches the `x`-independent pieces (`M`, `A⁻¹`) for repeated drift
/// evaluations under one noise specification.
#[derive(Debug, Clone)]
pub struct DriftContext {
    noise: NoiseSpec,
    m: Matrix,
    a_inv: Matrix,
}

impl DriftContext {
    pub fn new(noise: &NoiseSpec) -> Result<Self> {
        Ok(Self {
            m: compute_m(noise)?,
            a_inv: model::invert(noise.a())?,
            noise: noise.clone(),
        })
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn m(&self) -> &Matrix {
        &self.m
    }

    pub fn a_inv(&self) -> &Matrix {
        &self.a_inv
    }

    pub fn matrices(&self, model: &dyn CoefficientModel, alpha: Alpha, x: &Vector) -> Result<DriftMatrices> {
        let l_alpha = compute_l_alpha(model, &self.noise, &self.m, alpha, x)?;
        let (n_alpha, alpha_n) = compute_n_alpha(model, &self.noise, &self.m, &l_alpha, alpha, x)?;
        Ok(DriftMatrices {
            m: self.m.clone(),
            l_alpha,
            n_alpha,
            alpha_n,
            alpha,
        })
    }

    /// `f_α(x)`, using analytic derivatives when the model supplies them and
    /// Richardson-checked finite differences otherwise.
    pub fn inertial_drift(&self, model: &dyn CoefficientModel, alpha: Alpha, x: &Vector) -> Result<Vector> {
        let mats = self.matrices(model, alpha, x)?;
        let derivs = model::derivative_bundle(model, x)?;
        let f = contract_drift(&derivs, &self.a_inv, &mats);
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("inertial drift"));
        }
        Ok(f)
    }

    /// Same as [`Self::inertial_drift`] but always through finite differences.
    pub fn inertial_drift_fd(&self, model: &dyn CoefficientModel, alpha: Alpha, x: &Vector) -> Result<Vector> {
        let mats = self.matrices(model, alpha, x)?;
        let derivs = model::fd_derivatives(model, x)?;
        Ok(contract_drift(&derivs, &self.a_inv, &mats))
    }

    /// Drift of the limit SDE, `γ⁻¹b + f_α`.
    pub fn limit_drift(&self, model: &dyn CoefficientModel, alpha: Alpha, x: &Vector) -> Result<Vector> {
        let gamma_inv = model::invert(&model.friction(x))?;
        Ok(gamma_inv * model.drift(x) + self.inertial_drift(model, alpha, x)?)
    }

    /// Diffusion matrix of the limit SDE, `γ⁻¹σ A⁻¹B` (d × m).
    pub fn limit_diffusion(&self, model: &dyn CoefficientModel, x: &Vector) -> Result<Matrix> {
        let gamma_inv = model::invert(&model.friction(x))?;
        Ok(gamma_inv * model.diffusion(x) * &self.a_inv * self.noise.b())
    }
}

/// One-shot `f_α(x)`.
pub fn inertial_drift(model: &dyn CoefficientModel, noise: &NoiseSpec, alpha: Alpha, x: &Vector) -> Result<Vector> {
    DriftContext::new(noise)?.inertial_drift(model, alpha, x)
}

/// Closed form of `f_α` for scalar friction `γ = λI`, `σ = λξ` and `A = I`:
///
/// ```text
/// f_α = ½ λ/(λ+α) Tr[D(ξB)(ξB)] − ½ α/(λ+α) (ξB)(ξB)ᵀ ∇λ/λ
/// ```
pub fn scalar_drift(model: &ScalarFrictionModel, noise: &NoiseSpec, alpha: Alpha, x: &Vector) -> Result<Vector> {
    if !noise.a_is_identity() {
        return Err(Error::InvalidParameter("the scalar closed form requires A = I".into()));
    }
    check_point(model, x)?;
    check_noise(model, noise)?;
    let lambda = model.lambda(x);
    let grad = model.grad_lambda(x);
    let g = model.xi(x) * noise.b();
    let d = g.nrows();
    let mut trace_term = Vector::zeros(d);
    for (l, dxi) in model.xi_jacobian(x).iter().enumerate() {
        trace_term += dxi * noise.b() * g.row(l).transpose();
    }
    let gradient_term = &g * g.transpose() * grad / lambda;
    let w = alpha.interpolation_weight(lambda);
    Ok(trace_term * (0.5 * (1.0 - w)) - gradient_term * (0.5 * w))
}

/// Decomposition of the turbulence drift `−b_α` into its centrifugal and
/// turbophoretic parts.
#[derive(Debug, Clone, PartialEq)]
pub struct TurbulenceDrift {
    /// `−½ α/(c₀k_T+α) Σ_k Dξ_k ξ_k`
    pub centrifugal: Vector,
    /// `−½ α/(c₀k_T+α) C ∇log k_T`
    pub turbophoretic: Vector,
    /// `−b_α`, the sum of the two.
    pub total: Vector,
}

/// The signed drift `−b_α(x)` that enters the Stratonovich form
/// `dx = ū dt + Σ_k ξ_k ∘ dw^k − b_α dt` of the limit.
pub fn turbulence_drift(t: &dyn TurbulenceModel, alpha: Alpha, x: &Vector) -> Result<TurbulenceDrift> {
    let k = t.k_t(x);
    if !(k >= t.k_t_floor()) {
        return Err(Error::KineticEnergyFloor {
            value: k,
            floor: t.k_t_floor(),
            x: x.iter().copied().collect(),
        });
    }
    let half_w = 0.5 * alpha.interpolation_weight(t.c0() * k);
    let centrifugal = centrifugal_sum(t, x) * (-half_w);
    let turbophoretic = field_covariance(t, x) * t.grad_k_t(x) * (-half_w / k);
    let total = &centrifugal + &turbophoretic;
    Ok(TurbulenceDrift {
        centrifugal,
        turbophoretic,
        total,
    })
}

/// Itô drift of the turbulence limit: `ū + ½ Σ_k Dξ_k ξ_k − b_α`. This is
/// the quantity that equals `γ⁻¹b + f_α` of the general model.
pub fn turbulence_ito_drift(t: &dyn TurbulenceModel, alpha: Alpha, x: &Vector) -> Result<Vector> {
    let strat = turbulence_drift(t, alpha, x)?;
    Ok(t.mean_flow(x) + centrifugal_sum(t, x) * 0.5 + strat.total)
}

/// Pointwise quantities behind the concentration effect of the cellular
/// flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellularDiagnostics {
    pub psi: f64,
    pub grad_psi_dot_xi: f64,
    /// `∇ψ · Dξ ξ`, evaluated from the field Jacobian.
    pub grad_psi_dot_dxixi: f64,
    /// `cos²(k₁x₁) + sin²(k₂x₂)`: the factor relating the previous entry to
    /// `(k₁k₂)² ψ`.
    pub bracket: f64,
    /// `−div b_α`, evaluated as `−½ α/(λ+α) tr(Dξ Dξ)`.
    pub div_minus_b: f64,
    /// `dψ/dt` along the limit dynamics, `−∇ψ · b_α`.
    pub psi_rate: f64,
}

pub fn cellular_diagnostics(c: &CellularFlow, alpha: Alpha, x: &Vector) -> CellularDiagnostics {
    let grad = c.grad_psi(x);
    let xi = c.fields(x);
    let jac = &c.field_jacobians(x)[0];
    let dxixi = jac * xi.column(0);
    let half_w = 0.5 * alpha.interpolation_weight(c.lambda);
    let bracket = (c.k1 * x[0]).cos().powi(2) + (c.k2 * x[1]).sin().powi(2);
    let grad_psi_dot_dxixi = grad.dot(&dxixi);
    CellularDiagnostics {
        psi: c.psi(x),
        grad_psi_dot_xi: grad.dot(&xi.column(0)),
        grad_psi_dot_dxixi,
        bracket,
        div_minus_b: -half_w * (jac * jac).trace(),
        psi_rate: -half_w * grad_psi_dot_dxixi,
    }
}

/// `−div b_α` for the cellular flow in closed form:
/// `−α/(λ+α) (k₁k₂)² [sin²(k₂x₂) − sin²(k₁x₁)]`.
pub fn cellular_divergence_closed_form(c: &CellularFlow, alpha: Alpha, x: &Vector) -> f64 {
    let w = alpha.interpolation_weight(c.lambda);
    -w * (c.k1 * c.k2).powi(2) * ((c.k2 * x[1]).sin().powi(2) - (c.k1 * x[0]).sin().powi(2))
}

/// `dψ/dt` in closed form:
/// `−½ α/(λ+α) (k₁k₂)² [cos²(k₁x₁) + sin²(k₂x₂)] ψ`.
pub fn cellular_psi_rate_closed_form(c: &CellularFlow, alpha: Alpha, x: &Vector) -> f64 {
    let w = alpha.interpolation_weight(c.lambda);
    let bracket = (c.k1 * x[0]).cos().powi(2) + (c.k2 * x[1]).sin().powi(2);
    -0.5 * w * (c.k1 * c.k2).powi(2) * bracket * c.psi(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_cellular, builtin_pipe, builtin_vortex, PipeProfile, RadialProfile};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn scalar_setup(lambda: f64) -> (ScalarFrictionModel, NoiseSpec) {
        (
            ScalarFrictionModel::constant(lambda, Matrix::from_element(1, 1, 1.0)).unwrap(),
            NoiseSpec::identity(1),
        )
    }

    fn x1(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    fn v2(a: f64, b: f64) -> Vector {
        Vector::from_vec(vec![a, b])
    }

    #[test]
    fn alpha_parsing_and_weights() {
        assert_eq!("inf".parse::<Alpha>().unwrap(), Alpha::Infinite);
        assert_eq!("0".parse::<Alpha>().unwrap(), Alpha::Zero);
        assert_eq!("2.5".parse::<Alpha>().unwrap(), Alpha::Finite(2.5));
        assert!("-1".parse::<Alpha>().is_err());
        assert!("abc".parse::<Alpha>().is_err());
        assert_eq!(Alpha::Infinite.interpolation_weight(3.0), 1.0);
        assert_eq!(Alpha::Finite(1.0).interpolation_weight(1.0), 0.5);
    }

    #[test]
    fn m_examples() {
        let m = compute_m(&NoiseSpec::identity(1)).unwrap();
        assert!((m[(0, 0)] - 0.5).abs() < 1e-15);
        let m = compute_m(&NoiseSpec::identity(2)).unwrap();
        assert!(linalg::max_abs(&(m - Matrix::identity(2, 2) * 0.5)) < 1e-15);
        let noise = NoiseSpec::new(
            Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
            Matrix::from_row_slice(2, 1, &[1.0, 1.0]),
        )
        .unwrap();
        let m = compute_m(&noise).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[0.25, 1.0 / 3.0, 1.0 / 3.0, 0.5]);
        assert!(linalg::max_abs(&(m - expected)) < 1e-15);
    }

    #[test]
    fn l_and_n_scalar_examples() {
        let (model, noise) = scalar_setup(2.0);
        let m = compute_m(&noise).unwrap();
        let x = x1(0.0);
        let l1 = compute_l_alpha(&model, &noise, &m, Alpha::Finite(1.0), &x).unwrap();
        assert!((l1[(0, 0)] - 1.0 / 6.0).abs() < 1e-15);
        let l0 = compute_l_alpha(&model, &noise, &m, Alpha::Zero, &x).unwrap();
        assert!((l0[(0, 0)] - 0.25).abs() < 1e-15);
        let linf = compute_l_alpha(&model, &noise, &m, Alpha::Infinite, &x).unwrap();
        assert_eq!(linf[(0, 0)], 0.0);

        let (n1, an1) = compute_n_alpha(&model, &noise, &m, &l1, Alpha::Finite(1.0), &x).unwrap();
        assert!((n1[(0, 0)] - 1.0 / 12.0).abs() < 1e-15);
        assert!((an1[(0, 0)] - 1.0 / 12.0).abs() < 1e-15);
        let (_, an0) = compute_n_alpha(&model, &noise, &m, &l0, Alpha::Zero, &x).unwrap();
        assert_eq!(an0[(0, 0)], 0.0);
        let (ninf, aninf) = compute_n_alpha(&model, &noise, &m, &linf, Alpha::Infinite, &x).unwrap();
        assert_eq!(ninf[(0, 0)], 0.0);
        assert!((aninf[(0, 0)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn q_alpha_scalar_and_decoupled() {
        let (model, noise) = scalar_setup(2.0);
        let q = assemble_q_alpha(&model, &noise, Alpha::Finite(1.0), &x1(0.0)).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[1.0 / 12.0, 1.0 / 6.0, 1.0 / 6.0, 0.5]);
        assert!(linalg::max_abs(&(q - expected)) < 1e-14);

        let silent = ScalarFrictionModel::constant(2.0, Matrix::zeros(1, 1)).unwrap();
        let q = assemble_q_alpha(&silent, &noise, Alpha::Finite(0.7), &x1(0.0)).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.5]);
        assert!(linalg::max_abs(&(q - expected)) < 1e-14);

        assert!(assemble_q_alpha(&model, &noise, Alpha::Zero, &x1(0.0)).is_err());
    }

    #[test]
    fn drift_vanishes_for_constant_coefficients() {
        let model = crate::model::CustomModel::constant(
            Vector::from_vec(vec![0.2, 0.1]),
            Matrix::from_row_slice(2, 2, &[2.0, 0.5, -0.3, 1.0]),
            Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 0.7]),
        )
        .unwrap();
        let noise = NoiseSpec::identity(2);
        for alpha in [Alpha::Zero, Alpha::Finite(0.4), Alpha::Infinite] {
            let f = inertial_drift(&model, &noise, alpha, &v2(0.3, 0.4)).unwrap();
            assert_eq!(f.norm(), 0.0);
        }
    }

    #[test]
    fn linear_friction_drift_example() {
        let model = ScalarFrictionModel::linear_unit_xi();
        let noise = NoiseSpec::identity(1);
        let f = inertial_drift(&model, &noise, Alpha::Finite(1.0), &x1(0.0)).unwrap();
        assert!((f[0] + 1.0 / 12.0).abs() < 1e-15);
        let s = scalar_drift(&model, &noise, Alpha::Finite(1.0), &x1(0.0)).unwrap();
        assert!((s[0] + 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_drift_requires_identity_a() {
        let model = ScalarFrictionModel::sine_unit_sigma();
        let noise = NoiseSpec::new(Matrix::from_element(1, 1, 2.0), Matrix::from_element(1, 1, 1.0)).unwrap();
        assert!(scalar_drift(&model, &noise, Alpha::Zero, &x1(0.0)).is_err());
    }

    #[test]
    fn scalar_drift_at_zero_is_stratonovich_correction() {
        let model = ScalarFrictionModel::sine_unit_sigma();
        let noise = NoiseSpec::identity(1);
        for p in [-1.0, 0.2, 2.0] {
            let x = x1(p);
            let f0 = scalar_drift(&model, &noise, Alpha::Zero, &x).unwrap();
            // ½ g g' with g = 1/(2 + sin x).
            let g = 1.0 / (2.0 + p.sin());
            let dg = -p.cos() * g * g;
            assert!((f0[0] - 0.5 * g * dg).abs() < 1e-15);
        }
    }

    #[test]
    fn vortex_drifts_at_unit_point() {
        let vortex = builtin_vortex(RadialProfile::Linear { r_cut: 10.0 }, 1.0).unwrap();
        let x = v2(1.0, 0.0);
        let strat = turbulence_drift(&vortex, Alpha::Finite(1.0), &x).unwrap();
        assert!((strat.total - v2(1.0, 0.0)).norm() < 1e-15);
        // The Itô drift additionally carries ½ Dξ ξ = −2x.
        let ito = turbulence_ito_drift(&vortex, Alpha::Finite(1.0), &x).unwrap();
        assert!((ito - v2(-1.0, 0.0)).norm() < 1e-15);
        let zero = turbulence_drift(&vortex, Alpha::Zero, &x).unwrap();
        assert_eq!(zero.total.norm(), 0.0);
    }

    #[test]
    fn pipe_drift_points_to_the_wall() {
        let pipe = builtin_pipe(PipeProfile::default()).unwrap();
        let d = turbulence_drift(&pipe, Alpha::Finite(1.0), &v2(0.0, 0.5)).unwrap();
        assert_eq!(d.total[0], 0.0);
        assert!((d.total[1] - 0.5 / 2.25 * 0.8).abs() < 1e-15);
        assert!((d.total[1] - 0.177_777_777_777_777_8).abs() < 1e-15);
        assert_eq!(d.centrifugal.norm(), 0.0);
    }

    #[test]
    fn cellular_examples() {
        let c = builtin_cellular(1.0, 1.0, 1.0).unwrap();
        let d = cellular_diagnostics(&c, Alpha::Finite(1.0), &v2(FRAC_PI_4, FRAC_PI_4));
        assert!((d.psi - 0.5).abs() < 1e-15);
        assert!((d.bracket - 1.0).abs() < 1e-15);
        assert!((d.grad_psi_dot_dxixi - 0.5).abs() < 1e-15);

        let d = cellular_diagnostics(&c, Alpha::Finite(1.0), &v2(FRAC_PI_2, 0.0));
        assert!((d.psi - 1.0).abs() < 1e-15);
        assert!(d.grad_psi_dot_dxixi.abs() < 1e-15);

        let d = cellular_diagnostics(&c, Alpha::Finite(1.0), &v2(0.0, 0.8));
        assert_eq!(d.psi, 0.0);
        assert!(d.grad_psi_dot_dxixi.abs() < 1e-15);
    }

    #[test]
    fn cellular_divergence_examples() {
        let c = builtin_cellular(1.0, 1.0, 1.0).unwrap();
        let a = Alpha::Finite(1.0);
        assert!((cellular_divergence_closed_form(&c, a, &v2(0.0, FRAC_PI_2)) + 0.5).abs() < 1e-15);
        assert!((cellular_divergence_closed_form(&c, a, &v2(FRAC_PI_2, 0.0)) - 0.5).abs() < 1e-15);
        assert!(cellular_divergence_closed_form(&c, a, &v2(0.7, 0.7)).abs() < 1e-15);
        for x in [v2(0.0, FRAC_PI_2), v2(0.3, -1.2), v2(2.0, 0.4)] {
            let d = cellular_diagnostics(&c, a, &x);
            assert!((d.div_minus_b - cellular_divergence_closed_form(&c, a, &x)).abs() < 1e-14);
        }
    }

    #[test]
    fn mixing_rate() {
        let (model, noise) = scalar_setup(2.0);
        let r = MixingRate::new(&model, &noise, 4.0).unwrap();
        assert_eq!(r.omega_alpha, 0.5);
        assert_eq!(r.suggested_burn_in(), 16.0);
        assert!(MixingRate::new(&model, &noise, 0.0).is_err());
    }
}
