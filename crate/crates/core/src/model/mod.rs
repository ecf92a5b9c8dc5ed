//! Problem definitions: coefficient fields, the OU driver, and the builtin
//! turbulence models.

mod scalar;
mod turbulence;

use std::sync::Arc;

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, StabilityReport, Vector};

pub use scalar::ScalarFrictionModel;
pub use turbulence::{
    as_coefficient_model, as_scalar_model, builtin_cellular, builtin_pipe, builtin_vortex, centrifugal_sum,
    field_covariance, max_divergence, turbulence_noise, CellularFlow, PipeFlow, PipeProfile, RadialProfile,
    TranslationalFlow, TurbulenceCoefficients, TurbulenceModel, VortexFlow,
};

/// Spatial derivatives entering the limit drift.
///
/// `d_friction_inv[l]` is `∂_l γ⁻¹` (d×d) and `d_scaled_diffusion[l]` is
/// `∂_l (γ⁻¹σ)` (d×n).
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub d_friction_inv: Vec<Matrix>,
    pub d_scaled_diffusion: Vec<Matrix>,
}

impl DerivativeBundle {
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.d_friction_inv
            .iter()
            .zip(&other.d_friction_inv)
            .chain(self.d_scaled_diffusion.iter().zip(&other.d_scaled_diffusion))
            .map(|(a, b)| linalg::max_abs(&(a - b)))
            .fold(0.0, f64::max)
    }
}

/// The coefficients `b`, `γ`, `σ` of the inertial system
/// `dx = v dt`, `μ dv = (b(x) − γ(x) v + σ(x) z) dt`.
pub trait CoefficientModel: Send + Sync {
    /// Spatial dimension `d`.
    fn dim(&self) -> usize;
    /// Number of OU components `n` driving the velocity.
    fn noise_dim(&self) -> usize;
    fn drift(&self, x: &Vector) -> Vector;
    fn friction(&self, x: &Vector) -> Matrix;
    /// `d × n` matrix multiplying the OU state.
    fn diffusion(&self, x: &Vector) -> Matrix;
    /// Declared bounds `γ₀ ≤ (γ+γᵀ)/2 ≤ γ₁`.
    fn friction_bounds(&self) -> (f64, f64);
    /// Analytic derivative tensors, when the model can supply them.
    fn derivatives(&self, _x: &Vector) -> Option<DerivativeBundle> {
        None
    }
}

/// Analytic derivatives when available, otherwise [`fd_derivatives`].
pub fn derivative_bundle(model: &dyn CoefficientModel, x: &Vector) -> Result<DerivativeBundle> {
    match model.derivatives(x) {
        Some(bundle) => Ok(bundle),
        None => fd_derivatives(model, x),
    }
}

/// Checks the friction bounds at `x` through the eigenvalues of the
/// symmetric part of `γ(x)`.
pub fn check_friction(model: &dyn CoefficientModel, x: &Vector) -> Result<()> {
    let gamma = model.friction(x);
    linalg::ensure_finite(&gamma, "friction")?;
    let (lower, upper) = model.friction_bounds();
    let (min, max) = symmetric_extremes(&linalg::symmetrize(&gamma));
    let slack = 1e-12 * upper.abs().max(1.0);
    if min < lower - slack || max > upper + slack {
        return Err(Error::FrictionBounds {
            x: x.iter().copied().collect(),
            min,
            max,
            lower,
            upper,
        });
    }
    Ok(())
}

fn symmetric_extremes(s: &Matrix) -> (f64, f64) {
    match s.nrows() {
        1 => (s[(0, 0)], s[(0, 0)]),
        2 => {
            let mid = 0.5 * (s[(0, 0)] + s[(1, 1)]);
            let rad = (0.25 * (s[(0, 0)] - s[(1, 1)]).powi(2) + s[(0, 1)] * s[(1, 0)]).sqrt();
            (mid - rad, mid + rad)
        }
        _ => {
            let eig = SymmetricEigen::new(s.clone());
            let ev = eig.eigenvalues;
            (ev.min(), ev.max())
        }
    }
}

pub(crate) fn invert(gamma: &Matrix) -> Result<Matrix> {
    if gamma.nrows() == 1 {
        let g = gamma[(0, 0)];
        if g == 0.0 || !g.is_finite() {
            return Err(Error::IllConditioned {
                rcond: 0.0,
                detail: " in friction inverse".into(),
            });
        }
        return Ok(Matrix::from_element(1, 1, 1.0 / g));
    }
    gamma.clone().try_inverse().ok_or_else(|| Error::IllConditioned {
        rcond: 0.0,
        detail: " in friction inverse".into(),
    })
}

/// Default central-difference step at `x`.
pub fn default_fd_step(x: &Vector) -> f64 {
    1e-5 * (1.0 + x.norm())
}

/// Central-difference derivative tensors with a Richardson consistency check
/// between steps `h` and `h/2`. Returns the extrapolated estimate.
pub fn fd_derivatives(model: &dyn CoefficientModel, x: &Vector) -> Result<DerivativeBundle> {
    fd_derivatives_with_step(model, x, default_fd_step(x))
}

pub fn fd_derivatives_with_step(model: &dyn CoefficientModel, x: &Vector, h: f64) -> Result<DerivativeBundle> {
    let d = model.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            context: "fd_derivatives point",
            expected: d.to_string(),
            got: x.len().to_string(),
        });
    }
    let eval = |p: &Vector| -> Result<(Matrix, Matrix)> {
        let inv = invert(&model.friction(p))?;
        let scaled = &inv * model.diffusion(p);
        linalg::ensure_finite(&inv, "friction inverse")?;
        linalg::ensure_finite(&scaled, "scaled diffusion")?;
        Ok((inv, scaled))
    };
    let central = |l: usize, step: f64| -> Result<(Matrix, Matrix)> {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[l] += step;
        xm[l] -= step;
        let (ip, sp) = eval(&xp)?;
        let (im, sm) = eval(&xm)?;
        Ok(((ip - im) / (2.0 * step), (sp - sm) / (2.0 * step)))
    };
    let (inv0, scaled0) = eval(x)?;
    let value_scale = 1.0 + linalg::max_abs(&inv0).max(linalg::max_abs(&scaled0));

    let mut d_inv = Vec::with_capacity(d);
    let mut d_scaled = Vec::with_capacity(d);
    let mut worst_ratio = 0.0_f64;
    let mut worst = (0.0, 0.0);
    for l in 0..d {
        let (gi_h, gs_h) = central(l, h)?;
        let (gi_h2, gs_h2) = central(l, 0.5 * h)?;
        let deriv_scale = 1.0 + linalg::max_abs(&gi_h2).max(linalg::max_abs(&gs_h2));
        let tolerance = 10.0 * h * h * deriv_scale * value_scale + 1e3 * f64::EPSILON * value_scale / h;
        let discrepancy = linalg::max_abs(&(&gi_h - &gi_h2)).max(linalg::max_abs(&(&gs_h - &gs_h2)));
        if discrepancy / tolerance > worst_ratio {
            worst_ratio = discrepancy / tolerance;
            worst = (discrepancy, tolerance);
        }
        d_inv.push((&gi_h2 * 4.0 - &gi_h) / 3.0);
        d_scaled.push((&gs_h2 * 4.0 - &gs_h) / 3.0);
    }
    if worst_ratio > 1.0 {
        return Err(Error::DerivativeTolerance {
            discrepancy: worst.0,
            tolerance: worst.1,
        });
    }
    Ok(DerivativeBundle {
        d_friction_inv: d_inv,
        d_scaled_diffusion: d_scaled,
    })
}

/// OU driver `ε dz = −A z dt + B dw`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    a: Matrix,
    b: Matrix,
    spectral_gap: f64,
}

impl NoiseSpec {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        let n = linalg::ensure_square(&a)?;
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                context: "NoiseSpec B",
                expected: format!("{n}xm"),
                got: format!("{}x{}", b.nrows(), b.ncols()),
            });
        }
        linalg::ensure_finite(&a, "NoiseSpec A")?;
        linalg::ensure_finite(&b, "NoiseSpec B")?;
        let report = StabilityReport::of_negation(&a)?;
        if !report.is_stable {
            return Err(Error::Unstable {
                abscissa: report.spectral_abscissa,
                threshold: -linalg::STABILITY_TOL,
            });
        }
        Ok(Self {
            a,
            b,
            spectral_gap: -report.spectral_abscissa,
        })
    }

    /// `A = I_n`, `B = I_n`.
    pub fn identity(n: usize) -> Self {
        Self::new(Matrix::identity(n, n), Matrix::identity(n, n)).expect("identity noise is stable")
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn brownian_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Smallest real part among the eigenvalues of `A`.
    pub fn spectral_gap(&self) -> f64 {
        self.spectral_gap
    }

    pub fn a_is_identity(&self) -> bool {
        self.a == Matrix::identity(self.dim(), self.dim())
    }
}

type VecFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type MatFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
type BundleFn = Arc<dyn Fn(&Vector) -> DerivativeBundle + Send + Sync>;

/// A coefficient model assembled from closures.
#[derive(Clone)]
pub struct CustomModel {
    dim: usize,
    noise_dim: usize,
    drift: VecFn,
    friction: MatFn,
    diffusion: MatFn,
    bounds: (f64, f64),
    derivatives: Option<BundleFn>,
}

impl CustomModel {
    pub fn new(
        dim: usize,
        noise_dim: usize,
        bounds: (f64, f64),
        drift: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        friction: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
        diffusion: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            noise_dim,
            drift: Arc::new(drift),
            friction: Arc::new(friction),
            diffusion: Arc::new(diffusion),
            bounds,
            derivatives: None,
        }
    }

    /// Constant coefficients.
    pub fn constant(b: Vector, gamma: Matrix, sigma: Matrix) -> Result<Self> {
        let d = b.len();
        if gamma.shape() != (d, d) || sigma.nrows() != d {
            return Err(Error::DimensionMismatch {
                context: "CustomModel::constant",
                expected: format!("{d}x{d} friction and {d}xn diffusion"),
                got: format!("{:?} and {:?}", gamma.shape(), sigma.shape()),
            });
        }
        let (lo, hi) = symmetric_extremes(&linalg::symmetrize(&gamma));
        if lo <= 0.0 {
            return Err(Error::InvalidParameter(
                "constant friction must have a positive definite symmetric part".into(),
            ));
        }
        let n = sigma.ncols();
        let zero = DerivativeBundle {
            d_friction_inv: vec![Matrix::zeros(d, d); d],
            d_scaled_diffusion: vec![Matrix::zeros(d, n); d],
        };
        Ok(Self::new(
            d,
            n,
            (lo, hi),
            move |_| b.clone(),
            move |_| gamma.clone(),
            move |_| sigma.clone(),
        )
        .with_derivatives(move |_| zero.clone()))
    }

    pub fn with_derivatives(
        mut self,
        derivatives: impl Fn(&Vector) -> DerivativeBundle + Send + Sync + 'static,
    ) -> Self {
        self.derivatives = Some(Arc::new(derivatives));
        self
    }

    pub fn without_derivatives(mut self) -> Self {
        self.derivatives = None;
        self
    }
}

impl std::fmt::Debug for CustomModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CustomModel")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("bounds", &self.bounds)
            .field("analytic_derivatives", &self.derivatives.is_some())
            .finish()
    }
}

impl CoefficientModel for CustomModel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    fn drift(&self, x: &Vector) -> Vector {
        (self.drift)(x)
    }
    fn friction(&self, x: &Vector) -> Matrix {
        (self.friction)(x)
    }
    fn diffusion(&self, x: &Vector) -> Matrix {
        (self.diffusion)(x)
    }
    fn friction_bounds(&self) -> (f64, f64) {
        self.bounds
    }
    fn derivatives(&self, x: &Vector) -> Option<DerivativeBundle> {
        self.derivatives.as_ref().map(|f| f(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d_linear_friction() -> CustomModel {
        CustomModel::new(
            1,
            1,
            (1.0, 3.0),
            |_| Vector::zeros(1),
            |x| Matrix::from_element(1, 1, 2.0 + x[0]),
            |_| Matrix::from_element(1, 1, 1.0),
        )
    }

    #[test]
    fn fd_of_constant_model_is_zero() {
        let model = CustomModel::constant(
            Vector::from_vec(vec![0.3, -0.1]),
            Matrix::from_row_slice(2, 2, &[2.0, 0.3, -0.1, 1.5]),
            Matrix::from_row_slice(2, 1, &[1.0, 0.5]),
        )
        .unwrap()
        .without_derivatives();
        let bundle = fd_derivatives(&model, &Vector::from_vec(vec![0.4, 2.0])).unwrap();
        for m in bundle.d_friction_inv.iter().chain(&bundle.d_scaled_diffusion) {
            assert!(linalg::max_abs(m) == 0.0);
        }
    }

    #[test]
    fn fd_inverse_friction_derivative() {
        let bundle = fd_derivatives(&one_d_linear_friction(), &Vector::zeros(1)).unwrap();
        // d/dx (2+x)^{-1} at 0 = -1/4; γ⁻¹σ has the same derivative here.
        assert!((bundle.d_friction_inv[0][(0, 0)] + 0.25).abs() < 1e-10);
        assert!((bundle.d_scaled_diffusion[0][(0, 0)] + 0.25).abs() < 1e-10);
    }

    #[test]
    fn fd_richardson_flags_rough_fields() {
        // A kink at the evaluation point makes h and h/2 disagree.
        let rough = CustomModel::new(
            1,
            1,
            (1.0, 3.0),
            |_| Vector::zeros(1),
            |x| Matrix::from_element(1, 1, 2.0 + (x[0] - 1e-6).abs()),
            |_| Matrix::from_element(1, 1, 1.0),
        );
        let err = fd_derivatives(&rough, &Vector::zeros(1)).unwrap_err();
        assert!(matches!(err, Error::DerivativeTolerance { .. }));
    }

    #[test]
    fn friction_check_flags_violation() {
        let model = one_d_linear_friction();
        assert!(check_friction(&model, &Vector::from_vec(vec![0.5])).is_ok());
        let err = check_friction(&model, &Vector::from_vec(vec![-1.5])).unwrap_err();
        assert!(matches!(err, Error::FrictionBounds { .. }));
    }

    #[test]
    fn noise_spec_validation() {
        let spec = NoiseSpec::new(
            Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
            Matrix::from_row_slice(2, 1, &[1.0, 1.0]),
        )
        .unwrap();
        assert_eq!(spec.spectral_gap(), 1.0);
        assert_eq!(spec.brownian_dim(), 1);
        let err = NoiseSpec::new(Matrix::from_element(1, 1, -1.0), Matrix::from_element(1, 1, 1.0));
        assert!(matches!(err, Err(Error::Unstable { .. })));
        let err = NoiseSpec::new(Matrix::identity(2, 2), Matrix::identity(3, 3));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }
}
