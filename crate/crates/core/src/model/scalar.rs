use std::sync::Arc;

use super::{CoefficientModel, DerivativeBundle};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

type ScalarFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
type VecFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type MatFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
type MatsFn = Arc<dyn Fn(&Vector) -> Vec<Matrix> + Send + Sync>;

/// Scalar friction `γ(x) = λ(x) I` with diffusion written as `σ = λ ξ`.
///
/// Every field comes with its analytic gradient so that the closed-form
/// drift and the general contraction can be compared without finite
/// differences.
#[derive(Clone)]
pub struct ScalarFrictionModel {
    dim: usize,
    noise_dim: usize,
    lambda: ScalarFn,
    grad_lambda: VecFn,
    xi: MatFn,
    xi_jacobian: MatsFn,
    drift: VecFn,
    bounds: (f64, f64),
}

impl std::fmt::Debug for ScalarFrictionModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarFrictionModel")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("bounds", &self.bounds)
            .finish()
    }
}

impl ScalarFrictionModel {
    /// `xi_jacobian(x)[l]` must return `∂_l ξ(x)` as a `d × n` matrix.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim: usize,
        noise_dim: usize,
        bounds: (f64, f64),
        lambda: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        grad_lambda: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        xi: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
        xi_jacobian: impl Fn(&Vector) -> Vec<Matrix> + Send + Sync + 'static,
        drift: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(bounds.0 > 0.0 && bounds.0 <= bounds.1) {
            return Err(Error::InvalidParameter(format!(
                "scalar friction bounds must satisfy 0 < λ₀ ≤ λ₁, got {bounds:?}"
            )));
        }
        Ok(Self {
            dim,
            noise_dim,
            lambda: Arc::new(lambda),
            grad_lambda: Arc::new(grad_lambda),
            xi: Arc::new(xi),
            xi_jacobian: Arc::new(xi_jacobian),
            drift: Arc::new(drift),
            bounds,
        })
    }

    /// Constant `λ` and constant `σ = λ ξ` in dimension `d = σ.nrows()`.
    pub fn constant(lambda: f64, sigma: Matrix) -> Result<Self> {
        let (d, n) = sigma.shape();
        let xi = &sigma / lambda;
        Self::new(
            d,
            n,
            (lambda, lambda),
            move |_| lambda,
            move |_| Vector::zeros(d),
            move |_| xi.clone(),
            move |_| vec![Matrix::zeros(d, n); d],
            move |_| Vector::zeros(d),
        )
    }

    /// One-dimensional `λ(x) = 2 + x` with `ξ ≡ 1`. The friction bounds only
    /// hold for `|x| < 1`; this model is meant for pointwise checks.
    pub fn linear_unit_xi() -> Self {
        Self::new(
            1,
            1,
            (1.0, 3.0),
            |x| 2.0 + x[0],
            |_| Vector::from_element(1, 1.0),
            |_| Matrix::from_element(1, 1, 1.0),
            |_| vec![Matrix::zeros(1, 1)],
            |_| Vector::zeros(1),
        )
        .expect("valid bounds")
    }

    /// One-dimensional `λ(x) = 2 + sin x`, `σ ≡ 1`, `b = 0`.
    pub fn sine_unit_sigma() -> Self {
        Self::new(
            1,
            1,
            (1.0, 3.0),
            |x| 2.0 + x[0].sin(),
            |x| Vector::from_element(1, x[0].cos()),
            |x| Matrix::from_element(1, 1, 1.0 / (2.0 + x[0].sin())),
            |x| {
                let l = 2.0 + x[0].sin();
                vec![Matrix::from_element(1, 1, -x[0].cos() / (l * l))]
            },
            |_| Vector::zeros(1),
        )
        .expect("valid bounds")
    }

    /// One-dimensional `λ(x) = 2 + sin x`, `ξ ≡ 1` (so `σ = λ`), `b = 0`.
    pub fn sine_unit_xi() -> Self {
        Self::new(
            1,
            1,
            (1.0, 3.0),
            |x| 2.0 + x[0].sin(),
            |x| Vector::from_element(1, x[0].cos()),
            |_| Matrix::from_element(1, 1, 1.0),
            |_| vec![Matrix::zeros(1, 1)],
            |_| Vector::zeros(1),
        )
        .expect("valid bounds")
    }

    pub fn lambda(&self, x: &Vector) -> f64 {
        (self.lambda)(x)
    }

    pub fn grad_lambda(&self, x: &Vector) -> Vector {
        (self.grad_lambda)(x)
    }

    pub fn xi(&self, x: &Vector) -> Matrix {
        (self.xi)(x)
    }

    pub fn xi_jacobian(&self, x: &Vector) -> Vec<Matrix> {
        (self.xi_jacobian)(x)
    }

    pub fn mean_drift(&self, x: &Vector) -> Vector {
        (self.drift)(x)
    }
}

impl CoefficientModel for ScalarFrictionModel {
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
        Matrix::identity(self.dim, self.dim) * (self.lambda)(x)
    }
    fn diffusion(&self, x: &Vector) -> Matrix {
        (self.xi)(x) * (self.lambda)(x)
    }
    fn friction_bounds(&self) -> (f64, f64) {
        self.bounds
    }
    fn derivatives(&self, x: &Vector) -> Option<DerivativeBundle> {
        let l = (self.lambda)(x);
        let grad = (self.grad_lambda)(x);
        let id = Matrix::identity(self.dim, self.dim);
        Some(DerivativeBundle {
            d_friction_inv: grad.iter().map(|g| &id * (-g / (l * l))).collect(),
            d_scaled_diffusion: (self.xi_jacobian)(x),
        })
    }
}
