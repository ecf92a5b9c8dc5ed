//! Inertial particles in a turbulent flow.
//!
//! The drag `−c₀ k_T(x) (v − ū(x) − Σ_k ξ_k(x) z^k)` fits the general
//! coefficient model with `γ = c₀k_T I`, `b = c₀k_T ū`, `σ = c₀k_T Ξ` where
//! `Ξ` has the fields `ξ_k` as columns, and `A = B = I_{|K|}`.

use std::sync::Arc;

use super::{CoefficientModel, DerivativeBundle, NoiseSpec, ScalarFrictionModel};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

pub trait TurbulenceModel: Send + Sync {
    fn dim(&self) -> usize {
        2
    }
    /// Number of fluctuation fields `|K|`.
    fn n_fields(&self) -> usize;
    fn c0(&self) -> f64;
    fn k_t(&self, x: &Vector) -> f64;
    fn grad_k_t(&self, x: &Vector) -> Vector;
    /// Lower bound `k_T⁰ > 0`.
    fn k_t_floor(&self) -> f64;
    /// Upper bound of `k_T`, used for the declared friction bounds.
    fn k_t_ceiling(&self) -> f64;
    fn mean_flow(&self, x: &Vector) -> Vector;
    /// `d × |K|` matrix whose columns are the fields `ξ_k(x)`.
    fn fields(&self, x: &Vector) -> Matrix;
    /// `Dξ_k(x)` with entry `(i, l) = ∂_l ξ_{k,i}`, one matrix per field.
    fn field_jacobians(&self, x: &Vector) -> Vec<Matrix>;
}

/// `C(x) = Σ_k ξ_k ⊗ ξ_k`.
pub fn field_covariance(t: &dyn TurbulenceModel, x: &Vector) -> Matrix {
    let xi = t.fields(x);
    &xi * xi.transpose()
}

/// `Σ_k Dξ_k(x) ξ_k(x)`.
pub fn centrifugal_sum(t: &dyn TurbulenceModel, x: &Vector) -> Vector {
    let xi = t.fields(x);
    t.field_jacobians(x)
        .iter()
        .enumerate()
        .fold(Vector::zeros(t.dim()), |acc, (k, jac)| acc + jac * xi.column(k))
}

/// Largest `|div ξ_k(x)|` over the fields, from the analytic Jacobians.
pub fn max_divergence(t: &dyn TurbulenceModel, x: &Vector) -> f64 {
    t.field_jacobians(x).iter().map(|j| j.trace().abs()).fold(0.0, f64::max)
}

// C² step: 0 at t ≤ 0, 1 at t ≥ 1.
fn smoothstep(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0)
    } else {
        let v = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
        let dv = 30.0 * t * t * (1.0 - t) * (1.0 - t);
        (v, dv)
    }
}

// C² ramp g on [0,1] with g(0)=g'(0)=g''(0)=0 and g(1)=g'(1)=1, g''(1)=0.
fn soft_ramp(t: f64) -> (f64, f64) {
    let v = t * t * t * (6.0 + t * (-8.0 + 3.0 * t));
    let dv = t * t * (18.0 + t * (-32.0 + 15.0 * t));
    (v, dv)
}

/// Radial profile `f` of a single vortex `ξ(x) = 2 f'(|x|²) x^⊥`, given
/// through `f'` and `f''` as functions of `s = |x|²`.
#[derive(Clone)]
pub enum RadialProfile {
    /// `f(s) = s` inside radius `r_cut`, with `f'` rolled off smoothly to
    /// zero between `r_cut` and `2 r_cut`.
    Linear { r_cut: f64 },
    /// `f'(s) = exp(−s / w²)`.
    Gaussian { width: f64 },
    Custom {
        f1: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        f2: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl std::fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Linear { r_cut } => write!(f, "Linear {{ r_cut: {r_cut} }}"),
            Self::Gaussian { width } => write!(f, "Gaussian {{ width: {width} }}"),
            Self::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl RadialProfile {
    /// `(f'(s), f''(s))`.
    pub fn derivatives(&self, s: f64) -> (f64, f64) {
        match self {
            Self::Linear { r_cut } => {
                let r = s.sqrt();
                let (step, dstep) = smoothstep((r - r_cut) / r_cut);
                let f1 = 1.0 - step;
                let f2 = if dstep == 0.0 { 0.0 } else { -dstep / r_cut / (2.0 * r) };
                (f1, f2)
            }
            Self::Gaussian { width } => {
                let f1 = (-s / (width * width)).exp();
                (f1, -f1 / (width * width))
            }
            Self::Custom { f1, f2 } => (f1(s), f2(s)),
        }
    }
}

/// Single vortex in the plane with constant friction `c₀ k_T`.
#[derive(Debug, Clone)]
pub struct VortexFlow {
    pub profile: RadialProfile,
    pub c0: f64,
    pub k_t: f64,
}

/// Vortex with `f(s) = s` inside `r_cut`, `c₀ = 1` and `k_T ≡ lambda`.
pub fn builtin_vortex(profile: RadialProfile, lambda: f64) -> Result<VortexFlow> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "vortex friction must be positive, got {lambda}"
        )));
    }
    match &profile {
        RadialProfile::Linear { r_cut } if !(*r_cut > 0.0) => {
            return Err(Error::InvalidParameter(format!("r_cut must be positive, got {r_cut}")))
        }
        RadialProfile::Gaussian { width } if !(*width > 0.0) => {
            return Err(Error::InvalidParameter(format!("width must be positive, got {width}")))
        }
        _ => {}
    }
    Ok(VortexFlow {
        profile,
        c0: 1.0,
        k_t: lambda,
    })
}

impl TurbulenceModel for VortexFlow {
    fn n_fields(&self) -> usize {
        1
    }
    fn c0(&self) -> f64 {
        self.c0
    }
    fn k_t(&self, _x: &Vector) -> f64 {
        self.k_t
    }
    fn grad_k_t(&self, _x: &Vector) -> Vector {
        Vector::zeros(2)
    }
    fn k_t_floor(&self) -> f64 {
        self.k_t
    }
    fn k_t_ceiling(&self) -> f64 {
        self.k_t
    }
    fn mean_flow(&self, _x: &Vector) -> Vector {
        Vector::zeros(2)
    }
    fn fields(&self, x: &Vector) -> Matrix {
        let (f1, _) = self.profile.derivatives(x.norm_squared());
        Matrix::from_column_slice(2, 1, &[-2.0 * f1 * x[1], 2.0 * f1 * x[0]])
    }
    fn field_jacobians(&self, x: &Vector) -> Vec<Matrix> {
        let (f1, f2) = self.profile.derivatives(x.norm_squared());
        let perp = [-x[1], x[0]];
        let mut jac = Matrix::zeros(2, 2);
        for i in 0..2 {
            for l in 0..2 {
                jac[(i, l)] = 4.0 * f2 * perp[i] * x[l];
            }
        }
        jac[(0, 1)] -= 2.0 * f1;
        jac[(1, 0)] += 2.0 * f1;
        vec![jac]
    }
}

/// Periodic cellular flow `ψ = sin(k₁x₁) cos(k₂x₂)`, `ξ = ∇^⊥ψ`, with
/// constant friction `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellularFlow {
    pub k1: f64,
    pub k2: f64,
    pub lambda: f64,
}

pub fn builtin_cellular(k1: f64, k2: f64, lambda: f64) -> Result<CellularFlow> {
    if k1 == 0.0 || k2 == 0.0 || !k1.is_finite() || !k2.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "cellular wavenumbers must be nonzero, got ({k1}, {k2})"
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "cellular friction must be positive, got {lambda}"
        )));
    }
    Ok(CellularFlow { k1, k2, lambda })
}

impl CellularFlow {
    pub fn psi(&self, x: &Vector) -> f64 {
        (self.k1 * x[0]).sin() * (self.k2 * x[1]).cos()
    }

    pub fn grad_psi(&self, x: &Vector) -> Vector {
        let (s1, c1) = (self.k1 * x[0]).sin_cos();
        let (s2, c2) = (self.k2 * x[1]).sin_cos();
        Vector::from_vec(vec![self.k1 * c1 * c2, -self.k2 * s1 * s2])
    }
}

impl TurbulenceModel for CellularFlow {
    fn n_fields(&self) -> usize {
        1
    }
    fn c0(&self) -> f64 {
        1.0
    }
    fn k_t(&self, _x: &Vector) -> f64 {
        self.lambda
    }
    fn grad_k_t(&self, _x: &Vector) -> Vector {
        Vector::zeros(2)
    }
    fn k_t_floor(&self) -> f64 {
        self.lambda
    }
    fn k_t_ceiling(&self) -> f64 {
        self.lambda
    }
    fn mean_flow(&self, _x: &Vector) -> Vector {
        Vector::zeros(2)
    }
    fn fields(&self, x: &Vector) -> Matrix {
        let (s1, c1) = (self.k1 * x[0]).sin_cos();
        let (s2, c2) = (self.k2 * x[1]).sin_cos();
        Matrix::from_column_slice(2, 1, &[self.k2 * s1 * s2, self.k1 * c1 * c2])
    }
    fn field_jacobians(&self, x: &Vector) -> Vec<Matrix> {
        let (k1, k2) = (self.k1, self.k2);
        let (s1, c1) = (k1 * x[0]).sin_cos();
        let (s2, c2) = (k2 * x[1]).sin_cos();
        vec![Matrix::from_row_slice(
            2,
            2,
            &[
                k1 * k2 * c1 * s2,
                k2 * k2 * s1 * c2,
                -k1 * k1 * s1 * c2,
                -k1 * k2 * c1 * s2,
            ],
        )]
    }
}

/// Parabolic turbulent-kinetic-energy profile `peak − curvature·x₂²`,
/// blended smoothly onto the floor `k_T⁰` over a band of width `blend`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PipeProfile {
    pub peak: f64,
    pub curvature: f64,
    pub floor: f64,
    pub blend: f64,
}

impl Default for PipeProfile {
    fn default() -> Self {
        Self {
            peak: 1.5,
            curvature: 1.0,
            floor: 0.5,
            blend: 0.25,
        }
    }
}

impl PipeProfile {
    /// `(k_T, dk_T/dx₂)` at height `x2`.
    pub fn eval(&self, x2: f64) -> (f64, f64) {
        let p = self.peak - self.curvature * x2 * x2;
        let dp = -2.0 * self.curvature * x2;
        let excess = p - self.floor;
        if excess >= self.blend {
            (p, dp)
        } else if excess <= 0.0 {
            (self.floor, 0.0)
        } else {
            let (g, dg) = soft_ramp(excess / self.blend);
            (self.floor + self.blend * g, dg * dp)
        }
    }
}

/// Straight channel along `x₁` with homogeneous fluctuations `ξ₁ = e₁`,
/// `ξ₂ = e₂` (so `C = I`) and `k_T` depending on `x₂` only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipeFlow {
    pub profile: PipeProfile,
    pub c0: f64,
    /// Centreline speed of the mean flow `ū = (U (1 − x₂²)², 0)` for
    /// `|x₂| ≤ 1`, zero outside.
    pub mean_speed: f64,
}

pub fn builtin_pipe(profile: PipeProfile) -> Result<PipeFlow> {
    if !(profile.floor > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "pipe k_T floor must be positive, got {}",
            profile.floor
        )));
    }
    if !(profile.blend > 0.0) || !(profile.curvature >= 0.0) {
        return Err(Error::InvalidParameter(
            "pipe profile needs blend > 0 and curvature ≥ 0".into(),
        ));
    }
    if profile.peak < profile.floor {
        return Err(Error::KineticEnergyFloor {
            value: profile.peak,
            floor: profile.floor,
            x: vec![0.0, 0.0],
        });
    }
    Ok(PipeFlow {
        profile,
        c0: 1.0,
        mean_speed: 1.0,
    })
}

impl TurbulenceModel for PipeFlow {
    fn n_fields(&self) -> usize {
        2
    }
    fn c0(&self) -> f64 {
        self.c0
    }
    fn k_t(&self, x: &Vector) -> f64 {
        self.profile.eval(x[1]).0
    }
    fn grad_k_t(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![0.0, self.profile.eval(x[1]).1])
    }
    fn k_t_floor(&self) -> f64 {
        self.profile.floor
    }
    fn k_t_ceiling(&self) -> f64 {
        self.profile.peak.max(self.profile.floor)
    }
    fn mean_flow(&self, x: &Vector) -> Vector {
        let y = x[1];
        let u = if y.abs() < 1.0 {
            self.mean_speed * (1.0 - y * y).powi(2)
        } else {
            0.0
        };
        Vector::from_vec(vec![u, 0.0])
    }
    fn fields(&self, _x: &Vector) -> Matrix {
        Matrix::identity(2, 2)
    }
    fn field_jacobians(&self, _x: &Vector) -> Vec<Matrix> {
        vec![Matrix::zeros(2, 2); 2]
    }
}

/// Translational fields: for each wavevector `k`, the pair
/// `e cos(k·x)`, `e sin(k·x)` with `e = k^⊥/|k|`. Constant friction `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationalFlow {
    pub wavevectors: Vec<[f64; 2]>,
    pub lambda: f64,
}

impl TranslationalFlow {
    pub fn new(wavevectors: Vec<[f64; 2]>, lambda: f64) -> Result<Self> {
        if wavevectors.is_empty() || wavevectors.iter().any(|k| k[0] == 0.0 && k[1] == 0.0) {
            return Err(Error::InvalidParameter(
                "translational flow needs nonzero wavevectors".into(),
            ));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter("friction must be positive".into()));
        }
        Ok(Self { wavevectors, lambda })
    }

    fn direction(k: &[f64; 2]) -> [f64; 2] {
        let norm = k[0].hypot(k[1]);
        [-k[1] / norm, k[0] / norm]
    }
}

impl TurbulenceModel for TranslationalFlow {
    fn n_fields(&self) -> usize {
        2 * self.wavevectors.len()
    }
    fn c0(&self) -> f64 {
        1.0
    }
    fn k_t(&self, _x: &Vector) -> f64 {
        self.lambda
    }
    fn grad_k_t(&self, _x: &Vector) -> Vector {
        Vector::zeros(2)
    }
    fn k_t_floor(&self) -> f64 {
        self.lambda
    }
    fn k_t_ceiling(&self) -> f64 {
        self.lambda
    }
    fn mean_flow(&self, _x: &Vector) -> Vector {
        Vector::zeros(2)
    }
    fn fields(&self, x: &Vector) -> Matrix {
        let mut m = Matrix::zeros(2, self.n_fields());
        for (j, k) in self.wavevectors.iter().enumerate() {
            let e = Self::direction(k);
            let (s, c) = (k[0] * x[0] + k[1] * x[1]).sin_cos();
            for i in 0..2 {
                m[(i, 2 * j)] = e[i] * c;
                m[(i, 2 * j + 1)] = e[i] * s;
            }
        }
        m
    }
    fn field_jacobians(&self, x: &Vector) -> Vec<Matrix> {
        let mut out = Vec::with_capacity(self.n_fields());
        for k in &self.wavevectors {
            let e = Self::direction(k);
            let (s, c) = (k[0] * x[0] + k[1] * x[1]).sin_cos();
            let mut jc = Matrix::zeros(2, 2);
            let mut js = Matrix::zeros(2, 2);
            for i in 0..2 {
                for l in 0..2 {
                    jc[(i, l)] = -e[i] * k[l] * s;
                    js[(i, l)] = e[i] * k[l] * c;
                }
            }
            out.push(jc);
            out.push(js);
        }
        out
    }
}

impl<T: TurbulenceModel + ?Sized> TurbulenceModel for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn n_fields(&self) -> usize {
        (**self).n_fields()
    }
    fn c0(&self) -> f64 {
        (**self).c0()
    }
    fn k_t(&self, x: &Vector) -> f64 {
        (**self).k_t(x)
    }
    fn grad_k_t(&self, x: &Vector) -> Vector {
        (**self).grad_k_t(x)
    }
    fn k_t_floor(&self) -> f64 {
        (**self).k_t_floor()
    }
    fn k_t_ceiling(&self) -> f64 {
        (**self).k_t_ceiling()
    }
    fn mean_flow(&self, x: &Vector) -> Vector {
        (**self).mean_flow(x)
    }
    fn fields(&self, x: &Vector) -> Matrix {
        (**self).fields(x)
    }
    fn field_jacobians(&self, x: &Vector) -> Vec<Matrix> {
        (**self).field_jacobians(x)
    }
}

/// The general-model view of a turbulence model.
#[derive(Clone)]
pub struct TurbulenceCoefficients {
    inner: Arc<dyn TurbulenceModel>,
}

impl std::fmt::Debug for TurbulenceCoefficients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TurbulenceCoefficients")
            .field("n_fields", &self.inner.n_fields())
            .field("c0", &self.inner.c0())
            .finish()
    }
}

impl TurbulenceCoefficients {
    pub fn turbulence(&self) -> &Arc<dyn TurbulenceModel> {
        &self.inner
    }
}

// Probe grid used to validate `k_T ≥ k_T⁰` when converting a model.
fn probe_points() -> impl Iterator<Item = Vector> {
    (0..21).flat_map(|i| (0..21).map(move |j| Vector::from_vec(vec![-5.0 + 0.5 * i as f64, -5.0 + 0.5 * j as f64])))
}

fn check_k_t_floor(t: &dyn TurbulenceModel) -> Result<()> {
    let floor = t.k_t_floor();
    if !(floor > 0.0) || !(t.c0() > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "turbulence model needs c₀ > 0 and k_T⁰ > 0, got c₀ = {}, k_T⁰ = {floor}",
            t.c0()
        )));
    }
    for x in probe_points() {
        let value = t.k_t(&x);
        if !(value >= floor) {
            return Err(Error::KineticEnergyFloor {
                value,
                floor,
                x: x.iter().copied().collect(),
            });
        }
    }
    Ok(())
}

/// Wraps a turbulence model as a [`CoefficientModel`] after probing the
/// `k_T` floor on a grid.
pub fn as_coefficient_model(t: Arc<dyn TurbulenceModel>) -> Result<TurbulenceCoefficients> {
    check_k_t_floor(t.as_ref())?;
    Ok(TurbulenceCoefficients { inner: t })
}

/// OU driver of the turbulence model: `A = B = I_{|K|}`.
pub fn turbulence_noise(t: &dyn TurbulenceModel) -> NoiseSpec {
    NoiseSpec::identity(t.n_fields())
}

fn fields_derivative(jacobians: &[Matrix], l: usize, d: usize) -> Matrix {
    let mut m = Matrix::zeros(d, jacobians.len());
    for (k, jac) in jacobians.iter().enumerate() {
        m.set_column(k, &jac.column(l));
    }
    m
}

impl CoefficientModel for TurbulenceCoefficients {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn noise_dim(&self) -> usize {
        self.inner.n_fields()
    }
    fn drift(&self, x: &Vector) -> Vector {
        self.inner.mean_flow(x) * (self.inner.c0() * self.inner.k_t(x))
    }
    fn friction(&self, x: &Vector) -> Matrix {
        let d = self.inner.dim();
        Matrix::identity(d, d) * (self.inner.c0() * self.inner.k_t(x))
    }
    fn diffusion(&self, x: &Vector) -> Matrix {
        self.inner.fields(x) * (self.inner.c0() * self.inner.k_t(x))
    }
    fn friction_bounds(&self) -> (f64, f64) {
        let c0 = self.inner.c0();
        (c0 * self.inner.k_t_floor(), c0 * self.inner.k_t_ceiling())
    }
    fn derivatives(&self, x: &Vector) -> Option<DerivativeBundle> {
        let d = self.inner.dim();
        let c0 = self.inner.c0();
        let k = self.inner.k_t(x);
        let grad = self.inner.grad_k_t(x);
        let jac = self.inner.field_jacobians(x);
        let id = Matrix::identity(d, d);
        Some(DerivativeBundle {
            d_friction_inv: grad.iter().map(|g| &id * (-g / (c0 * k * k))).collect(),
            d_scaled_diffusion: (0..d).map(|l| fields_derivative(&jac, l, d)).collect(),
        })
    }
}

/// The scalar-friction view: `λ = c₀ k_T`, `ξ = Ξ`.
pub fn as_scalar_model(t: Arc<dyn TurbulenceModel>) -> Result<ScalarFrictionModel> {
    check_k_t_floor(t.as_ref())?;
    let d = t.dim();
    let (t1, t2, t3, t4, t5) = (t.clone(), t.clone(), t.clone(), t.clone(), t.clone());
    let c0 = t.c0();
    ScalarFrictionModel::new(
        d,
        t.n_fields(),
        (c0 * t.k_t_floor(), c0 * t.k_t_ceiling()),
        move |x| t1.c0() * t1.k_t(x),
        move |x| t2.grad_k_t(x) * t2.c0(),
        move |x| t3.fields(x),
        move |x| {
            let jac = t4.field_jacobians(x);
            (0..d).map(|l| fields_derivative(&jac, l, d)).collect()
        },
        move |x| t5.mean_flow(x) * (t5.c0() * t5.k_t(x)),
    )
}
