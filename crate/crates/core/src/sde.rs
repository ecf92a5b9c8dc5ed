//! Time integrators.
//!
//! Every coupled run starts from one [`DrivingPath`]: the OU states `z_k`
//! on the grid together with the Brownian increments `ΔW_k` that produced
//! them, sampled jointly and exactly. The pre-limit integrator reads `z`,
//! the limit integrator reads `ΔW`, so both see the same noise.

use std::collections::HashMap;
use std::sync::RwLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::drift::{self, Alpha, DriftContext};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{self, CellularFlow, CoefficientModel, NoiseSpec, ScalarFrictionModel, TurbulenceModel};

const PSD_TOL: f64 = 1e-12;

/// How the mass `μ` depends on the correlation time `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuRule {
    Fixed(f64),
    /// `μ = α ε`
    Proportional(f64),
    /// `μ = ε^g`
    Power(f64),
}

impl MuRule {
    pub fn mu(&self, eps: f64) -> f64 {
        match *self {
            MuRule::Fixed(mu) => mu,
            MuRule::Proportional(a) => a * eps,
            MuRule::Power(g) => eps.powf(g),
        }
    }

    /// `lim μ(ε)/ε` as `ε → 0`, when the rule determines it.
    pub fn limit_alpha(&self) -> Option<Alpha> {
        match *self {
            MuRule::Fixed(_) => None,
            MuRule::Proportional(a) => Alpha::new(a).ok(),
            MuRule::Power(g) if g > 1.0 => Some(Alpha::Zero),
            MuRule::Power(g) if g < 1.0 => Some(Alpha::Infinite),
            MuRule::Power(_) => Some(Alpha::Finite(1.0)),
        }
    }
}

/// Configuration of one coupled trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    pub epsilon: f64,
    pub mu: MuRule,
    pub alpha: Alpha,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub seed: u64,
    pub trajectory_index: u64,
}

impl SimConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.dt > 0.0) || !(self.horizon >= self.dt) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need 0 < dt <= T, got dt = {}, T = {}",
                self.dt, self.horizon
            )));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        let mu = self.mu_value();
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
        }
        for (name, v) in [("x0", &self.x0), ("v0", &self.v0)] {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: if name == "x0" {
                        "initial position"
                    } else {
                        "initial velocity"
                    },
                    expected: dim.to_string(),
                    got: v.len().to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn mu_value(&self) -> f64 {
        self.mu.mu(self.epsilon)
    }

    pub fn n_steps(&self) -> Result<usize> {
        grid_steps(self.horizon, self.dt)
    }
}

/// Number of steps of size `dt` covering `[0, horizon]`.
pub fn grid_steps(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need positive dt and horizon, got dt = {dt}, T = {horizon}"
        )));
    }
    let ratio = horizon / dt;
    let rounded = ratio.round();
    let n = if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
        rounded
    } else {
        ratio.ceil()
    };
    Ok(n.max(1.0) as usize)
}

/// Per-trajectory Gaussian source, fully determined by
/// `(master_seed, trajectory_index)`.
#[derive(Debug, Clone)]
pub struct BrownianStream {
    rng: ChaCha8Rng,
}

impl BrownianStream {
    pub fn new(master_seed: u64, trajectory_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(trajectory_index);
        Self { rng }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn fill_standard(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.rng.sample(StandardNormal);
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// `n_steps` increments `ΔW ~ N(0, dt I_m)`.
    pub fn increments(&mut self, n_steps: usize, m: usize, dt: f64) -> Vec<Vector> {
        let scale = dt.sqrt();
        (0..n_steps)
            .map(|_| Vector::from_fn(m, |_, _| scale * self.standard_normal()))
            .collect()
    }
}

/// Exact joint sampler for one OU step and its Brownian increment.
///
/// Over a step of length `dt`, `z' = E z + η` with `E = e^{−A dt/ε}`, and
/// `(η, ΔW)` is Gaussian with
/// `Cov η = (M − E M Eᵀ)/ε`, `Cov(η, ΔW) = A⁻¹(I − E)B`, `Cov ΔW = dt I`.
#[derive(Debug, Clone)]
pub struct OuStepper {
    n: usize,
    m: usize,
    eps: f64,
    dt: f64,
    decay: Matrix,
    step_cov: Matrix,
    joint_factor: Matrix,
    a_inv_b: Matrix,
    a_inv: Matrix,
}

impl OuStepper {
    /// `gram` is the stationary covariance `M` of the unit-time process.
    pub fn new(noise: &NoiseSpec, gram: &Matrix, eps: f64, dt: f64) -> Result<Self> {
        if !(eps > 0.0) || !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "OU step needs eps > 0 and dt > 0, got eps = {eps}, dt = {dt}"
            )));
        }
        let n = noise.dim();
        let m = noise.brownian_dim();
        if gram.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                context: "OU stationary covariance",
                expected: format!("{n}x{n}"),
                got: format!("{}x{}", gram.nrows(), gram.ncols()),
            });
        }
        let decay = linalg::matrix_exponential(&(-noise.a() / eps), dt)?;
        let step_cov = linalg::symmetrize(&((gram - &decay * gram * decay.transpose()) / eps));
        let a_inv = model::invert(noise.a())?;
        let cross = &a_inv * (Matrix::identity(n, n) - &decay) * noise.b();
        let mut joint = Matrix::zeros(n + m, n + m);
        joint.view_mut((0, 0), (n, n)).copy_from(&step_cov);
        joint.view_mut((0, n), (n, m)).copy_from(&cross);
        joint.view_mut((n, 0), (m, n)).copy_from(&cross.transpose());
        joint.view_mut((n, n), (m, m)).fill_with_identity();
        joint.view_mut((n, n), (m, m)).scale_mut(dt);
        let scale = linalg::max_abs(&joint).max(1.0);
        let joint_factor = linalg::psd_sqrt(&joint, PSD_TOL * scale)?;
        Ok(Self {
            n,
            m,
            eps,
            dt,
            decay,
            step_cov,
            joint_factor,
            a_inv_b: &a_inv * noise.b(),
            a_inv,
        })
    }

    /// Length of the standard normal vector consumed per step (`n + m`).
    pub fn gaussian_dim(&self) -> usize {
        self.n + self.m
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn decay(&self) -> &Matrix {
        &self.decay
    }

    /// `Σ_dt`, the covariance of the OU innovation.
    pub fn step_covariance(&self) -> &Matrix {
        &self.step_cov
    }

    /// Advances `z` and returns `(z', ΔW)`.
    pub fn step(&self, z: &Vector, gauss: &[f64]) -> (Vector, Vector) {
        let g = Vector::from_column_slice(gauss);
        let joint = &self.joint_factor * g;
        let eta = joint.rows(0, self.n);
        let dw = joint.rows(self.n, self.m).into_owned();
        (&self.decay * z + eta, dw)
    }

    /// Exact time average of `z` over a step: from
    /// `ε(z' − z) = −A ∫z dt + B ΔW`.
    pub fn step_mean(&self, z: &Vector, z_next: &Vector, dw: &Vector) -> Vector {
        (&self.a_inv_b * dw - &self.a_inv * (z_next - z) * self.eps) / self.dt
    }
}

/// One exact OU step. `gauss` has length `n + m`; the Brownian increment
/// it implies is discarded.
pub fn ou_step(z: &Vector, noise: &NoiseSpec, eps: f64, dt: f64, gauss: &[f64]) -> Result<Vector> {
    let gram = drift::compute_m(noise)?;
    let stepper = OuStepper::new(noise, &gram, eps, dt)?;
    if gauss.len() != stepper.gaussian_dim() {
        return Err(Error::DimensionMismatch {
            context: "OU step Gaussian draw",
            expected: stepper.gaussian_dim().to_string(),
            got: gauss.len().to_string(),
        });
    }
    Ok(stepper.step(z, gauss).0)
}

/// OU path and Brownian increments on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingPath {
    pub dt: f64,
    /// `z_0 = 0, …, z_N`
    pub z: Vec<Vector>,
    /// `ΔW_0, …, ΔW_{N−1}`
    pub dw: Vec<Vector>,
    /// Time average of `z` over each step.
    pub z_mean: Vec<Vector>,
}

impl DrivingPath {
    pub fn generate(ou: &OuStepper, n_steps: usize, stream: &mut BrownianStream) -> Self {
        let mut gauss = vec![0.0; ou.gaussian_dim()];
        let mut z = Vec::with_capacity(n_steps + 1);
        let mut dw = Vec::with_capacity(n_steps);
        let mut z_mean = Vec::with_capacity(n_steps);
        z.push(Vector::zeros(ou.n));
        for k in 0..n_steps {
            stream.fill_standard(&mut gauss);
            let (next, inc) = ou.step(&z[k], &gauss);
            z_mean.push(ou.step_mean(&z[k], &next, &inc));
            z.push(next);
            dw.push(inc);
        }
        Self {
            dt: ou.dt,
            z,
            dw,
            z_mean,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.dw.len()
    }

    /// The same path seen on a grid `stride` times coarser.
    pub fn coarsen(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !self.n_steps().is_multiple_of(stride) {
            return Err(Error::InvalidParameter(format!(
                "stride {stride} does not divide {} steps",
                self.n_steps()
            )));
        }
        let chunks = self.n_steps() / stride;
        let sum = |v: &[Vector]| v.iter().skip(1).fold(v[0].clone(), |acc, x| acc + x);
        Ok(Self {
            dt: self.dt * stride as f64,
            z: self.z.iter().step_by(stride).cloned().collect(),
            dw: (0..chunks)
                .map(|c| sum(&self.dw[c * stride..(c + 1) * stride]))
                .collect(),
            z_mean: (0..chunks)
                .map(|c| sum(&self.z_mean[c * stride..(c + 1) * stride]) / stride as f64)
                .collect(),
        })
    }
}

/// Brownian increments on a fine grid, summed in groups of `stride` for
/// the coarse grid. A trailing partial group is dropped.
pub fn coarsen_increments(dw: &[Vector], stride: usize) -> Vec<Vector> {
    dw.chunks_exact(stride.max(1))
        .map(|c| c.iter().skip(1).fold(c[0].clone(), |acc, x| acc + x))
        .collect()
}

/// Position path of one integrator. A non-finite state stops the run; the
/// path then holds the states up to and excluding the failing step.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    pub x: Vec<Vector>,
    pub v: Option<Vec<Vector>>,
    pub blow_up: Option<usize>,
}

impl PathOutcome {
    pub fn flagged(&self) -> bool {
        self.blow_up.is_some()
    }

    pub fn terminal(&self) -> &Vector {
        self.x.last().expect("paths hold at least the initial state")
    }
}

fn is_finite(v: &Vector) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// `(e^{−γ dt/μ}, (I − e^{−γ dt/μ}) γ⁻¹)`.
fn friction_propagator(gamma: &Matrix, dt: f64, mu: f64) -> Result<(Matrix, Matrix)> {
    let d = gamma.nrows();
    let g = gamma[(0, 0)];
    if *gamma == Matrix::identity(d, d) * g {
        if !(g > 0.0) {
            return Err(Error::InvalidParameter(format!("friction must be positive, got {g}")));
        }
        let h = g * dt / mu;
        let id = Matrix::identity(d, d);
        return Ok((&id * (-h).exp(), &id * (-(-h).exp_m1() / g)));
    }
    let decay = linalg::matrix_exponential(&(-gamma / mu), dt)?;
    let gain = (Matrix::identity(d, d) - &decay) * model::invert(gamma)?;
    Ok((decay, gain))
}

/// Frozen-coefficient exponential step of `μ dv = (b − γv + σ z) dt` with
/// `z` held at `z_force`, followed by a trapezoidal position update.
pub fn velocity_position_step(
    model: &dyn CoefficientModel,
    x: &Vector,
    v: &Vector,
    z_force: &Vector,
    mu: f64,
    dt: f64,
) -> Result<(Vector, Vector)> {
    let (decay, gain) = friction_propagator(&model.friction(x), dt, mu)?;
    let force = model.drift(x) + model.diffusion(x) * z_force;
    let v_next = decay * v + gain * force;
    let x_next = x + (v + &v_next) * (0.5 * dt);
    Ok((x_next, v_next))
}

/// State of the inertial system.
#[derive(Debug, Clone, PartialEq)]
pub struct InertialState {
    pub x: Vector,
    pub v: Vector,
    pub z: Vector,
}

/// Advances the OU driver exactly and then `(x, v)` with the driver frozen
/// at its time average over the step. Returns the new state and the
/// Brownian increment consumed.
pub fn inertial_step(
    state: &InertialState,
    model: &dyn CoefficientModel,
    ou: &OuStepper,
    mu: f64,
    gauss: &[f64],
) -> Result<(InertialState, Vector)> {
    let (z, dw) = ou.step(&state.z, gauss);
    let force = ou.step_mean(&state.z, &z, &dw);
    let (x, v) = velocity_position_step(model, &state.x, &state.v, &force, mu, ou.dt)?;
    Ok((InertialState { x, v, z }, dw))
}

/// Runs the inertial system along a driving path.
pub fn integrate_inertial(
    model: &dyn CoefficientModel,
    path: &DrivingPath,
    mu: f64,
    x0: &Vector,
    v0: &Vector,
) -> Result<PathOutcome> {
    let n = path.n_steps();
    let mut xs = Vec::with_capacity(n + 1);
    let mut vs = Vec::with_capacity(n + 1);
    xs.push(x0.clone());
    vs.push(v0.clone());
    for k in 0..n {
        let (x, v) = velocity_position_step(model, &xs[k], &vs[k], &path.z_mean[k], mu, path.dt)?;
        if !is_finite(&x) || !is_finite(&v) {
            return Ok(PathOutcome {
                x: xs,
                v: Some(vs),
                blow_up: Some(k),
            });
        }
        xs.push(x);
        vs.push(v);
    }
    Ok(PathOutcome {
        x: xs,
        v: Some(vs),
        blow_up: None,
    })
}

/// Drift and diffusion of a first-order Itô SDE `dx = a(x) dt + G(x) dW`.
pub trait LimitCoefficients: Send + Sync {
    fn dim(&self) -> usize;
    fn brownian_dim(&self) -> usize;
    fn drift(&self, x: &Vector) -> Result<Vector>;
    fn diffusion(&self, x: &Vector) -> Result<Matrix>;
}

/// One Euler–Maruyama step.
pub fn limit_step(x: &Vector, limit: &dyn LimitCoefficients, dt: f64, dw: &Vector) -> Result<Vector> {
    Ok(x + limit.drift(x)? * dt + limit.diffusion(x)? * dw)
}

pub fn integrate_limit(limit: &dyn LimitCoefficients, dw: &[Vector], dt: f64, x0: &Vector) -> Result<PathOutcome> {
    let mut xs = Vec::with_capacity(dw.len() + 1);
    xs.push(x0.clone());
    for (k, inc) in dw.iter().enumerate() {
        let x = limit_step(&xs[k], limit, dt, inc)?;
        if !is_finite(&x) {
            return Ok(PathOutcome {
                x: xs,
                v: None,
                blow_up: Some(k),
            });
        }
        xs.push(x);
    }
    Ok(PathOutcome {
        x: xs,
        v: None,
        blow_up: None,
    })
}

/// Memo of `f_α` on the lattice `h ℤᵈ`; a point is served the value at its
/// nearest lattice node, so results do not depend on evaluation order.
#[derive(Debug)]
pub struct DriftCache {
    resolution: f64,
    table: RwLock<HashMap<Vec<i64>, Vector>>,
}

impl DriftCache {
    pub fn new(resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cache resolution must be positive, got {resolution}"
            )));
        }
        Ok(Self {
            resolution,
            table: RwLock::new(HashMap::new()),
        })
    }

    fn node(&self, x: &Vector) -> (Vec<i64>, Vector) {
        let key: Vec<i64> = x.iter().map(|c| (c / self.resolution).round() as i64).collect();
        let centre = Vector::from_iterator(x.len(), key.iter().map(|&k| k as f64 * self.resolution));
        (key, centre)
    }

    fn get_or(&self, x: &Vector, eval: impl FnOnce(&Vector) -> Result<Vector>) -> Result<Vector> {
        let (key, centre) = self.node(x);
        if let Some(v) = self.table.read().expect("cache lock").get(&key) {
            return Ok(v.clone());
        }
        let value = eval(&centre)?;
        self.table.write().expect("cache lock").insert(key, value.clone());
        Ok(value)
    }

    pub fn len(&self) -> usize {
        self.table.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Limit SDE of a general model: drift `γ⁻¹b + f_α`, diffusion `γ⁻¹σA⁻¹B`.
pub struct GeneralLimit<'a> {
    model: &'a dyn CoefficientModel,
    ctx: DriftContext,
    alpha: Alpha,
    cache: Option<DriftCache>,
}

impl<'a> GeneralLimit<'a> {
    pub fn new(model: &'a dyn CoefficientModel, noise: &NoiseSpec, alpha: Alpha) -> Result<Self> {
        if model.noise_dim() != noise.dim() {
            return Err(Error::DimensionMismatch {
                context: "model noise dimension vs NoiseSpec",
                expected: model.noise_dim().to_string(),
                got: noise.dim().to_string(),
            });
        }
        Ok(Self {
            model,
            ctx: DriftContext::new(noise)?,
            alpha,
            cache: None,
        })
    }

    /// Serve `f_α` from a lattice cache of the given spacing.
    pub fn with_cache(mut self, resolution: f64) -> Result<Self> {
        self.cache = Some(DriftCache::new(resolution)?);
        Ok(self)
    }

    pub fn cache(&self) -> Option<&DriftCache> {
        self.cache.as_ref()
    }
}

impl LimitCoefficients for GeneralLimit<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn brownian_dim(&self) -> usize {
        self.ctx.noise().brownian_dim()
    }
    fn drift(&self, x: &Vector) -> Result<Vector> {
        let gamma_inv = model::invert(&self.model.friction(x))?;
        let f = match &self.cache {
            Some(cache) => cache.get_or(x, |c| self.ctx.inertial_drift(self.model, self.alpha, c))?,
            None => self.ctx.inertial_drift(self.model, self.alpha, x)?,
        };
        Ok(gamma_inv * self.model.drift(x) + f)
    }
    fn diffusion(&self, x: &Vector) -> Result<Matrix> {
        self.ctx.limit_diffusion(self.model, x)
    }
}

/// Limit SDE of a scalar-friction model through the closed-form drift
/// (requires `A = I`).
pub struct ScalarLimit<'a> {
    model: &'a ScalarFrictionModel,
    noise: &'a NoiseSpec,
    alpha: Alpha,
}

impl<'a> ScalarLimit<'a> {
    pub fn new(model: &'a ScalarFrictionModel, noise: &'a NoiseSpec, alpha: Alpha) -> Result<Self> {
        if !noise.a_is_identity() {
            return Err(Error::InvalidParameter("the scalar closed form requires A = I".into()));
        }
        if model.noise_dim() != noise.dim() {
            return Err(Error::DimensionMismatch {
                context: "model noise dimension vs NoiseSpec",
                expected: model.noise_dim().to_string(),
                got: noise.dim().to_string(),
            });
        }
        Ok(Self { model, noise, alpha })
    }
}

impl LimitCoefficients for ScalarLimit<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn brownian_dim(&self) -> usize {
        self.noise.brownian_dim()
    }
    fn drift(&self, x: &Vector) -> Result<Vector> {
        let f = drift::scalar_drift(self.model, self.noise, self.alpha, x)?;
        Ok(self.model.mean_drift(x) / self.model.lambda(x) + f)
    }
    fn diffusion(&self, x: &Vector) -> Result<Matrix> {
        Ok(self.model.xi(x) * self.noise.b())
    }
}

/// Limit SDE of a turbulence model in Itô form,
/// `dx = (ū + ½ Σ Dξ_k ξ_k − b_α) dt + Σ ξ_k dW^k`. At `α = 0` this is the
/// drift-free (Stratonovich) control.
pub struct TurbulenceLimit<'a> {
    model: &'a dyn TurbulenceModel,
    alpha: Alpha,
}

impl<'a> TurbulenceLimit<'a> {
    pub fn new(model: &'a dyn TurbulenceModel, alpha: Alpha) -> Self {
        Self { model, alpha }
    }
}

impl LimitCoefficients for TurbulenceLimit<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn brownian_dim(&self) -> usize {
        self.model.n_fields()
    }
    fn drift(&self, x: &Vector) -> Result<Vector> {
        drift::turbulence_ito_drift(self.model, self.alpha, x)
    }
    fn diffusion(&self, x: &Vector) -> Result<Matrix> {
        Ok(self.model.fields(x))
    }
}

/// Largest grid distance between two paths over their common prefix.
pub fn sup_distance(a: &[Vector], b: &[Vector]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

/// A stored trajectory on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: Vec<Vector>,
    /// Pre-limit only.
    pub v: Option<Vec<Vector>>,
    /// Pre-limit only.
    pub z: Option<Vec<Vector>>,
    pub blow_up: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRun {
    pub pre_limit: Trajectory,
    pub limit: Trajectory,
    pub sup_distance: f64,
}

impl CoupledRun {
    pub fn flagged(&self) -> bool {
        self.pre_limit.blow_up.is_some() || self.limit.blow_up.is_some()
    }
}

/// Coupled pre-limit and limit trajectories with the general limit drift.
pub fn run_coupled(config: &SimConfig, model: &dyn CoefficientModel, noise: &NoiseSpec) -> Result<CoupledRun> {
    let limit = GeneralLimit::new(model, noise, config.alpha)?;
    run_coupled_with(config, model, noise, &limit)
}

pub fn run_coupled_with(
    config: &SimConfig,
    model: &dyn CoefficientModel,
    noise: &NoiseSpec,
    limit: &dyn LimitCoefficients,
) -> Result<CoupledRun> {
    let index = config.trajectory_index;
    let inner = || -> Result<CoupledRun> {
        config.validate(model.dim())?;
        let n = config.n_steps()?;
        let gram = drift::compute_m(noise)?;
        let ou = OuStepper::new(noise, &gram, config.epsilon, config.dt)?;
        let mut stream = BrownianStream::new(config.seed, index);
        let path = DrivingPath::generate(&ou, n, &mut stream);
        let x0 = Vector::from_column_slice(&config.x0);
        let v0 = Vector::from_column_slice(&config.v0);
        let pre = integrate_inertial(model, &path, config.mu_value(), &x0, &v0)?;
        let lim = integrate_limit(limit, &path.dw, path.dt, &x0)?;
        let times = |len: usize| (0..len).map(|k| k as f64 * config.dt).collect::<Vec<_>>();
        let sup = sup_distance(&pre.x, &lim.x);
        let z_len = pre.x.len();
        Ok(CoupledRun {
            pre_limit: Trajectory {
                times: times(pre.x.len()),
                x: pre.x,
                v: pre.v,
                z: Some(path.z[..z_len].to_vec()),
                blow_up: pre.blow_up,
            },
            limit: Trajectory {
                times: times(lim.x.len()),
                x: lim.x,
                v: None,
                z: None,
                blow_up: lim.blow_up,
            },
            sup_distance: sup,
        })
    };
    inner().map_err(|e| e.in_trajectory(index))
}

/// Exact sampler for the frozen fast system
/// `α du = (−γ(x)u + σ(x)z) dt`, `dz = −Az dt + B dw` at a fixed `x`.
#[derive(Debug, Clone)]
pub struct FrozenFastStepper {
    transition: Matrix,
    factor: Matrix,
    d: usize,
}

impl FrozenFastStepper {
    pub fn new(model: &dyn CoefficientModel, noise: &NoiseSpec, alpha: f64, x: &Vector, dt: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "the frozen fast system needs alpha in (0, inf), got {alpha}"
            )));
        }
        if model.noise_dim() != noise.dim() {
            return Err(Error::DimensionMismatch {
                context: "model noise dimension vs NoiseSpec",
                expected: model.noise_dim().to_string(),
                got: noise.dim().to_string(),
            });
        }
        let (generator, forcing) = drift::frozen_fast_generator(model, noise, alpha, x);
        let (transition, cov) = linalg::linear_sde_step(&generator, &forcing, dt)?;
        let scale = linalg::max_abs(&cov).max(1e-300);
        let factor = linalg::psd_sqrt(&cov, PSD_TOL * scale.max(1.0))?;
        Ok(Self {
            transition,
            factor,
            d: model.dim(),
        })
    }

    /// Dimension of the joint state `(u, z)`.
    pub fn dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn velocity_dim(&self) -> usize {
        self.d
    }

    pub fn step(&self, state: &Vector, gauss: &[f64]) -> Vector {
        &self.transition * state + &self.factor * Vector::from_column_slice(gauss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FastTrajectory {
    pub times: Vec<f64>,
    pub u: Vec<Vector>,
    pub z: Vec<Vector>,
}

/// Trajectory of the frozen fast system from `(u, z) = (0, 0)`.
pub fn simulate_frozen_fast(
    x_frozen: &Vector,
    model: &dyn CoefficientModel,
    noise: &NoiseSpec,
    alpha: f64,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<FastTrajectory> {
    let stepper = FrozenFastStepper::new(model, noise, alpha, x_frozen, dt)?;
    let n = grid_steps(horizon, dt)?;
    let d = stepper.velocity_dim();
    let mut stream = BrownianStream::new(seed, 0);
    let mut gauss = vec![0.0; stepper.dim()];
    let mut state = Vector::zeros(stepper.dim());
    let mut out = FastTrajectory {
        times: Vec::with_capacity(n + 1),
        u: Vec::with_capacity(n + 1),
        z: Vec::with_capacity(n + 1),
    };
    for k in 0..=n {
        if k > 0 {
            stream.fill_standard(&mut gauss);
            state = stepper.step(&state, &gauss);
            if !is_finite(&state) {
                return Err(Error::BlowUp { index: 0, step: k });
            }
        }
        out.times.push(k as f64 * dt);
        out.u.push(state.rows(0, d).into_owned());
        out.z.push(state.rows(d, stepper.dim() - d).into_owned());
    }
    Ok(out)
}

/// Flow of `dx/ds = ξ(x)` for the cellular field over signed time `s`,
/// by classical Runge–Kutta with substeps of at most `0.01/k`.
fn cellular_field_flow(c: &CellularFlow, x: &Vector, s: f64) -> Vector {
    let field = |p: &Vector| c.fields(p).column(0).into_owned();
    let kmax = c.k1.abs().max(c.k2.abs());
    let substeps = ((s.abs() * kmax / 0.01).ceil() as usize).max(1);
    let h = s / substeps as f64;
    let mut p = x.clone();
    for _ in 0..substeps {
        let k1 = field(&p);
        let k2 = field(&(&p + &k1 * (0.5 * h)));
        let k3 = field(&(&p + &k2 * (0.5 * h)));
        let k4 = field(&(&p + &k3 * h));
        p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    p
}

/// Lie splitting for the cellular limit `dx = −b_α dt + ξ ∘ dW`: an Euler
/// step on `−b_α`, then the exact (RK4-resolved) flow of `ξ` over `ΔW`.
/// The noise substep moves along level sets of `ψ`.
pub fn cellular_split_step(c: &CellularFlow, alpha: Alpha, x: &Vector, dt: f64, dw: f64) -> Result<Vector> {
    let drift = drift::turbulence_drift(c, alpha, x)?;
    let y = x + drift.total * dt;
    Ok(cellular_field_flow(c, &y, dw))
}
