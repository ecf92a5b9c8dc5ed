#![allow(dead_code)]

use std::ops::{Add, Mul, Neg};

use inertial_drift::linalg::matrix_exponential;
use inertial_drift::model::{CustomModel, ScalarFrictionModel};
use inertial_drift::{DerivativeBundle, Matrix, NoiseSpec, Vector};
use rand::Rng;

pub fn random_matrix(rng: &mut impl Rng, n: usize, m: usize, scale: f64) -> Matrix {
    Matrix::from_fn(n, m, |_, _| scale * rng.random_range(-1.0..1.0))
}

/// `OU` parameters with `−A` stable: `A = R + (‖R‖_F + 0.5) I`.
pub fn random_noise(rng: &mut impl Rng, n: usize, m: usize) -> NoiseSpec {
    let r = random_matrix(rng, n, n, 0.5);
    let a = &r + Matrix::identity(n, n) * (r.norm() + 0.5);
    NoiseSpec::new(a, random_matrix(rng, n, m, 1.0)).unwrap()
}

/// `γ(x) = G₀ + Σ_l sin(x_l) G_l`, `σ(x) = S₀ + Σ_l cos(x_l) S_l`,
/// `b(x) = b₀ sin(x₀)`, with analytic derivatives. The symmetric part of
/// `γ` stays in `[1, 2c]`.
pub fn random_model(rng: &mut impl Rng, d: usize, n: usize) -> CustomModel {
    let r0 = random_matrix(rng, d, d, 0.5);
    let gl: Vec<Matrix> = (0..d).map(|_| random_matrix(rng, d, d, 0.3)).collect();
    let c = 1.0 + r0.norm() + gl.iter().map(|g| g.norm()).sum::<f64>();
    let g0 = &r0 + Matrix::identity(d, d) * c;
    let s0 = random_matrix(rng, d, n, 1.0);
    let sl: Vec<Matrix> = (0..d).map(|_| random_matrix(rng, d, n, 0.4)).collect();
    let b0 = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));

    let (g0c, glc) = (g0.clone(), gl.clone());
    let gamma = move |x: &Vector| {
        let mut g = g0c.clone();
        for (l, gl) in glc.iter().enumerate() {
            g += gl * x[l].sin();
        }
        g
    };
    let (s0c, slc) = (s0.clone(), sl.clone());
    let sigma = move |x: &Vector| {
        let mut s = s0c.clone();
        for (l, sl) in slc.iter().enumerate() {
            s += sl * x[l].cos();
        }
        s
    };
    let (gamma2, sigma2) = (gamma.clone(), sigma.clone());
    let derivs = move |x: &Vector| {
        let gi = gamma2(x).try_inverse().unwrap();
        let s = sigma2(x);
        let mut d_friction_inv = Vec::new();
        let mut d_scaled_diffusion = Vec::new();
        for l in 0..x.len() {
            let dg = &gl[l] * x[l].cos();
            let ds = &sl[l] * (-x[l].sin());
            let dgi = -&gi * dg * &gi;
            d_scaled_diffusion.push(&dgi * &s + &gi * ds);
            d_friction_inv.push(dgi);
        }
        DerivativeBundle {
            d_friction_inv,
            d_scaled_diffusion,
        }
    };
    CustomModel::new(d, n, (1.0, 2.0 * c), move |x| &b0 * x[0].sin(), gamma, sigma).with_derivatives(derivs)
}

/// `λ(x) = c + Σ a_l sin(w_l x_l + p_l)` and `ξ(x) = X₀ + Σ_l sin(x_l) X_l`.
pub fn random_scalar_model(rng: &mut impl Rng, d: usize, n: usize) -> ScalarFrictionModel {
    let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
    let p: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..6.0)).collect();
    let c = 0.5 + a.iter().map(|v| v.abs()).sum::<f64>();
    let bounds = (
        c - a.iter().map(|v| v.abs()).sum::<f64>(),
        c + a.iter().map(|v| v.abs()).sum::<f64>(),
    );
    let x0 = random_matrix(rng, d, n, 1.0);
    let xl: Vec<Matrix> = (0..d).map(|_| random_matrix(rng, d, n, 0.5)).collect();
    let b0 = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));

    let (a1, w1, p1) = (a.clone(), w.clone(), p.clone());
    let lambda = move |x: &Vector| c + (0..x.len()).map(|l| a1[l] * (w1[l] * x[l] + p1[l]).sin()).sum::<f64>();
    let grad = move |x: &Vector| Vector::from_fn(x.len(), |l, _| a[l] * w[l] * (w[l] * x[l] + p[l]).cos());
    let xl1 = xl.clone();
    let xi = move |x: &Vector| {
        let mut m = x0.clone();
        for (l, xl) in xl1.iter().enumerate() {
            m += xl * x[l].sin();
        }
        m
    };
    let jac = move |x: &Vector| (0..x.len()).map(|l| &xl[l] * x[l].cos()).collect();
    ScalarFrictionModel::new(d, n, bounds, lambda, grad, xi, jac, move |x| &b0 * x[0].cos()).unwrap()
}

pub fn random_point(rng: &mut impl Rng, d: usize) -> Vector {
    Vector::from_fn(d, |_, _| rng.random_range(-3.0..3.0))
}

pub fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm()
}

/// `∫₀^∞ e^{Ft} W e^{Fᵀt} dt` by composite 5-point Gauss–Legendre.
pub fn lyapunov_integral(f: &Matrix, w: &Matrix, horizon: f64, panel: f64) -> Matrix {
    let nodes = [
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.0, 0.568_888_888_888_888_9),
        (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let local: Vec<(Matrix, f64)> = nodes
        .iter()
        .map(|&(s, wt)| {
            (
                matrix_exponential(f, 0.5 * panel * (s + 1.0)).unwrap(),
                0.5 * panel * wt,
            )
        })
        .collect();
    let jump = matrix_exponential(f, panel).unwrap();
    let n = f.nrows();
    let mut start = Matrix::identity(n, n);
    let mut acc = Matrix::zeros(n, n);
    let panels = (horizon / panel).ceil() as usize;
    for _ in 0..panels {
        for (e, wt) in &local {
            let p = &start * e;
            acc += &p * w * p.transpose() * *wt;
        }
        start = &start * &jump;
    }
    acc
}

/// Hyper-dual number `a + b ε₁ + c ε₂ + d ε₁ε₂` with `ε₁² = ε₂² = 0`;
/// the `ε₁ε₂` part of `f(x + e_i ε₁ + e_j ε₂)` is exactly `∂_i ∂_j f`.
#[derive(Debug, Clone, Copy)]
pub struct Hd {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Hd {
    pub fn constant(a: f64) -> Self {
        Hd {
            a,
            b: 0.0,
            c: 0.0,
            d: 0.0,
        }
    }
    pub fn sin(self) -> Self {
        let (s, c) = self.a.sin_cos();
        Hd {
            a: s,
            b: c * self.b,
            c: c * self.c,
            d: c * self.d - s * self.b * self.c,
        }
    }
    pub fn cos(self) -> Self {
        let (s, c) = self.a.sin_cos();
        Hd {
            a: c,
            b: -s * self.b,
            c: -s * self.c,
            d: -s * self.d - c * self.b * self.c,
        }
    }
}

impl Add for Hd {
    type Output = Hd;
    fn add(self, o: Hd) -> Hd {
        Hd {
            a: self.a + o.a,
            b: self.b + o.b,
            c: self.c + o.c,
            d: self.d + o.d,
        }
    }
}

impl Mul for Hd {
    type Output = Hd;
    fn mul(self, o: Hd) -> Hd {
        Hd {
            a: self.a * o.a,
            b: self.a * o.b + self.b * o.a,
            c: self.a * o.c + self.c * o.a,
            d: self.a * o.d + self.b * o.c + self.c * o.b + self.d * o.a,
        }
    }
}

impl Neg for Hd {
    type Output = Hd;
    fn neg(self) -> Hd {
        Hd {
            a: -self.a,
            b: -self.b,
            c: -self.c,
            d: -self.d,
        }
    }
}

/// Gradient and Hessian of `f` at `x` through hyper-dual evaluation.
pub fn grad_hessian(f: impl Fn([Hd; 2]) -> Hd, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut arg = [Hd::constant(x[0]), Hd::constant(x[1])];
            arg[i].b += 1.0;
            arg[j].c += 1.0;
            let v = f(arg);
            g[i] = v.b;
            h[i][j] = v.d;
        }
    }
    (g, h)
}
