//! Dense small-matrix kernels.
//!
//! Everything here works on `nalgebra` dynamic matrices and targets the
//! sizes that show up in the drift computations (a few tens of unknowns at
//! most). The Lyapunov and Sylvester solvers vectorise the equation with
//! Kronecker products and solve the resulting linear system with a dense
//! LU factorisation.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Below this reciprocal condition number a vectorised matrix equation is
/// reported as singular instead of being solved.
pub const RCOND_FLOOR: f64 = 1e-12;

/// Margin used when deciding whether a spectral abscissa is negative.
pub const STABILITY_TOL: f64 = 1e-12;

/// Spectral abscissa of a matrix together with the stability verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub spectral_abscissa: f64,
    pub is_stable: bool,
}

impl StabilityReport {
    /// Stability of `f` in the continuous-time sense: every eigenvalue has
    /// real part below `-STABILITY_TOL`.
    pub fn of(f: &Matrix) -> Result<Self> {
        let spectral_abscissa = spectral_abscissa(f)?;
        Ok(Self {
            spectral_abscissa,
            is_stable: spectral_abscissa < -STABILITY_TOL,
        })
    }

    /// Checks that every eigenvalue of `a` has strictly positive real part by
    /// examining `-a`.
    pub fn of_negation(a: &Matrix) -> Result<Self> {
        Self::of(&(-a))
    }
}

pub(crate) fn ensure_square(f: &Matrix) -> Result<usize> {
    if f.nrows() != f.ncols() || f.nrows() == 0 {
        return Err(Error::NotSquare {
            rows: f.nrows(),
            cols: f.ncols(),
        });
    }
    Ok(f.nrows())
}

pub(crate) fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn norm1(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

// Padé(13) numerator coefficients b_0..b_13.
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

// Largest 1-norm for which the unscaled degree-13 approximant is accurate
// to double precision.
const THETA13: f64 = 5.371_920_351_148_152;

/// `exp(t F)` by scaling and squaring with the degree-13 Padé approximant.
pub fn matrix_exponential(f: &Matrix, t: f64) -> Result<Matrix> {
    let n = ensure_square(f)?;
    ensure_finite(f, "matrix_exponential input")?;
    if !t.is_finite() {
        return Err(Error::NonFinite("matrix_exponential time"));
    }
    if n == 1 {
        return Ok(Matrix::from_element(1, 1, (t * f[(0, 0)]).exp()));
    }
    let a = f * t;
    let norm = norm1(&a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-squarings);

    let id = Matrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;

    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).ok_or_else(|| Error::IllConditioned {
        rcond: 0.0,
        detail: " in Padé denominator".into(),
    })?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    ensure_finite(&r, "matrix_exponential output")?;
    Ok(r)
}

/// Largest real part over the eigenvalues of `f`.
pub fn spectral_abscissa(f: &Matrix) -> Result<f64> {
    let n = ensure_square(f)?;
    ensure_finite(f, "spectral_abscissa input")?;
    match n {
        1 => Ok(f[(0, 0)]),
        2 => {
            let (a, b, c, d) = (f[(0, 0)], f[(0, 1)], f[(1, 0)], f[(1, 1)]);
            let half_trace = 0.5 * (a + d);
            let disc = 0.25 * (a - d) * (a - d) + b * c;
            Ok(if disc >= 0.0 {
                half_trace + disc.sqrt()
            } else {
                half_trace
            })
        }
        _ => {
            let schur = Schur::try_new(f.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenNoConvergence(n))?;
            Ok(schur
                .complex_eigenvalues()
                .iter()
                .map(|z| z.re)
                .fold(f64::NEG_INFINITY, f64::max))
        }
    }
}

/// Eigenvalues of `f` as `(re, im)` pairs, used for diagnostics.
pub fn eigenvalues(f: &Matrix) -> Result<Vec<(f64, f64)>> {
    let n = ensure_square(f)?;
    let schur = Schur::try_new(f.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenNoConvergence(n))?;
    Ok(schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect())
}

/// Solves the vectorised system `K vec(X) = vec(C)` and returns `X` reshaped
/// to `rows x cols`, refusing systems whose reciprocal condition number is
/// below [`RCOND_FLOOR`].
fn solve_kronecker(k: Matrix, rhs: &Matrix) -> std::result::Result<Matrix, f64> {
    let (rows, cols) = rhs.shape();
    if k.nrows() == 1 {
        let pivot = k[(0, 0)];
        let rcond = if pivot == 0.0 { 0.0 } else { 1.0 };
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(rcond);
        }
        return Ok(Matrix::from_element(1, 1, rhs[(0, 0)] / pivot));
    }
    let knorm = norm1(&k);
    let lu = k.lu();
    let inv = match lu.try_inverse() {
        Some(inv) => inv,
        None => return Err(0.0),
    };
    let rcond = 1.0 / (knorm * norm1(&inv));
    if !(rcond >= RCOND_FLOOR) {
        return Err(if rcond.is_finite() { rcond } else { 0.0 });
    }
    let b = Vector::from_column_slice(rhs.as_slice());
    let x = inv * b;
    Ok(Matrix::from_column_slice(rows, cols, x.as_slice()))
}

/// Kronecker form of `X ↦ F X + X G` acting on column-major `vec(X)`.
fn sylvester_operator(f: &Matrix, g: &Matrix) -> Matrix {
    let d = f.nrows();
    let n = g.nrows();
    let mut k = Matrix::zeros(d * n, d * n);
    for j in 0..n {
        for i in 0..d {
            let row = j * d + i;
            for p in 0..d {
                k[(row, j * d + p)] += f[(i, p)];
            }
            for q in 0..n {
                k[(row, q * d + i)] += g[(q, j)];
            }
        }
    }
    k
}

/// Solves `F X + X G = C`.
///
/// Fails with [`Error::IllConditioned`] when the spectra of `F` and `-G`
/// (nearly) intersect; the error carries both spectra.
pub fn solve_sylvester(f: &Matrix, g: &Matrix, c: &Matrix) -> Result<Matrix> {
    let d = ensure_square(f)?;
    let n = ensure_square(g)?;
    if c.shape() != (d, n) {
        return Err(Error::DimensionMismatch {
            context: "solve_sylvester right-hand side",
            expected: format!("{d}x{n}"),
            got: format!("{}x{}", c.nrows(), c.ncols()),
        });
    }
    ensure_finite(f, "solve_sylvester F")?;
    ensure_finite(g, "solve_sylvester G")?;
    ensure_finite(c, "solve_sylvester C")?;
    solve_kronecker(sylvester_operator(f, g), c).map_err(|rcond| {
        let spectra = eigenvalues(f)
            .and_then(|ef| eigenvalues(&(-g)).map(|eg| (ef, eg)))
            .map(|(ef, eg)| format!("; eig(F) = {ef:?}, eig(-G) = {eg:?}"))
            .unwrap_or_default();
        Error::IllConditioned { rcond, detail: spectra }
    })
}

/// Solves the Lyapunov equation `F X + X Fᵀ = W` for a stable `F`.
///
/// The result is symmetrised when `W` is symmetric.
pub fn solve_lyapunov(f: &Matrix, w: &Matrix) -> Result<Matrix> {
    let d = ensure_square(f)?;
    if w.shape() != (d, d) {
        return Err(Error::DimensionMismatch {
            context: "solve_lyapunov right-hand side",
            expected: format!("{d}x{d}"),
            got: format!("{}x{}", w.nrows(), w.ncols()),
        });
    }
    ensure_finite(w, "solve_lyapunov W")?;
    let report = StabilityReport::of(f)?;
    if !report.is_stable {
        return Err(Error::Unstable {
            abscissa: report.spectral_abscissa,
            threshold: -STABILITY_TOL,
        });
    }
    let x = solve_kronecker(sylvester_operator(f, &f.transpose()), w).map_err(|rcond| Error::IllConditioned {
        rcond,
        detail: " in Lyapunov system".into(),
    })?;
    if is_symmetric(w, 0.0) {
        Ok(symmetrize(&x))
    } else {
        Ok(x)
    }
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    m.is_square() && max_abs(&(m - m.transpose())) <= tol
}

/// Symmetric square root of a positive semidefinite matrix.
///
/// Eigenvalues down to `-neg_tol` are clamped to zero; anything more
/// negative is reported as [`Error::NotPsd`].
pub fn psd_sqrt(m: &Matrix, neg_tol: f64) -> Result<Matrix> {
    ensure_square(m)?;
    let eig = SymmetricEigen::new(symmetrize(m));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -neg_tol {
        return Err(Error::NotPsd(min));
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * Matrix::from_diagonal(&roots) * v.transpose())
}

/// Exact discretisation of the linear SDE `dY = G Y dt + S dW` over a step
/// `dt`: returns the transition matrix `e^{G dt}` and the step covariance
/// `∫₀^dt e^{G s} S Sᵀ e^{Gᵀ s} ds`, both from one block exponential.
pub fn linear_sde_step(g: &Matrix, noise_cov: &Matrix, dt: f64) -> Result<(Matrix, Matrix)> {
    let n = ensure_square(g)?;
    let mut block = Matrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-g));
    block.view_mut((0, n), (n, n)).copy_from(noise_cov);
    block.view_mut((n, n), (n, n)).copy_from(&g.transpose());
    let e = matrix_exponential(&block, dt)?;
    let transition = e.view((n, n), (n, n)).transpose();
    let upper = e.view((0, n), (n, n)).into_owned();
    let cov = symmetrize(&(&transition * upper));
    Ok((transition, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, FRAC_PI_2};

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, data)
    }

    // Truncated Taylor series with scaling, independent of the Padé path.
    fn series_exp(f: &Matrix, t: f64) -> Matrix {
        let n = f.nrows();
        let a = f * t;
        let s = (norm1(&a).max(1.0)).log2().ceil() as i32 + 4;
        let a = a * 2f64.powi(-s);
        let mut term = Matrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &a / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = matrix_exponential(&Matrix::zeros(2, 2), 5.0).unwrap();
        assert_eq!(e, Matrix::identity(2, 2));
    }

    #[test]
    fn exp_scalar() {
        let e = matrix_exponential(&m(1, 1, &[-1.0]), 1.0).unwrap();
        assert!((e[(0, 0)] - 1.0 / E).abs() < 1e-15);
    }

    #[test]
    fn exp_rotation_quarter_turn() {
        let f = m(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let e = matrix_exponential(&f, FRAC_PI_2).unwrap();
        let oracle = series_exp(&f, FRAC_PI_2);
        let expected = m(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(max_abs(&(&e - &expected)) < 1e-14);
        assert!(max_abs(&(&e - &oracle)) < 1e-13);
    }

    #[test]
    fn exp_matches_series_on_larger_norm() {
        let f = m(3, 3, &[-4.0, 2.0, 0.5, 1.0, -6.0, 3.0, 0.2, -1.0, -2.0]);
        let e = matrix_exponential(&f, 3.0).unwrap();
        let oracle = series_exp(&f, 3.0);
        for (a, b) in e.iter().zip(oracle.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300) + 1e-300 || (a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn exp_rejects_bad_input() {
        assert!(matches!(
            matrix_exponential(&Matrix::zeros(2, 3), 1.0),
            Err(Error::NotSquare { .. })
        ));
        assert!(matches!(
            matrix_exponential(&m(1, 1, &[f64::NAN]), 1.0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn lyapunov_examples() {
        let x = solve_lyapunov(&m(1, 1, &[-1.0]), &m(1, 1, &[-2.0])).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);

        let x = solve_lyapunov(&(-Matrix::identity(2, 2)), &(-Matrix::identity(2, 2))).unwrap();
        assert!(max_abs(&(x - Matrix::identity(2, 2) * 0.5)) < 1e-15);

        let f = m(2, 2, &[-2.0, 0.0, 0.0, -1.0]);
        let w = -m(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let x = solve_lyapunov(&f, &w).unwrap();
        // X_ij = W_ij / (λ_i + λ_j) for diagonal F.
        let expected = m(2, 2, &[0.25, 1.0 / 3.0, 1.0 / 3.0, 0.5]);
        assert!(max_abs(&(x - expected)) < 1e-14);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let err = solve_lyapunov(&m(1, 1, &[0.5]), &m(1, 1, &[1.0])).unwrap_err();
        assert!(matches!(err, Error::Unstable { abscissa, .. } if (abscissa - 0.5).abs() < 1e-15));
    }

    #[test]
    fn sylvester_examples() {
        let x = solve_sylvester(&m(1, 1, &[2.0]), &m(1, 1, &[1.0]), &m(1, 1, &[3.0])).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);

        let c = m(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let x = solve_sylvester(&(Matrix::identity(2, 2) * 1.5), &(Matrix::identity(2, 2) * 0.5), &c).unwrap();
        assert!(max_abs(&(x - &c / 2.0)) < 1e-15);
    }

    #[test]
    fn sylvester_reports_spectral_overlap() {
        // eig(F) = {1}, eig(-G) = {1}
        let err = solve_sylvester(&m(1, 1, &[1.0]), &m(1, 1, &[-1.0]), &m(1, 1, &[1.0])).unwrap_err();
        assert!(matches!(err, Error::IllConditioned { .. }));
        let f = m(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let g = m(2, 2, &[-2.0, 0.0, 0.0, 3.0]);
        let err = solve_sylvester(&f, &g, &Matrix::identity(2, 2)).unwrap_err();
        match err {
            Error::IllConditioned { detail, .. } => assert!(detail.contains("eig(F)")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn abscissa_examples() {
        assert_eq!(spectral_abscissa(&m(1, 1, &[-3.0])).unwrap(), -3.0);
        assert_eq!(spectral_abscissa(&m(2, 2, &[0.0, -1.0, 1.0, 0.0])).unwrap(), 0.0);
        assert!((spectral_abscissa(&m(2, 2, &[1.0, 4.0, 0.0, 2.0])).unwrap() - 2.0).abs() < 1e-15);
        let upper = m(3, 3, &[1.0, 4.0, 2.0, 0.0, -2.0, 7.0, 0.0, 0.0, 0.5]);
        assert!((spectral_abscissa(&upper).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stability_of_negation() {
        let a = m(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let r = StabilityReport::of_negation(&a).unwrap();
        assert!(r.is_stable);
        assert_eq!(r.spectral_abscissa, -1.0);
        assert!(!StabilityReport::of_negation(&m(1, 1, &[0.0])).unwrap().is_stable);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let a = m(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = psd_sqrt(&a, 1e-12).unwrap();
        assert!(max_abs(&(&r * &r - &a)) < 1e-14);
        assert!(matches!(psd_sqrt(&m(1, 1, &[-1.0]), 1e-12), Err(Error::NotPsd(_))));
    }

    #[test]
    fn linear_step_scalar_ou() {
        // dY = -Y dt + dW: Var after dt = (1 - e^{-2dt}) / 2.
        let (phi, cov) = linear_sde_step(&m(1, 1, &[-1.0]), &m(1, 1, &[1.0]), 0.3).unwrap();
        assert!((phi[(0, 0)] - (-0.3f64).exp()).abs() < 1e-15);
        assert!((cov[(0, 0)] - (1.0 - (-0.6f64).exp()) / 2.0).abs() < 1e-15);
    }
}
