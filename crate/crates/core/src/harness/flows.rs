//! Experiments on the turbulence limit: centrifugal spreading, cellular
//! concentration and turbophoresis.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::stats::{mean_se, paired_diff, proportion_se};
use super::{
    check_paths, derive_seed, record_steps, run_indexed, Cell, DataTable, ExperimentReport, ReportRow, Verdict,
};
use crate::drift::{self, Alpha};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::{builtin_cellular, builtin_pipe, builtin_vortex, PipeProfile, RadialProfile, TurbulenceModel};
use crate::sde::{
    cellular_split_step, coarsen_increments, grid_steps, integrate_limit, BrownianStream, TurbulenceLimit,
};

fn parse_alphas(list: &[f64]) -> Result<Vec<Alpha>> {
    if list.is_empty() || list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(format!(
            "alpha list must be non-empty and strictly increasing, got {list:?}"
        )));
    }
    list.iter().map(|&a| Alpha::new(a)).collect()
}

fn times(steps: &[usize], dt: f64) -> Vec<f64> {
    steps.iter().map(|&k| k as f64 * dt).collect()
}

/// Paired test that a statistic increases between every pair of
/// consecutive recording times by more than three standard errors.
fn increasing_in_time(series: &[Vec<f64>]) -> bool {
    let r = series.first().map_or(0, |s| s.len());
    (1..r).all(|j| {
        let a: Vec<f64> = series.iter().map(|s| s[j]).collect();
        let b: Vec<f64> = series.iter().map(|s| s[j - 1]).collect();
        let (d, se) = paired_diff(&a, &b);
        d > 3.0 * se
    })
}

/// Flat means: a paired difference within two standard errors (or exactly
/// zero when both series coincide).
fn flat(d: f64, se: f64) -> bool {
    d == 0.0 || d.abs() <= 2.0 * se
}

#[derive(Debug, Clone)]
pub struct VortexSpec {
    pub profile: RadialProfile,
    pub lambda: f64,
    /// Strictly increasing.
    pub alpha_list: Vec<f64>,
    pub n_paths: usize,
    pub horizon: f64,
    pub dt: f64,
    pub n_records: usize,
    pub seed: u64,
    pub workers: usize,
}

impl VortexSpec {
    pub fn new(alpha_list: Vec<f64>, n_paths: usize, horizon: f64) -> Self {
        Self {
            profile: RadialProfile::Linear { r_cut: 10.0 },
            lambda: 1.0,
            alpha_list,
            n_paths,
            horizon,
            dt: 1e-3,
            n_records: 10,
            seed: 0,
            workers: 1,
        }
    }
}

struct VortexSample {
    // r² at recording times, one series per α.
    r2: Vec<Vec<f64>>,
    control: Vec<f64>,
    fine_terminal: f64,
    flagged: bool,
}

/// `E|x(t)|²` for a cloud started on the unit circle around a single
/// vortex, one column per `α`, with a drift-free (`α = 0`) control on the
/// same Brownian path.
pub fn vortex_experiment(spec: &VortexSpec) -> Result<ExperimentReport> {
    check_paths(spec.n_paths)?;
    let alphas = parse_alphas(&spec.alpha_list)?;
    let vortex = builtin_vortex(spec.profile.clone(), spec.lambda)?;
    let n_steps = grid_steps(spec.horizon, spec.dt)?;
    let steps = record_steps(n_steps, spec.n_records);
    let limits: Vec<TurbulenceLimit> = alphas.iter().map(|&a| TurbulenceLimit::new(&vortex, a)).collect();
    let control = TurbulenceLimit::new(&vortex, Alpha::Zero);
    let top = limits.last().expect("non-empty");

    let samples = run_indexed(spec.n_paths, spec.workers, |i| {
        let inner = || -> Result<VortexSample> {
            let mut stream = BrownianStream::new(spec.seed, i);
            let theta = TAU * stream.uniform();
            let x0 = Vector::from_vec(vec![theta.cos(), theta.sin()]);
            let fine = stream.increments(2 * n_steps, 1, spec.dt / 2.0);
            let coarse = coarsen_increments(&fine, 2);
            let mut flagged = false;
            let mut r2_at = |limit: &TurbulenceLimit, dw: &[Vector], dt: f64, stride: usize| -> Result<Vec<f64>> {
                let out = integrate_limit(limit, dw, dt, &x0)?;
                flagged |= out.flagged();
                Ok(steps
                    .iter()
                    .map(|&k| out.x.get(k * stride).map_or(f64::NAN, |x| x.norm_squared()))
                    .collect())
            };
            let r2 = limits
                .iter()
                .map(|l| r2_at(l, &coarse, spec.dt, 1))
                .collect::<Result<Vec<_>>>()?;
            let control = r2_at(&control, &coarse, spec.dt, 1)?;
            let fine_terminal = *r2_at(top, &fine, spec.dt / 2.0, 2)?.last().expect("records");
            Ok(VortexSample {
                r2,
                control,
                fine_terminal,
                flagged,
            })
        };
        inner().map_err(|e| e.in_trajectory(i))
    })?;

    let mut report = ExperimentReport::new(
        "vortex",
        spec.seed,
        spec.n_paths,
        DataTable::new(&["t", "alpha", "mean_r2", "se_r2", "control_mean_r2"]),
    );
    report.total_paths = samples.len();
    report.flagged = samples.iter().filter(|s| s.flagged).count();
    let ok: Vec<&VortexSample> = samples.iter().filter(|s| !s.flagged).collect();
    let n = ok.len();

    // Pointwise: −b_α is radial with magnitude 2 (α/(λ+α)) f'² |x|.
    let mut worst: f64 = 0.0;
    for &a in &alphas {
        for k in 0..40 {
            let r = 0.05 + 0.06 * k as f64 * spec.profile_scale();
            let phi = 0.7 * k as f64;
            let x = Vector::from_vec(vec![r * phi.cos(), r * phi.sin()]);
            let d = drift::turbulence_drift(&vortex, a, &x)?.total;
            let (f1, _) = vortex.profile.derivatives(r * r);
            let expected = &x * (2.0 * a.interpolation_weight(spec.lambda) * f1 * f1);
            worst = worst.max((d - expected).norm());
        }
    }
    report.push(ReportRow::new(
        "pointwise radial drift error",
        worst,
        0.0,
        40 * alphas.len(),
        Verdict::from_bool(worst <= 1e-9),
    ));

    let t = times(&steps, spec.dt);
    let control_series: Vec<Vec<f64>> = ok.iter().map(|s| s.control.clone()).collect();
    for (ai, &a) in alphas.iter().enumerate() {
        let series: Vec<Vec<f64>> = ok.iter().map(|s| s.r2[ai].clone()).collect();
        for (j, &tj) in t.iter().enumerate() {
            let (m, se) = mean_se(&series.iter().map(|s| s[j]).collect::<Vec<_>>());
            let (cm, _) = mean_se(&control_series.iter().map(|s| s[j]).collect::<Vec<_>>());
            report.data.push(vec![
                Cell::Float(tj),
                Cell::Float(a.value()),
                Cell::Float(m),
                Cell::Float(se),
                Cell::Float(cm),
            ]);
        }
        let last = t.len() - 1;
        let terminal: Vec<f64> = series.iter().map(|s| s[last]).collect();
        let (m, se) = mean_se(&terminal);
        let verdict = if a == Alpha::Zero {
            Verdict::Info
        } else {
            Verdict::from_bool(increasing_in_time(&series))
        };
        report.push(ReportRow::new(format!("E|x(T)|^2 alpha={a}"), m, se, n, verdict));

        let ctrl: Vec<f64> = control_series.iter().map(|s| s[last]).collect();
        let (d, dse) = paired_diff(&terminal, &ctrl);
        let verdict = if a == Alpha::Zero {
            Verdict::from_bool(flat(d, dse))
        } else {
            Verdict::from_bool(d > 3.0 * dse)
        };
        report.push(ReportRow::new(
            format!("excess over control alpha={a}"),
            d,
            dse,
            n,
            verdict,
        ));
    }
    for w in 0..alphas.len().saturating_sub(1) {
        let last = t.len() - 1;
        let lo: Vec<f64> = ok.iter().map(|s| s.r2[w][last]).collect();
        let hi: Vec<f64> = ok.iter().map(|s| s.r2[w + 1][last]).collect();
        let (d, se) = paired_diff(&hi, &lo);
        report.push(ReportRow::new(
            format!("alpha {} -> {}", alphas[w], alphas[w + 1]),
            d,
            se,
            n,
            Verdict::from_bool(d > 3.0 * se),
        ));
    }

    let top_idx = alphas.len() - 1;
    let last = t.len() - 1;
    let coarse: Vec<f64> = ok.iter().map(|s| s.r2[top_idx][last]).collect();
    let fine: Vec<f64> = ok.iter().map(|s| s.fine_terminal).collect();
    let (drift, dse) = paired_diff(&fine, &coarse);
    let start: Vec<f64> = ok.iter().map(|s| s.r2[top_idx][0]).collect();
    let (headline, _) = paired_diff(&coarse, &start);
    report.push(ReportRow::new(
        format!("control dt/2 alpha={}", alphas[top_idx]),
        drift,
        dse,
        n,
        Verdict::from_bool(headline.abs() > 3.0 * drift.abs()),
    ));
    Ok(report)
}

impl VortexSpec {
    // Radius scale over which the pointwise check samples the profile.
    fn profile_scale(&self) -> f64 {
        match self.profile {
            RadialProfile::Linear { r_cut } => r_cut / 1.2,
            RadialProfile::Gaussian { width } => width,
            RadialProfile::Custom { .. } => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellularSpec {
    pub k1: f64,
    pub k2: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub n_paths: usize,
    pub horizon: f64,
    pub dt: f64,
    /// Half-width of the separatrix band `Λ_δ = {|ψ| ≤ δ}`.
    pub delta: f64,
    pub n_records: usize,
    pub seed: u64,
    pub workers: usize,
    /// Paths in the dt-halving control; 0 disables it.
    pub control_paths: usize,
}

impl CellularSpec {
    pub fn new(alpha: f64, n_paths: usize, horizon: f64) -> Self {
        Self {
            k1: 1.0,
            k2: 1.0,
            lambda: 1.0,
            alpha,
            n_paths,
            horizon,
            dt: 1e-3,
            delta: 0.2,
            n_records: 10,
            seed: 0,
            workers: 1,
            control_paths: n_paths.min(100),
        }
    }
}

struct CellPath {
    psi: Vec<f64>,
    max_increase: f64,
    max_rate_error: f64,
    flagged: bool,
}

fn cellular_path(
    c: &crate::model::CellularFlow,
    alpha: Alpha,
    x0: Vector,
    dw: &[Vector],
    dt: f64,
    steps: &[usize],
) -> Result<CellPath> {
    let mut x = x0;
    let mut psi = c.psi(&x);
    let mut out = CellPath {
        psi: Vec::with_capacity(steps.len()),
        max_increase: 0.0,
        max_rate_error: 0.0,
        flagged: false,
    };
    let mut next = 0;
    for k in 0..=dw.len() {
        if next < steps.len() && steps[next] == k {
            out.psi.push(psi);
            next += 1;
        }
        if k == dw.len() {
            break;
        }
        let predicted = drift::cellular_psi_rate_closed_form(c, alpha, &x);
        let y = cellular_split_step(c, alpha, &x, dt, dw[k][0])?;
        if !y.iter().all(|v| v.is_finite()) {
            out.flagged = true;
            while out.psi.len() < steps.len() {
                out.psi.push(f64::NAN);
            }
            return Ok(out);
        }
        let psi_next = c.psi(&y);
        out.max_increase = out.max_increase.max(psi_next.abs() - psi.abs());
        if psi.abs() > 0.1 && predicted != 0.0 {
            let measured = (psi_next - psi) / dt;
            out.max_rate_error = out.max_rate_error.max((measured - predicted).abs() / predicted.abs());
        }
        x = y;
        psi = psi_next;
    }
    Ok(out)
}

/// Stream-function statistics of a cloud started uniformly on one cell
/// `[0, π/k₁] × [−π/(2k₂), π/(2k₂)]`.
pub fn cellular_experiment(spec: &CellularSpec) -> Result<ExperimentReport> {
    check_paths(spec.n_paths)?;
    let c = builtin_cellular(spec.k1, spec.k2, spec.lambda)?;
    let alpha = Alpha::new(spec.alpha)?;
    if !(spec.delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must be positive, got {}",
            spec.delta
        )));
    }
    let n_steps = grid_steps(spec.horizon, spec.dt)?;
    let steps = record_steps(n_steps, spec.n_records);
    let start = |stream: &mut BrownianStream| {
        let x1 = PI / spec.k1.abs() * stream.uniform();
        let x2 = PI / spec.k2.abs() * (stream.uniform() - 0.5);
        Vector::from_vec(vec![x1, x2])
    };

    let paths = run_indexed(spec.n_paths, spec.workers, |i| {
        let mut stream = BrownianStream::new(spec.seed, i);
        let x0 = start(&mut stream);
        let dw = stream.increments(n_steps, 1, spec.dt);
        cellular_path(&c, alpha, x0, &dw, spec.dt, &steps).map_err(|e| e.in_trajectory(i))
    })?;

    let mut report = ExperimentReport::new(
        "cellular",
        spec.seed,
        spec.n_paths,
        DataTable::new(&["t", "occupancy", "mean_abs_psi"]),
    );
    report.total_paths = paths.len();
    report.flagged = paths.iter().filter(|p| p.flagged).count();
    let ok: Vec<&CellPath> = paths.iter().filter(|p| !p.flagged).collect();
    let n = ok.len();

    // Pointwise identities on a grid over one period.
    let (mut tangency, mut expansion): (f64, f64) = (0.0, 0.0);
    for i in 0..41 {
        for j in 0..41 {
            let x = Vector::from_vec(vec![
                TAU / spec.k1.abs() * i as f64 / 40.0,
                TAU / spec.k2.abs() * j as f64 / 40.0,
            ]);
            let d = drift::cellular_diagnostics(&c, alpha, &x);
            tangency = tangency.max(d.grad_psi_dot_xi.abs());
            let expected = (c.k1 * c.k2).powi(2) * d.psi * d.bracket;
            expansion = expansion.max((d.grad_psi_dot_dxixi - expected).abs());
        }
    }
    report.push(ReportRow::new(
        "max |grad psi . xi|",
        tangency,
        0.0,
        41 * 41,
        Verdict::from_bool(tangency <= 1e-10),
    ));
    report.push(ReportRow::new(
        "max |grad psi . Dxi xi - (k1 k2)^2 psi bracket|",
        expansion,
        0.0,
        41 * 41,
        Verdict::from_bool(expansion <= 1e-10),
    ));

    let worst_increase = ok.iter().map(|p| p.max_increase).fold(0.0, f64::max);
    report.push(ReportRow::new(
        "max |psi| increase per step",
        worst_increase,
        0.0,
        n,
        Verdict::from_bool(worst_increase <= 10.0 * spec.dt),
    ));

    let t = times(&steps, spec.dt);
    let mut occupancy = Vec::with_capacity(t.len());
    for (j, &tj) in t.iter().enumerate() {
        let inside: Vec<bool> = ok.iter().map(|p| p.psi[j].abs() <= spec.delta).collect();
        let (occ, occ_se) = proportion_se(&inside);
        let (m, _) = mean_se(&ok.iter().map(|p| p.psi[j].abs()).collect::<Vec<_>>());
        report
            .data
            .push(vec![Cell::Float(tj), Cell::Float(occ), Cell::Float(m)]);
        occupancy.push((occ, occ_se));
    }
    let drop = occupancy.windows(2).map(|w| w[0].0 - w[1].0).fold(0.0, f64::max);
    report.push(ReportRow::new(
        "max occupancy decrease",
        drop,
        0.0,
        n,
        Verdict::from_bool(drop <= 0.0),
    ));
    let (occ0, se0) = occupancy[0];
    let (occ_t, se_t) = *occupancy.last().expect("records");
    report.push(ReportRow::new("occupancy t=0", occ0, se0, n, Verdict::Info));
    report.push(ReportRow::new(
        format!("occupancy t={}", t[t.len() - 1]),
        occ_t,
        se_t,
        n,
        Verdict::from_bool(occ_t >= 0.95),
    ));
    report.push(ReportRow::new(
        "occupancy gain",
        occ_t - occ0,
        0.0,
        n,
        Verdict::from_bool(occ_t > occ0),
    ));

    let rate_error = ok.iter().map(|p| p.max_rate_error).fold(0.0, f64::max);
    report.push(ReportRow::new(
        "max relative dpsi/dt error (|psi|>0.1)",
        rate_error,
        0.0,
        n,
        Verdict::from_bool(rate_error <= 0.05),
    ));

    // A path started on the separatrix x₁ = 0.
    let mut stream = BrownianStream::new(derive_seed(spec.seed, 2000), 0);
    let dw = stream.increments(n_steps, 1, spec.dt);
    let sep = cellular_path(
        &c,
        alpha,
        Vector::from_vec(vec![0.0, 0.4 / spec.k2.abs()]),
        &dw,
        spec.dt,
        &steps,
    )?;
    let sep_max = sep.psi.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    report.push(ReportRow::new(
        "separatrix path max |psi|",
        sep_max,
        0.0,
        1,
        Verdict::from_bool(sep_max <= 10.0 * spec.dt.sqrt()),
    ));

    if spec.control_paths >= 2 {
        let seed = derive_seed(spec.seed, 1000);
        let pairs = run_indexed(spec.control_paths, spec.workers, |i| {
            let inner = || -> Result<(CellPath, CellPath)> {
                let mut stream = BrownianStream::new(seed, i);
                let x0 = start(&mut stream);
                let fine = stream.increments(2 * n_steps, 1, spec.dt / 2.0);
                let coarse = coarsen_increments(&fine, 2);
                let fine_steps: Vec<usize> = steps.iter().map(|k| 2 * k).collect();
                Ok((
                    cellular_path(&c, alpha, x0.clone(), &fine, spec.dt / 2.0, &fine_steps)?,
                    cellular_path(&c, alpha, x0, &coarse, spec.dt, &steps)?,
                ))
            };
            inner().map_err(|e| e.in_trajectory(i))
        })?;
        report.total_paths += pairs.len();
        report.flagged += pairs.iter().filter(|(a, b)| a.flagged || b.flagged).count();
        let ok: Vec<_> = pairs.iter().filter(|(a, b)| !a.flagged && !b.flagged).collect();
        let inside = |p: &CellPath| (p.psi.last().expect("records").abs() <= spec.delta) as u64 as f64;
        let fine: Vec<f64> = ok.iter().map(|(a, _)| inside(a)).collect();
        let coarse: Vec<f64> = ok.iter().map(|(_, b)| inside(b)).collect();
        let (drift, dse) = paired_diff(&fine, &coarse);
        let headline = occ_t - occ0;
        report.push(ReportRow::new(
            "control dt/2 occupancy",
            drift,
            dse,
            fine.len(),
            Verdict::from_bool(headline > 3.0 * drift.abs()),
        ));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurbophoresisSpec {
    pub profile: PipeProfile,
    /// Strictly increasing.
    pub alpha_list: Vec<f64>,
    pub n_paths: usize,
    pub horizon: f64,
    pub dt: f64,
    pub n_records: usize,
    /// Points per axis of the pointwise sign check.
    pub grid: usize,
    pub seed: u64,
    pub workers: usize,
}

impl TurbophoresisSpec {
    pub fn new(alpha_list: Vec<f64>, n_paths: usize, horizon: f64) -> Self {
        Self {
            profile: PipeProfile::default(),
            alpha_list,
            n_paths,
            horizon,
            dt: 1e-3,
            n_records: 10,
            grid: 101,
            seed: 0,
            workers: 1,
        }
    }
}

struct PipeSample {
    abs_x2: Vec<Vec<f64>>,
    control: Vec<f64>,
    fine_terminal: f64,
    flagged: bool,
}

/// `E|x₂(t)|` in the pipe for a cloud started at `x₂ ∈ [−0.2, 0.2]`, per
/// `α`, against the drift-free control on the same Brownian path.
pub fn turbophoresis_experiment(spec: &TurbophoresisSpec) -> Result<ExperimentReport> {
    check_paths(spec.n_paths)?;
    let alphas = parse_alphas(&spec.alpha_list)?;
    let pipe = builtin_pipe(spec.profile)?;
    let n_steps = grid_steps(spec.horizon, spec.dt)?;
    let steps = record_steps(n_steps, spec.n_records);
    let limits: Vec<TurbulenceLimit> = alphas.iter().map(|&a| TurbulenceLimit::new(&pipe, a)).collect();
    let control = TurbulenceLimit::new(&pipe, Alpha::Zero);
    let top = limits.last().expect("non-empty");

    let mut report = ExperimentReport::new(
        "turbophoresis",
        spec.seed,
        spec.n_paths,
        DataTable::new(&["t", "alpha", "mean_abs_x2", "se_abs_x2", "control_mean_abs_x2"]),
    );

    // Pointwise sign of the x₂ drift on a grid spanning the channel and
    // the floor region beyond it.
    let g = spec.grid.max(2);
    let mut violations = 0u64;
    for &a in &alphas {
        for i in 0..g {
            for j in 0..g {
                let x1 = -1.0 + 2.0 * i as f64 / (g - 1) as f64;
                let x2 = -1.5 + 3.0 * j as f64 / (g - 1) as f64;
                let x = Vector::from_vec(vec![x1, x2]);
                let d2 = drift::turbulence_drift(&pipe, a, &x)?.total[1];
                let grad = pipe.grad_k_t(&x)[1];
                let ok = if a == Alpha::Zero || grad == 0.0 {
                    d2 == 0.0
                } else {
                    d2 != 0.0 && d2.signum() == x2.signum()
                };
                violations += (!ok) as u64;
            }
        }
    }
    report.push(ReportRow::new(
        "drift sign violations",
        violations as f64,
        0.0,
        g * g * alphas.len(),
        Verdict::from_bool(violations == 0),
    ));

    let samples = run_indexed(spec.n_paths, spec.workers, |i| {
        let inner = || -> Result<PipeSample> {
            let mut stream = BrownianStream::new(spec.seed, i);
            let x0 = Vector::from_vec(vec![0.0, -0.2 + 0.4 * stream.uniform()]);
            let fine = stream.increments(2 * n_steps, 2, spec.dt / 2.0);
            let coarse = coarsen_increments(&fine, 2);
            let mut flagged = false;
            let mut at = |limit: &TurbulenceLimit, dw: &[Vector], dt: f64, stride: usize| -> Result<Vec<f64>> {
                let out = integrate_limit(limit, dw, dt, &x0)?;
                flagged |= out.flagged();
                Ok(steps
                    .iter()
                    .map(|&k| out.x.get(k * stride).map_or(f64::NAN, |x| x[1].abs()))
                    .collect())
            };
            let abs_x2 = limits
                .iter()
                .map(|l| at(l, &coarse, spec.dt, 1))
                .collect::<Result<Vec<_>>>()?;
            let control = at(&control, &coarse, spec.dt, 1)?;
            let fine_terminal = *at(top, &fine, spec.dt / 2.0, 2)?.last().expect("records");
            Ok(PipeSample {
                abs_x2,
                control,
                fine_terminal,
                flagged,
            })
        };
        inner().map_err(|e| e.in_trajectory(i))
    })?;
    report.total_paths = samples.len();
    report.flagged = samples.iter().filter(|s| s.flagged).count();
    let ok: Vec<&PipeSample> = samples.iter().filter(|s| !s.flagged).collect();
    let n = ok.len();
    let t = times(&steps, spec.dt);
    let last = t.len() - 1;
    let control_series: Vec<&Vec<f64>> = ok.iter().map(|s| &s.control).collect();

    for (ai, &a) in alphas.iter().enumerate() {
        let series: Vec<&Vec<f64>> = ok.iter().map(|s| &s.abs_x2[ai]).collect();
        let mut means = Vec::with_capacity(t.len());
        for (j, &tj) in t.iter().enumerate() {
            let (m, se) = mean_se(&series.iter().map(|s| s[j]).collect::<Vec<_>>());
            let (cm, _) = mean_se(&control_series.iter().map(|s| s[j]).collect::<Vec<_>>());
            report.data.push(vec![
                Cell::Float(tj),
                Cell::Float(a.value()),
                Cell::Float(m),
                Cell::Float(se),
                Cell::Float(cm),
            ]);
            means.push(m);
        }
        let terminal: Vec<f64> = series.iter().map(|s| s[last]).collect();
        let initial: Vec<f64> = series.iter().map(|s| s[0]).collect();
        let (rise, rise_se) = paired_diff(&terminal, &initial);
        let verdict = if a == Alpha::Zero {
            Verdict::Info
        } else {
            Verdict::from_bool(rise > 3.0 * rise_se && means.windows(2).all(|w| w[1] > w[0]))
        };
        report.push(ReportRow::new(
            format!("E|x2(T)|-E|x2(0)| alpha={a}"),
            rise,
            rise_se,
            n,
            verdict,
        ));

        let ctrl: Vec<f64> = control_series.iter().map(|s| s[last]).collect();
        let (d, dse) = paired_diff(&terminal, &ctrl);
        let verdict = if a == Alpha::Zero {
            Verdict::from_bool(flat(d, dse))
        } else {
            Verdict::from_bool(d > 3.0 * dse)
        };
        report.push(ReportRow::new(
            format!("excess over control alpha={a}"),
            d,
            dse,
            n,
            verdict,
        ));
    }

    let top_idx = alphas.len() - 1;
    let coarse: Vec<f64> = ok.iter().map(|s| s.abs_x2[top_idx][last]).collect();
    let fine: Vec<f64> = ok.iter().map(|s| s.fine_terminal).collect();
    let ctrl: Vec<f64> = ok.iter().map(|s| s.control[last]).collect();
    let (drift, dse) = paired_diff(&fine, &coarse);
    let (headline, _) = paired_diff(&coarse, &ctrl);
    report.push(ReportRow::new(
        format!("control dt/2 alpha={}", alphas[top_idx]),
        drift,
        dse,
        n,
        Verdict::from_bool(headline.abs() > 3.0 * drift.abs()),
    ));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSpec {
    pub k1: f64,
    pub k2: f64,
    pub lambda: f64,
    pub alpha: f64,
    /// Points per axis.
    pub grid: usize,
    /// The grid covers `[−extent, extent]²`.
    pub extent: f64,
}

impl DivergenceSpec {
    pub fn new(alpha: f64, grid: usize) -> Self {
        Self {
            k1: 1.0,
            k2: 1.0,
            lambda: 1.0,
            alpha,
            grid,
            extent: PI,
        }
    }
}

/// `−div b_α` of the cellular flow on a grid, from the field Jacobian and
/// from its closed form.
pub fn divergence_map(spec: &DivergenceSpec) -> Result<ExperimentReport> {
    let c = builtin_cellular(spec.k1, spec.k2, spec.lambda)?;
    let alpha = Alpha::new(spec.alpha)?;
    if spec.grid < 2 || !(spec.extent > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "divergence map needs grid >= 2 and extent > 0, got {} and {}",
            spec.grid, spec.extent
        )));
    }
    let mut report = ExperimentReport::new(
        "divergence",
        0,
        0,
        DataTable::new(&["x1", "x2", "minus_div_b", "closed_form"]),
    );
    let g = spec.grid;
    let (mut worst, mut sign_mismatch) = (0.0f64, 0u64);
    for i in 0..g {
        for j in 0..g {
            let coord = |k: usize| -spec.extent + 2.0 * spec.extent * k as f64 / (g - 1) as f64;
            let x = Vector::from_vec(vec![coord(i), coord(j)]);
            let value = drift::cellular_diagnostics(&c, alpha, &x).div_minus_b;
            let closed = drift::cellular_divergence_closed_form(&c, alpha, &x);
            worst = worst.max((value - closed).abs());
            if closed.abs() > 1e-9 && value.signum() != closed.signum() {
                sign_mismatch += 1;
            }
            report.data.push(vec![
                Cell::Float(x[0]),
                Cell::Float(x[1]),
                Cell::Float(value),
                Cell::Float(closed),
            ]);
        }
    }
    report.push(ReportRow::new(
        "max |-div b - closed form|",
        worst,
        0.0,
        g * g,
        Verdict::from_bool(worst <= 1e-10),
    ));
    report.push(ReportRow::new(
        "sign mismatches",
        sign_mismatch as f64,
        0.0,
        g * g,
        Verdict::from_bool(sign_mismatch == 0),
    ));
    Ok(report)
}
