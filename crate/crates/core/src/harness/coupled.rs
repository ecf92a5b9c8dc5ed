//! Experiments on coupled pre-limit / limit pairs.

use serde::{Deserialize, Serialize};

use super::stats::{joint_se, mean_se, paired_diff, proportion_se};
use super::{check_paths, derive_seed, run_indexed, Cell, DataTable, ExperimentReport, ReportRow, Verdict};
use crate::drift::{self, Alpha};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::model::{CoefficientModel, NoiseSpec};
use crate::sde::{
    grid_steps, integrate_inertial, integrate_limit, sup_distance, BrownianStream, DrivingPath, LimitCoefficients,
    MuRule, OuStepper,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSpec {
    /// Label of the limit being approached; also the CSV `alpha` column.
    pub alpha: Alpha,
    pub mu_rule: MuRule,
    /// Strictly decreasing.
    pub eps_list: Vec<f64>,
    pub n_paths: usize,
    pub horizon: f64,
    /// Pre-limit step is `min(ε / dt_factor, dt_limit)`.
    pub dt_factor: f64,
    pub dt_limit: f64,
    /// `η` in the exceedance probability `P(sup > η)`.
    pub threshold: f64,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub seed: u64,
    pub workers: usize,
    /// Paths in the dt-halving control at the smallest ε; 0 disables it.
    pub control_paths: usize,
}

impl ConvergenceSpec {
    /// `μ = α ε` with the default grid rule, started from rest at the origin.
    pub fn proportional(alpha: f64, eps_list: Vec<f64>, n_paths: usize, horizon: f64, dim: usize) -> Result<Self> {
        Ok(Self {
            alpha: Alpha::new(alpha)?,
            mu_rule: MuRule::Proportional(alpha),
            eps_list,
            n_paths,
            horizon,
            dt_factor: 20.0,
            dt_limit: 1e-3,
            threshold: 0.25,
            x0: vec![0.0; dim],
            v0: vec![0.0; dim],
            seed: 0,
            workers: 1,
            control_paths: n_paths,
        })
    }

    fn dt(&self, eps: f64) -> f64 {
        (eps / self.dt_factor).min(self.dt_limit)
    }
}

fn check_grid(dt_factor: f64, dt_limit: f64, horizon: f64) -> Result<()> {
    if !(dt_factor > 0.0) || !(dt_limit > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need positive dt_factor, dt_limit and T, got {dt_factor}, {dt_limit}, {horizon}"
        )));
    }
    Ok(())
}

fn check_start(model: &dyn CoefficientModel, x0: &[f64], v0: &[f64]) -> Result<(Vector, Vector)> {
    if x0.len() != model.dim() || v0.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            context: "initial state",
            expected: model.dim().to_string(),
            got: format!("{}/{}", x0.len(), v0.len()),
        });
    }
    Ok((Vector::from_column_slice(x0), Vector::from_column_slice(v0)))
}

struct Sample {
    sup: f64,
    terminal: Vector,
    flagged: bool,
}

struct Setup<'a> {
    model: &'a dyn CoefficientModel,
    limit: &'a dyn LimitCoefficients,
    gram: Matrix,
    noise: &'a NoiseSpec,
    x0: Vector,
    v0: Vector,
}

impl Setup<'_> {
    fn path(&self, eps: f64, dt: f64, n_steps: usize, seed: u64, index: u64) -> Result<DrivingPath> {
        let ou = OuStepper::new(self.noise, &self.gram, eps, dt)?;
        let mut stream = BrownianStream::new(seed, index);
        Ok(DrivingPath::generate(&ou, n_steps, &mut stream))
    }

    fn sample(&self, path: &DrivingPath, mu: f64) -> Result<Sample> {
        let pre = integrate_inertial(self.model, path, mu, &self.x0, &self.v0)?;
        let lim = integrate_limit(self.limit, &path.dw, path.dt, &self.x0)?;
        Ok(Sample {
            sup: sup_distance(&pre.x, &lim.x),
            terminal: pre.terminal().clone(),
            flagged: pre.flagged() || lim.flagged(),
        })
    }
}

fn summary_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["trajectory_index", "eps", "mu", "alpha", "sup_distance"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=dim).map(|i| format!("terminal_x{i}")));
    h.push("flagged".into());
    h
}

fn summary_row(index: u64, eps: f64, mu: f64, alpha: Alpha, s: &Sample) -> Vec<Cell> {
    let mut row = vec![
        Cell::Int(index),
        Cell::Float(eps),
        Cell::Float(mu),
        Cell::Float(alpha.value()),
        Cell::Float(s.sup),
    ];
    row.extend(s.terminal.iter().map(|&v| Cell::Float(v)));
    row.push(Cell::Int(s.flagged as u64));
    row
}

/// Mean coupled sup-distance `E sup_t |x_ε(t) − x^α(t)|` along a
/// decreasing sequence of `ε`.
///
/// Verdicts: each mean must sit below its predecessor by more than one
/// joint standard error (otherwise "inconclusive"); the exceedance
/// probability must decrease; the change of the smallest-ε estimate under
/// dt-halving must be under a third of the total decrease.
pub fn convergence_experiment(
    model: &dyn CoefficientModel,
    noise: &NoiseSpec,
    limit: &dyn LimitCoefficients,
    spec: &ConvergenceSpec,
) -> Result<ExperimentReport> {
    check_paths(spec.n_paths)?;
    check_grid(spec.dt_factor, spec.dt_limit, spec.horizon)?;
    if spec.eps_list.is_empty()
        || spec.eps_list.iter().any(|e| !(*e > 0.0))
        || spec.eps_list.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidParameter(format!(
            "eps list must be positive and strictly decreasing, got {:?}",
            spec.eps_list
        )));
    }
    let (x0, v0) = check_start(model, &spec.x0, &spec.v0)?;
    let setup = Setup {
        model,
        limit,
        gram: drift::compute_m(noise)?,
        noise,
        x0,
        v0,
    };
    let mut header = summary_header(model.dim());
    let mut report = ExperimentReport::new(
        "converge",
        spec.seed,
        spec.n_paths,
        DataTable {
            header: std::mem::take(&mut header),
            rows: Vec::new(),
        },
    );

    let mut means: Vec<(f64, f64)> = Vec::new();
    let mut exceed: Vec<f64> = Vec::new();
    for (r, &eps) in spec.eps_list.iter().enumerate() {
        let dt = spec.dt(eps);
        let n_steps = grid_steps(spec.horizon, dt)?;
        let mu = spec.mu_rule.mu(eps);
        let seed = derive_seed(spec.seed, r as u64);
        let samples = run_indexed(spec.n_paths, spec.workers, |i| {
            let path = setup.path(eps, dt, n_steps, seed, i).map_err(|e| e.in_trajectory(i))?;
            setup.sample(&path, mu).map_err(|e| e.in_trajectory(i))
        })?;
        for (i, s) in samples.iter().enumerate() {
            report.data.push(summary_row(i as u64, eps, mu, spec.alpha, s));
        }
        report.total_paths += samples.len();
        report.flagged += samples.iter().filter(|s| s.flagged).count();
        let ok: Vec<&Sample> = samples.iter().filter(|s| !s.flagged).collect();
        let sups: Vec<f64> = ok.iter().map(|s| s.sup).collect();
        let (m, se) = mean_se(&sups);
        let verdict = match means.last() {
            None => Verdict::Info,
            Some(&(pm, pse)) if pm - m > joint_se(pse, se) => Verdict::Pass,
            Some(_) => Verdict::Inconclusive,
        };
        report.push(ReportRow::new(format!("E[sup] eps={eps}"), m, se, sups.len(), verdict));
        means.push((m, se));

        let flags: Vec<bool> = sups.iter().map(|&s| s > spec.threshold).collect();
        let (p, pse) = proportion_se(&flags);
        let verdict = match exceed.last() {
            None => Verdict::Info,
            Some(&prev) => Verdict::from_bool(p < prev || (p == 0.0 && prev == 0.0)),
        };
        report.push(ReportRow::new(
            format!("P(sup>{}) eps={eps}", spec.threshold),
            p,
            pse,
            flags.len(),
            verdict,
        ));
        exceed.push(p);
    }

    if spec.control_paths >= 2 {
        let eps = *spec.eps_list.last().expect("non-empty");
        let dt = spec.dt(eps);
        let n_steps = grid_steps(spec.horizon, dt)?;
        let mu = spec.mu_rule.mu(eps);
        let seed = derive_seed(spec.seed, 1000);
        let pairs = run_indexed(spec.control_paths, spec.workers, |i| {
            let inner = || -> Result<(Sample, Sample)> {
                let fine = setup.path(eps, dt / 2.0, 2 * n_steps, seed, i)?;
                let coarse = fine.coarsen(2)?;
                Ok((setup.sample(&fine, mu)?, setup.sample(&coarse, mu)?))
            };
            inner().map_err(|e| e.in_trajectory(i))
        })?;
        report.total_paths += pairs.len();
        report.flagged += pairs.iter().filter(|(a, b)| a.flagged || b.flagged).count();
        let ok: Vec<&(Sample, Sample)> = pairs.iter().filter(|(a, b)| !a.flagged && !b.flagged).collect();
        let fine: Vec<f64> = ok.iter().map(|(a, _)| a.sup).collect();
        let coarse: Vec<f64> = ok.iter().map(|(_, b)| b.sup).collect();
        let (drift, drift_se) = paired_diff(&fine, &coarse);
        let headline = means[0].0 - means[means.len() - 1].0;
        report.push(ReportRow::new(
            format!("control dt/2 eps={eps}"),
            drift,
            drift_se,
            fine.len(),
            Verdict::from_bool(headline > 3.0 * drift.abs()),
        ));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub eps: f64,
    pub n_paths: usize,
    pub horizon: f64,
    pub dt_factor: f64,
    pub dt_limit: f64,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub seed: u64,
    pub workers: usize,
    /// Paths in the dt-halving control; 0 disables it.
    pub control_paths: usize,
}

impl RegimeSpec {
    pub fn new(eps: f64, n_paths: usize, horizon: f64, dim: usize) -> Self {
        Self {
            eps,
            n_paths,
            horizon,
            dt_factor: 20.0,
            dt_limit: 1e-3,
            x0: vec![0.0; dim],
            v0: vec![0.0; dim],
            seed: 0,
            workers: 1,
            control_paths: n_paths.min(100),
        }
    }
}

struct RegimeSample {
    // [small μ vs x⁰, small μ vs x^∞, large μ vs x⁰, large μ vs x^∞]
    sup: [f64; 4],
    terminal_small: Vector,
    terminal_large: Vector,
    terminal_zero: Vector,
    terminal_inf: Vector,
    flagged: bool,
}

fn regime_sample(
    model: &dyn CoefficientModel,
    zero: &dyn LimitCoefficients,
    inf: &dyn LimitCoefficients,
    path: &DrivingPath,
    mus: (f64, f64),
    x0: &Vector,
    v0: &Vector,
) -> Result<RegimeSample> {
    let small = integrate_inertial(model, path, mus.0, x0, v0)?;
    let large = integrate_inertial(model, path, mus.1, x0, v0)?;
    let lz = integrate_limit(zero, &path.dw, path.dt, x0)?;
    let li = integrate_limit(inf, &path.dw, path.dt, x0)?;
    Ok(RegimeSample {
        sup: [
            sup_distance(&small.x, &lz.x),
            sup_distance(&small.x, &li.x),
            sup_distance(&large.x, &lz.x),
            sup_distance(&large.x, &li.x),
        ],
        terminal_small: small.terminal().clone(),
        terminal_large: large.terminal().clone(),
        terminal_zero: lz.terminal().clone(),
        terminal_inf: li.terminal().clone(),
        flagged: small.flagged() || large.flagged() || lz.flagged() || li.flagged(),
    })
}

/// Pre-limit runs with `μ = ε²` and `μ = √ε` on one OU path, each compared
/// with the `α = 0` and `α = ∞` limits driven by the same Brownian path.
pub fn regime_separation_experiment(
    model: &dyn CoefficientModel,
    noise: &NoiseSpec,
    limit_zero: &dyn LimitCoefficients,
    limit_inf: &dyn LimitCoefficients,
    spec: &RegimeSpec,
) -> Result<ExperimentReport> {
    check_paths(spec.n_paths)?;
    check_grid(spec.dt_factor, spec.dt_limit, spec.horizon)?;
    if !(spec.eps > 0.0 && spec.eps < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "regime separation needs 0 < eps < 1, got {}",
            spec.eps
        )));
    }
    let (x0, v0) = check_start(model, &spec.x0, &spec.v0)?;
    let gram = drift::compute_m(noise)?;
    let eps = spec.eps;
    let mus = (eps * eps, eps.sqrt());
    let dt = (eps / spec.dt_factor).min(spec.dt_limit);
    let n_steps = grid_steps(spec.horizon, dt)?;

    let run = |dt: f64, n_steps: usize, seed: u64, i: u64| -> Result<RegimeSample> {
        let ou = OuStepper::new(noise, &gram, eps, dt)?;
        let mut stream = BrownianStream::new(seed, i);
        let path = DrivingPath::generate(&ou, n_steps, &mut stream);
        regime_sample(model, limit_zero, limit_inf, &path, mus, &x0, &v0)
    };
    let samples = run_indexed(spec.n_paths, spec.workers, |i| {
        run(dt, n_steps, spec.seed, i).map_err(|e| e.in_trajectory(i))
    })?;

    let mut report = ExperimentReport::new(
        "regimes",
        spec.seed,
        spec.n_paths,
        DataTable {
            header: summary_header(model.dim()),
            rows: Vec::new(),
        },
    );
    for (i, s) in samples.iter().enumerate() {
        for (mu, alpha, sup, terminal) in [
            (mus.0, Alpha::Zero, s.sup[0], &s.terminal_small),
            (mus.1, Alpha::Infinite, s.sup[3], &s.terminal_large),
        ] {
            let sample = Sample {
                sup,
                terminal: terminal.clone(),
                flagged: s.flagged,
            };
            report.data.push(summary_row(i as u64, eps, mu, alpha, &sample));
        }
    }
    report.total_paths = samples.len();
    report.flagged = samples.iter().filter(|s| s.flagged).count();
    let ok: Vec<&RegimeSample> = samples.iter().filter(|s| !s.flagged).collect();
    let column = |k: usize| mean_se(&ok.iter().map(|s| s.sup[k]).collect::<Vec<_>>());
    let cols: Vec<(f64, f64)> = (0..4).map(column).collect();
    let n = ok.len();

    let labels = [
        "mu=eps^2 vs x0",
        "mu=eps^2 vs xinf",
        "mu=sqrt(eps) vs x0",
        "mu=sqrt(eps) vs xinf",
    ];
    // Each pre-limit run must be closer to its own limit by 3 joint SE.
    let small_ok = cols[1].0 - cols[0].0 > 3.0 * joint_se(cols[0].1, cols[1].1);
    let large_ok = cols[2].0 - cols[3].0 > 3.0 * joint_se(cols[2].1, cols[3].1);
    for (k, label) in labels.iter().enumerate() {
        let verdict = match k {
            0 => Verdict::from_bool(small_ok),
            3 => Verdict::from_bool(large_ok),
            _ => Verdict::Info,
        };
        report.push(ReportRow::new(*label, cols[k].0, cols[k].1, n, verdict));
    }

    let first = |v: &Vector| v[0];
    let zero_t: Vec<f64> = ok.iter().map(|s| first(&s.terminal_zero)).collect();
    let inf_t: Vec<f64> = ok.iter().map(|s| first(&s.terminal_inf)).collect();
    let (gap, gap_se) = paired_diff(&zero_t, &inf_t);
    report.push(ReportRow::new(
        "terminal gap x0-xinf",
        gap,
        gap_se,
        n,
        Verdict::from_bool(gap.abs() > 3.0 * gap_se),
    ));
    let (mz, sz) = mean_se(&zero_t);
    let (mi, si) = mean_se(&inf_t);
    // The two ensembles share Brownian paths, so the paired error is the
    // relevant one; the unpaired figure is kept for comparison.
    report.notes.push(format!(
        "terminal gap {gap:.6} has paired SE {gap_se:.3e} and unpaired joint SE {:.3e}",
        joint_se(sz, si)
    ));
    report.push(ReportRow::new("terminal mean x0", mz, sz, n, Verdict::Info));
    report.push(ReportRow::new("terminal mean xinf", mi, si, n, Verdict::Info));

    if spec.control_paths >= 2 {
        let seed = derive_seed(spec.seed, 1000);
        let pairs = run_indexed(spec.control_paths, spec.workers, |i| {
            let inner = || -> Result<(RegimeSample, RegimeSample)> {
                let ou = OuStepper::new(noise, &gram, eps, dt / 2.0)?;
                let mut stream = BrownianStream::new(seed, i);
                let fine = DrivingPath::generate(&ou, 2 * n_steps, &mut stream);
                let coarse = fine.coarsen(2)?;
                Ok((
                    regime_sample(model, limit_zero, limit_inf, &fine, mus, &x0, &v0)?,
                    regime_sample(model, limit_zero, limit_inf, &coarse, mus, &x0, &v0)?,
                ))
            };
            inner().map_err(|e| e.in_trajectory(i))
        })?;
        report.total_paths += pairs.len();
        report.flagged += pairs.iter().filter(|(a, b)| a.flagged || b.flagged).count();
        let ok: Vec<_> = pairs.iter().filter(|(a, b)| !a.flagged && !b.flagged).collect();
        let fine: Vec<f64> = ok.iter().map(|(a, _)| a.sup[3]).collect();
        let coarse: Vec<f64> = ok.iter().map(|(_, b)| b.sup[3]).collect();
        let (drift, drift_se) = paired_diff(&fine, &coarse);
        let headline = cols[2].0 - cols[3].0;
        report.push(ReportRow::new(
            "control dt/2 mu=sqrt(eps) vs xinf",
            drift,
            drift_se,
            fine.len(),
            Verdict::from_bool(headline > 3.0 * drift.abs()),
        ));
    }
    Ok(report)
}
