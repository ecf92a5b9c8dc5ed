//! Model construction and dispatch of a validated configuration.

use std::sync::Arc;

use anyhow::{bail, Context, Result};
use inertial_drift::harness::stats::{mean_se, proportion_se};
use inertial_drift::harness::{
    cellular_experiment, convergence_experiment, covariance_experiment, divergence_map, regime_separation_experiment,
    run_indexed, turbophoresis_experiment, vortex_experiment, Cell, CellularSpec, ConvergenceSpec, CovarianceSpec,
    DataTable, DivergenceSpec, ExperimentReport, RegimeSpec, ReportRow, TurbophoresisSpec, Verdict, VortexSpec,
};
use inertial_drift::model::{
    as_coefficient_model, builtin_cellular, builtin_pipe, builtin_vortex, PipeProfile, RadialProfile,
    ScalarFrictionModel, TurbulenceCoefficients,
};
use inertial_drift::sde::{run_coupled_with, GeneralLimit, LimitCoefficients, MuRule, ScalarLimit, SimConfig};
use inertial_drift::{Alpha, CoefficientModel, DriftContext, Matrix, NoiseSpec, Vector};

use crate::config::{CommandName, DemoKind, ModelConfig, NoiseConfig, RunConfig};

pub enum BuiltModel {
    Scalar(ScalarFrictionModel),
    Turbulence(TurbulenceCoefficients),
}

impl BuiltModel {
    pub fn as_dyn(&self) -> &dyn CoefficientModel {
        match self {
            BuiltModel::Scalar(m) => m,
            BuiltModel::Turbulence(m) => m,
        }
    }
}

fn known_params(name: &str) -> Option<&'static [&'static str]> {
    Some(match name {
        "scalar" => &["lambda", "sigma", "dim"],
        "scalar-sine" | "scalar-sine-xi" | "scalar-linear" => &[],
        "vortex" => &["lambda", "r_cut"],
        "cellular" => &["k1", "k2", "lambda"],
        "pipe" => &["peak", "curvature", "floor", "blend"],
        _ => return None,
    })
}

fn check_params(model: &ModelConfig) -> Result<()> {
    let Some(known) = known_params(&model.name) else {
        bail!(
            "unknown model {:?}; available: scalar, scalar-sine, scalar-sine-xi, scalar-linear, vortex, cellular, pipe",
            model.name
        );
    };
    if let Some(k) = model.params.keys().find(|k| !known.contains(&k.as_str())) {
        bail!(
            "config error at model.params.{k}: unknown parameter for model {:?} (expected one of {known:?})",
            model.name
        );
    }
    Ok(())
}

fn pipe_profile(model: &ModelConfig) -> PipeProfile {
    let d = PipeProfile::default();
    PipeProfile {
        peak: model.param("peak", d.peak),
        curvature: model.param("curvature", d.curvature),
        floor: model.param("floor", d.floor),
        blend: model.param("blend", d.blend),
    }
}

pub fn build_model(model: &ModelConfig) -> Result<BuiltModel> {
    check_params(model)?;
    Ok(match model.name.as_str() {
        "scalar" => {
            let dim = model.param("dim", 1.0);
            if !(dim >= 1.0 && dim.fract() == 0.0) {
                bail!("model.params.dim must be a positive integer, got {dim}");
            }
            let sigma = Matrix::identity(dim as usize, dim as usize) * model.param("sigma", 1.0);
            BuiltModel::Scalar(ScalarFrictionModel::constant(model.param("lambda", 1.0), sigma)?)
        }
        "scalar-sine" => BuiltModel::Scalar(ScalarFrictionModel::sine_unit_sigma()),
        "scalar-sine-xi" => BuiltModel::Scalar(ScalarFrictionModel::sine_unit_xi()),
        "scalar-linear" => BuiltModel::Scalar(ScalarFrictionModel::linear_unit_xi()),
        "vortex" => {
            let profile = RadialProfile::Linear {
                r_cut: model.param("r_cut", 10.0),
            };
            let v = builtin_vortex(profile, model.param("lambda", 1.0))?;
            BuiltModel::Turbulence(as_coefficient_model(Arc::new(v))?)
        }
        "cellular" => {
            let c = builtin_cellular(
                model.param("k1", 1.0),
                model.param("k2", 1.0),
                model.param("lambda", 1.0),
            )?;
            BuiltModel::Turbulence(as_coefficient_model(Arc::new(c))?)
        }
        "pipe" => BuiltModel::Turbulence(as_coefficient_model(Arc::new(builtin_pipe(pipe_profile(model))?))?),
        _ => unreachable!("checked above"),
    })
}

fn to_matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        bail!("noise.{what} must be a non-empty rectangular list of rows");
    }
    Ok(Matrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn build_noise(noise: &NoiseConfig, model: &dyn CoefficientModel) -> Result<NoiseSpec> {
    let n = model.noise_dim();
    let spec = match (&noise.builtin, &noise.a, &noise.b) {
        (Some(name), None, None) if name == "identity" => NoiseSpec::identity(n),
        (Some(name), None, None) => bail!("unknown builtin noise {name:?}; available: identity"),
        (None, None, None) => NoiseSpec::identity(n),
        (None, Some(a), b) => {
            let a = to_matrix(a, "a")?;
            let b = match b {
                Some(b) => to_matrix(b, "b")?,
                None => Matrix::identity(a.nrows(), a.nrows()),
            };
            NoiseSpec::new(a, b)?
        }
        _ => bail!("give noise either as a builtin name or as matrices a (and optionally b)"),
    };
    if spec.dim() != n {
        bail!("noise dimension {} does not match the model's {}", spec.dim(), n);
    }
    Ok(spec)
}

fn point(config: &RunConfig, dim: usize) -> Result<Vector> {
    let x = config.x.clone().unwrap_or_else(|| vec![0.0; dim]);
    if x.len() != dim {
        bail!("x has {} components, the model has dimension {dim}", x.len());
    }
    Ok(Vector::from_vec(x))
}

fn mu_rule(config: &RunConfig) -> Result<MuRule> {
    match (config.mu_rule, config.alpha.0) {
        (Some(rule), _) => Ok(rule),
        (None, Alpha::Finite(a)) => Ok(MuRule::Proportional(a)),
        (None, a) => bail!("alpha = {a} needs an explicit mu_rule (for example power:2 or power:0.5)"),
    }
}

#[allow(clippy::large_enum_variant)]
enum Limit<'a> {
    Scalar(ScalarLimit<'a>),
    General(GeneralLimit<'a>),
}

impl Limit<'_> {
    fn as_dyn(&self) -> &dyn LimitCoefficients {
        match self {
            Limit::Scalar(l) => l,
            Limit::General(l) => l,
        }
    }
}

/// The scalar closed form when it applies, the general contraction otherwise.
fn limit<'a>(model: &'a BuiltModel, noise: &'a NoiseSpec, alpha: Alpha) -> Result<Limit<'a>> {
    Ok(match model {
        BuiltModel::Scalar(m) if noise.a_is_identity() => Limit::Scalar(ScalarLimit::new(m, noise, alpha)?),
        _ => Limit::General(GeneralLimit::new(model.as_dyn(), noise, alpha)?),
    })
}

fn demo_alphas(alpha: Alpha) -> Result<Vec<f64>> {
    match alpha {
        Alpha::Zero => Ok(vec![0.0]),
        Alpha::Finite(a) => Ok(vec![0.0, a]),
        Alpha::Infinite => bail!("the demos need a finite alpha"),
    }
}

fn finite_alpha(alpha: Alpha) -> Result<f64> {
    match alpha {
        Alpha::Infinite => bail!("this command needs a finite alpha"),
        a => Ok(a.value()),
    }
}

pub fn dispatch(config: &RunConfig, workers: usize) -> Result<ExperimentReport> {
    if let Some(kind) = config.demo {
        if config.model.name != kind.model_name() {
            bail!(
                "demo {kind:?} runs on model {:?}, not {:?}",
                kind.model_name(),
                config.model.name
            );
        }
    }
    let model = build_model(&config.model)?;
    let dyn_model = model.as_dyn();
    let noise = build_noise(&config.noise, dyn_model)?;
    let alpha = config.alpha.0;
    let seed = config.seed;
    let report = match config.command {
        CommandName::Drift => drift(dyn_model, &noise, alpha, &point(config, dyn_model.dim())?)?,
        CommandName::Matrices => matrices(dyn_model, &noise, alpha, &point(config, dyn_model.dim())?)?,
        CommandName::Simulate => simulate(config, &model, &noise, workers)?,
        CommandName::Converge => {
            let x0 = point(config, dyn_model.dim())?;
            let spec = ConvergenceSpec {
                alpha,
                mu_rule: mu_rule(config)?,
                eps_list: config.eps.clone(),
                n_paths: config.n_paths,
                horizon: config.horizon,
                dt_factor: 20.0,
                dt_limit: config.dt.unwrap_or(1e-3),
                threshold: 0.25,
                v0: vec![0.0; x0.len()],
                x0: x0.iter().cloned().collect(),
                seed,
                workers,
                control_paths: config.n_paths,
            };
            let lim = limit(&model, &noise, alpha)?;
            convergence_experiment(dyn_model, &noise, lim.as_dyn(), &spec)?
        }
        CommandName::Covariance => {
            let x = point(config, dyn_model.dim())?;
            let mut spec = CovarianceSpec::new(
                finite_alpha(alpha)?,
                x.iter().cloned().collect(),
                config.horizon,
                config.dt.unwrap_or(0.01),
                config.n_paths,
            );
            spec.seed = seed;
            spec.workers = workers;
            covariance_experiment(dyn_model, &noise, &spec)?
        }
        CommandName::Regimes => {
            let x0 = point(config, dyn_model.dim())?;
            let mut spec = RegimeSpec::new(config.eps[0], config.n_paths, config.horizon, x0.len());
            spec.x0 = x0.iter().cloned().collect();
            spec.dt_limit = config.dt.unwrap_or(spec.dt_limit);
            spec.seed = seed;
            spec.workers = workers;
            let zero = limit(&model, &noise, Alpha::Zero)?;
            let inf = limit(&model, &noise, Alpha::Infinite)?;
            regime_separation_experiment(dyn_model, &noise, zero.as_dyn(), inf.as_dyn(), &spec)?
        }
        CommandName::Demo => demo(config, workers)?,
    };
    Ok(report)
}

fn demo(config: &RunConfig, workers: usize) -> Result<ExperimentReport> {
    let m = &config.model;
    let alpha = config.alpha.0;
    let kind = config.demo.context("demo needs a kind")?;
    Ok(match kind {
        DemoKind::Vortex => {
            let mut spec = VortexSpec::new(demo_alphas(alpha)?, config.n_paths, config.horizon);
            spec.profile = RadialProfile::Linear {
                r_cut: m.param("r_cut", 10.0),
            };
            spec.lambda = m.param("lambda", 1.0);
            spec.dt = config.dt.unwrap_or(spec.dt);
            spec.seed = config.seed;
            spec.workers = workers;
            vortex_experiment(&spec)?
        }
        DemoKind::Cellular => {
            let mut spec = CellularSpec::new(finite_alpha(alpha)?, config.n_paths, config.horizon);
            spec.k1 = m.param("k1", 1.0);
            spec.k2 = m.param("k2", 1.0);
            spec.lambda = m.param("lambda", 1.0);
            spec.dt = config.dt.unwrap_or(spec.dt);
            spec.delta = config.delta.unwrap_or(spec.delta);
            spec.seed = config.seed;
            spec.workers = workers;
            cellular_experiment(&spec)?
        }
        DemoKind::Turbophoresis => {
            let mut spec = TurbophoresisSpec::new(demo_alphas(alpha)?, config.n_paths, config.horizon);
            spec.profile = pipe_profile(m);
            spec.dt = config.dt.unwrap_or(spec.dt);
            spec.grid = config.grid.unwrap_or(spec.grid);
            spec.seed = config.seed;
            spec.workers = workers;
            turbophoresis_experiment(&spec)?
        }
        DemoKind::Divergence => {
            let mut spec = DivergenceSpec::new(finite_alpha(alpha)?, config.grid.unwrap_or(101));
            spec.k1 = m.param("k1", 1.0);
            spec.k2 = m.param("k2", 1.0);
            spec.lambda = m.param("lambda", 1.0);
            divergence_map(&spec)?
        }
    })
}

fn drift(model: &dyn CoefficientModel, noise: &NoiseSpec, alpha: Alpha, x: &Vector) -> Result<ExperimentReport> {
    let ctx = DriftContext::new(noise)?;
    let f = ctx.inertial_drift(model, alpha, x)?;
    let full = ctx.limit_drift(model, alpha, x)?;
    let mut report = ExperimentReport::new(
        "drift",
        0,
        0,
        DataTable::new(&["component", "inertial_drift", "limit_drift"]),
    );
    for i in 0..f.len() {
        report
            .data
            .push(vec![Cell::Int(i as u64), Cell::Float(f[i]), Cell::Float(full[i])]);
        report.push(ReportRow::new(format!("f_alpha[{i}]"), f[i], 0.0, 1, Verdict::Info));
    }
    for i in 0..f.len() {
        report.push(ReportRow::new(
            format!("limit_drift[{i}]"),
            full[i],
            0.0,
            1,
            Verdict::Info,
        ));
    }
    Ok(report)
}

fn matrices(model: &dyn CoefficientModel, noise: &NoiseSpec, alpha: Alpha, x: &Vector) -> Result<ExperimentReport> {
    let mats = DriftContext::new(noise)?.matrices(model, alpha, x)?;
    let mut report = ExperimentReport::new("matrices", 0, 0, DataTable::new(&["matrix", "row", "col", "value"]));
    let mut blocks = vec![("M", &mats.m), ("L", &mats.l_alpha)];
    if alpha != Alpha::Infinite {
        blocks.push(("N", &mats.n_alpha));
    }
    blocks.push(("alphaN", &mats.alpha_n));
    for (name, m) in blocks {
        for ((i, j), v) in (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|ij| (ij, m[ij]))
        {
            report.data.push(vec![
                Cell::Text(name.to_string()),
                Cell::Int(i as u64),
                Cell::Int(j as u64),
                Cell::Float(v),
            ]);
            report.push(ReportRow::new(format!("{name}[{i},{j}]"), v, 0.0, 1, Verdict::Info));
        }
    }
    Ok(report)
}

/// Independent coupled runs at one `ε`, summarised per trajectory.
fn simulate(config: &RunConfig, model: &BuiltModel, noise: &NoiseSpec, workers: usize) -> Result<ExperimentReport> {
    let dyn_model = model.as_dyn();
    let eps = config.eps[0];
    let rule = mu_rule(config)?;
    let lim = limit(model, noise, config.alpha.0)?;
    let x0 = point(config, dyn_model.dim())?;
    let dim = x0.len();
    let base = SimConfig {
        horizon: config.horizon,
        dt: config.dt.unwrap_or((eps / 20.0).min(1e-3)),
        epsilon: eps,
        mu: rule,
        alpha: config.alpha.0,
        x0: x0.iter().cloned().collect(),
        v0: vec![0.0; dim],
        seed: config.seed,
        trajectory_index: 0,
    };
    base.validate(dim)?;
    let runs = run_indexed(config.n_paths, workers, |i| {
        let cfg = SimConfig {
            trajectory_index: i,
            ..base.clone()
        };
        run_coupled_with(&cfg, dyn_model, noise, lim.as_dyn())
    })?;

    let mut header: Vec<String> = ["trajectory_index", "eps", "mu", "alpha", "sup_distance"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=dim).map(|i| format!("terminal_x{i}")));
    header.push("flagged".into());
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut report = ExperimentReport::new("simulate", config.seed, config.n_paths, DataTable::new(&header));
    let mut sups = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let mut row = vec![
            Cell::Int(i as u64),
            Cell::Float(eps),
            Cell::Float(base.mu_value()),
            Cell::Float(config.alpha.0.value()),
            Cell::Float(run.sup_distance),
        ];
        row.extend(
            run.pre_limit
                .x
                .last()
                .expect("initial state")
                .iter()
                .map(|&v| Cell::Float(v)),
        );
        row.push(Cell::Int(run.flagged() as u64));
        report.data.push(row);
        if run.flagged() {
            report.flagged += 1;
        } else {
            sups.push(run.sup_distance);
        }
    }
    report.total_paths = runs.len();
    if !sups.is_empty() {
        let (m, se) = mean_se(&sups);
        report.push(ReportRow::new(
            format!("E[sup] eps={eps}"),
            m,
            se,
            sups.len(),
            Verdict::Info,
        ));
        let exceed: Vec<bool> = sups.iter().map(|&s| s > 0.25).collect();
        let (p, se) = proportion_se(&exceed);
        report.push(ReportRow::new(
            format!("P(sup>0.25) eps={eps}"),
            p,
            se,
            sups.len(),
            Verdict::Info,
        ));
    }
    Ok(report)
}
