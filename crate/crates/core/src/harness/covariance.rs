//! Stationary covariance of the frozen fast system.

use serde::{Deserialize, Serialize};

use super::stats::mean_se;
use super::{check_paths, run_indexed, Cell, DataTable, ExperimentReport, ReportRow, Verdict};
use crate::drift::{self, Alpha, MixingRate};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::{CoefficientModel, NoiseSpec};
use crate::sde::{grid_steps, BrownianStream, FrozenFastStepper};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub alpha: f64,
    pub x_frozen: Vec<f64>,
    /// Averaging window per replicate, after burn-in.
    pub horizon: f64,
    pub dt: f64,
    pub n_reps: usize,
    /// Defaults to `8/ω_α`.
    pub burn_in: Option<f64>,
    pub seed: u64,
    pub workers: usize,
}

impl CovarianceSpec {
    pub fn new(alpha: f64, x_frozen: Vec<f64>, horizon: f64, dt: f64, n_reps: usize) -> Self {
        Self {
            alpha,
            x_frozen,
            horizon,
            dt,
            n_reps,
            burn_in: None,
            seed: 0,
            workers: 1,
        }
    }
}

/// Time-averaged second moments of `(u, z)` over independent replicates,
/// compared entrywise with `Q_α(x)`. An entry passes when it lies within
/// three standard errors of its target.
pub fn covariance_experiment(
    model: &dyn CoefficientModel,
    noise: &NoiseSpec,
    spec: &CovarianceSpec,
) -> Result<ExperimentReport> {
    check_paths(spec.n_reps)?;
    let x = Vector::from_column_slice(&spec.x_frozen);
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            context: "frozen point",
            expected: model.dim().to_string(),
            got: x.len().to_string(),
        });
    }
    let alpha = Alpha::new(spec.alpha)?;
    let target = drift::assemble_q_alpha(model, noise, alpha, &x)?;
    let rate = MixingRate::new(model, noise, spec.alpha)?;
    let burn_in = spec.burn_in.unwrap_or_else(|| rate.suggested_burn_in());
    let stepper = FrozenFastStepper::new(model, noise, spec.alpha, &x, spec.dt)?;
    let burn_steps = if burn_in > 0.0 {
        grid_steps(burn_in, spec.dt)?
    } else {
        0
    };
    let avg_steps = grid_steps(spec.horizon, spec.dt)?;
    let dim = stepper.dim();

    let averages = run_indexed(spec.n_reps, spec.workers, |i| {
        let mut stream = BrownianStream::new(spec.seed, i);
        let mut gauss = vec![0.0; dim];
        let mut state = Vector::zeros(dim);
        for _ in 0..burn_steps {
            stream.fill_standard(&mut gauss);
            state = stepper.step(&state, &gauss);
        }
        let mut acc = vec![0.0; dim * dim];
        for _ in 0..avg_steps {
            stream.fill_standard(&mut gauss);
            state = stepper.step(&state, &gauss);
            for r in 0..dim {
                for c in r..dim {
                    acc[r * dim + c] += state[r] * state[c];
                }
            }
        }
        if acc.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                index: i,
                step: avg_steps,
            });
        }
        Ok(acc.into_iter().map(|v| v / avg_steps as f64).collect::<Vec<f64>>())
    })?;

    let mut report = ExperimentReport::new(
        "covariance",
        spec.seed,
        spec.n_reps,
        DataTable::new(&["row", "col", "estimate", "stderr", "target", "z_score"]),
    );
    report.total_paths = spec.n_reps;
    if burn_in < 4.0 / rate.omega_alpha {
        report.notes.push(format!(
            "burn-in {burn_in} is shorter than 4 mixing times ({})",
            4.0 / rate.omega_alpha
        ));
    }
    let d = model.dim();
    let block = |k: usize| if k < d { "u" } else { "z" };
    for r in 0..dim {
        for c in r..dim {
            let samples: Vec<f64> = averages.iter().map(|a| a[r * dim + c]).collect();
            let (m, se) = mean_se(&samples);
            let t = target[(r, c)];
            let z = if se > 0.0 {
                (m - t) / se
            } else if m == t {
                0.0
            } else {
                f64::INFINITY
            };
            report.data.push(vec![
                Cell::Int(r as u64),
                Cell::Int(c as u64),
                Cell::Float(m),
                Cell::Float(se),
                Cell::Float(t),
                Cell::Float(z),
            ]);
            let param = format!("Q[{r},{c}] ({}{})", block(r), block(c));
            // Entries that vanish identically (σ = 0) only carry rounding.
            let ok = z.abs() <= 3.0 || (m - t).abs() <= 1e-12;
            report.push(ReportRow::new(param, m, se, samples.len(), Verdict::from_bool(ok)));
        }
    }
    Ok(report)
}
