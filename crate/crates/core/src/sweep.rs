//! Monte Carlo sweeps of the spectral initializer joined with predictions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::rho_sq;
use crate::error::Result;
use crate::preprocessing::FunctionSpec;
use crate::quadrature::QuadratureSpec;
use crate::rng::Seed;
use crate::sensing::{SensingKind, SensingSpec};
use crate::spectral::{run_trial, TrialSettings};

/// One (ensemble, function, δ) combination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub sensing: SensingSpec,
    pub func: FunctionSpec,
    pub delta: f64,
}

impl SweepCell {
    fn key(&self) -> String {
        format!("{}/n{}/{}/{}", self.sensing.kind, self.sensing.n, self.func.label(), self.delta)
    }

    /// Seed of trial `k`; depends only on the cell and `k`, never on scheduling.
    pub fn trial_seed(&self, base: Seed, k: usize) -> Seed {
        base.derive(&self.key()).derive_indexed("trial", k as u64)
    }
}

/// A trial row; failed trials keep their seed and carry the error text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub seed: u64,
    pub kind: SensingKind,
    pub n: usize,
    pub delta_nominal: f64,
    pub delta_realized: f64,
    pub func: String,
    pub p2: f64,
    pub lambda1: f64,
    pub iterations: usize,
    pub converged: bool,
    pub error: String,
}

/// Aggregate over the trials of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ensemble: SensingKind,
    pub n: usize,
    pub func: String,
    pub delta_nominal: f64,
    pub delta_realized: f64,
    pub p2_emp_mean: f64,
    pub p2_emp_std: f64,
    pub p2_pred: f64,
    pub trials: usize,
    pub failed: usize,
    pub unconverged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub trials: Vec<TrialRow>,
}

/// Runs `trials` seeds per cell on the current rayon pool. Individual trial
/// failures become rows with an error; a failing prediction aborts the sweep.
pub fn run_sweep(cells: &[SweepCell], trials: usize, settings: &TrialSettings, quad: &QuadratureSpec, seed: Seed) -> Result<SweepResult> {
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..trials).map(move |k| (c, k))).collect();
    let mut rows_by_trial: Vec<(usize, TrialRow)> = jobs
        .par_iter()
        .map(|&(c, k)| {
            let cell = &cells[c];
            let s = cell.trial_seed(seed, k);
            let row = match run_trial(&cell.sensing, &cell.func, cell.delta, settings, s) {
                Ok(r) => TrialRow {
                    seed: s.0,
                    kind: r.kind,
                    n: cell.sensing.n,
                    delta_nominal: cell.delta,
                    delta_realized: r.delta_realized,
                    func: r.func,
                    p2: r.p2,
                    lambda1: r.lambda1,
                    iterations: r.iterations,
                    converged: r.converged,
                    error: String::new(),
                },
                Err(e) => TrialRow {
                    seed: s.0,
                    kind: cell.sensing.kind,
                    n: cell.sensing.n,
                    delta_nominal: cell.delta,
                    delta_realized: f64::NAN,
                    func: cell.func.label(),
                    p2: f64::NAN,
                    lambda1: f64::NAN,
                    iterations: 0,
                    converged: false,
                    error: e.to_string(),
                },
            };
            (c, row)
        })
        .collect();
    rows_by_trial.sort_by_key(|(c, r)| (*c, r.seed));

    let mut rows = Vec::with_capacity(cells.len());
    for (c, cell) in cells.iter().enumerate() {
        let mine: Vec<&TrialRow> = rows_by_trial.iter().filter(|(i, _)| *i == c).map(|(_, r)| r).collect();
        let ok: Vec<f64> = mine.iter().filter(|r| r.error.is_empty()).map(|r| r.p2).collect();
        let realized = match cell.sensing.rows_for(cell.delta) {
            Ok(m) => m as f64 / cell.sensing.n as f64,
            Err(_) => f64::NAN,
        };
        let p2_pred = if realized.is_finite() { rho_sq(&cell.func, realized, quad)?.rho_sq } else { f64::NAN };
        let (mean, std) = mean_std(&ok);
        rows.push(SweepRow {
            ensemble: cell.sensing.kind,
            n: cell.sensing.n,
            func: cell.func.label(),
            delta_nominal: cell.delta,
            delta_realized: realized,
            p2_emp_mean: mean,
            p2_emp_std: std,
            p2_pred,
            trials: ok.len(),
            failed: mine.len() - ok.len(),
            unconverged: mine.iter().filter(|r| r.error.is_empty() && !r.converged).count(),
        });
    }
    rows.sort_by(|a, b| {
        (a.func.as_str(), a.ensemble.to_string(), a.n)
            .cmp(&(b.func.as_str(), b.ensemble.to_string(), b.n))
            .then(a.delta_nominal.total_cmp(&b.delta_nominal))
    });
    let mut trials_out: Vec<TrialRow> = rows_by_trial.into_iter().map(|(_, r)| r).collect();
    trials_out.sort_by(|a, b| {
        (a.func.as_str(), a.kind.to_string(), a.n)
            .cmp(&(b.func.as_str(), b.kind.to_string(), b.n))
            .then(a.delta_nominal.total_cmp(&b.delta_nominal))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(SweepResult { rows, trials: trials_out })
}

/// Sample mean and (n − 1)-normalized standard deviation; NaN when empty.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() == 1 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Whitespace-separated blocks per (ensemble, function), separated by blank lines.
pub fn gnuplot_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("# delta_realized p2_emp_mean p2_emp_std p2_pred\n");
    let mut current: Option<(SensingKind, usize, &str)> = None;
    for r in rows {
        let key = (r.ensemble, r.n, r.func.as_str());
        if current != Some(key) {
            if current.is_some() {
                out.push_str("\n\n");
            }
            out.push_str(&format!("# {} n={} {}\n", r.ensemble, r.n, r.func));
            current = Some(key);
        }
        out.push_str(&format!("{} {} {} {}\n", r.delta_realized, r.p2_emp_mean, r.p2_emp_std, r.p2_pred));
    }
    out
}
