//! The empirical spectral estimator: the leading eigenvector of D = Aᴴ diag(T(y)) A
//! by shifted power iteration.

use faer::{Col, Mat};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::preprocessing::{FunctionSpec, ProcessingFunction};
use crate::rng::{make_rng, sample_complex_gaussian, RandomStream, Seed};
use crate::sensing::{SensingKind, SensingOperator, SensingSpec};
use crate::signal::{make_signal, SignalInstance};
use crate::vector::{cosine_similarity_sq, inner, rescale_to, ComplexVector};

pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_TOL: f64 = 1e-9;

/// Diagonal of the processed measurements, T(yᵢ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightDiagonal {
    pub t_values: Vec<f64>,
}

pub fn build_weights(func: &ProcessingFunction, signal: &SignalInstance, delta: f64) -> Result<WeightDiagonal> {
    let t_values = signal.y.iter().map(|&y| func.eval_t(y, delta)).collect::<Result<Vec<_>>>()?;
    Ok(WeightDiagonal { t_values })
}

/// D x = Aᴴ diag(w) A x.
pub fn apply_d(op: &SensingOperator, w: &WeightDiagonal, x: &[Complex64]) -> Result<ComplexVector> {
    if w.t_values.len() != op.m() {
        return Err(invalid(format!("weight length {} does not match m = {}", w.t_values.len(), op.m())));
    }
    let mut z = op.apply(x)?;
    for (zi, &t) in z.iter_mut().zip(&w.t_values) {
        *zi *= t;
    }
    op.apply_adjoint(&z)
}

/// D = Aᴴ diag(w) A formed by a dense product (used for the Haar ensemble).
pub fn dense_d_product(op: &SensingOperator, w: &WeightDiagonal) -> Result<Mat<Complex64>> {
    if w.t_values.len() != op.m() {
        return Err(invalid("weight length does not match m"));
    }
    let a = op.to_dense()?;
    let wa = Mat::<Complex64>::from_fn(op.m(), op.n(), |i, j| a[(i, j)] * w.t_values[i]);
    Ok(a.adjoint() * wa)
}

/// The operator the power method iterates with.
pub enum DataMatrix<'a> {
    MatrixFree { op: &'a SensingOperator, w: &'a WeightDiagonal },
    Dense(Mat<Complex64>),
}

impl DataMatrix<'_> {
    pub fn n(&self) -> usize {
        match self {
            DataMatrix::MatrixFree { op, .. } => op.n(),
            DataMatrix::Dense(d) => d.ncols(),
        }
    }

    pub fn apply(&self, x: &[Complex64]) -> Result<ComplexVector> {
        match self {
            DataMatrix::MatrixFree { op, w } => apply_d(op, w, x),
            DataMatrix::Dense(d) => {
                if x.len() != d.ncols() {
                    return Err(invalid("length mismatch"));
                }
                let col = Col::<Complex64>::from_fn(x.len(), |i| x[i]);
                let y = d * &col;
                Ok((0..y.nrows()).map(|i| y[i]).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    /// Leading eigenvector scaled to ‖x̂‖² = n.
    pub x_hat: ComplexVector,
    /// Rayleigh quotient Re⟨x̂, D x̂⟩/‖x̂‖².
    pub lambda_hat: f64,
    pub iterations: usize,
    /// ‖D x̂ − λ̂ x̂‖/‖x̂‖.
    pub residual: f64,
    pub converged: bool,
}

/// Shifted power iteration on D + εI from a random start. Stops when the
/// eigen-residual ‖Dv − λ̂v‖ of the unit iterate drops to `tol`; the residual
/// does not depend on the iterate's global phase.
pub fn power_method(
    op: &SensingOperator,
    w: &WeightDiagonal,
    shift: f64,
    max_iter: usize,
    tol: f64,
    rng: &mut RandomStream,
) -> Result<SpectralEstimate> {
    power_iterate(&DataMatrix::MatrixFree { op, w }, shift, max_iter, tol, rng)
}

pub fn power_iterate(d: &DataMatrix, shift: f64, max_iter: usize, tol: f64, rng: &mut RandomStream) -> Result<SpectralEstimate> {
    let n = d.n();
    if max_iter == 0 {
        return Err(invalid("max_iter must be positive"));
    }
    let mut v = sample_complex_gaussian(rng, n, 1.0)?;
    rescale_to(&mut v, 1.0);
    let mut best: Option<(f64, ComplexVector, f64)> = None;
    for it in 1..=max_iter {
        let dv = d.apply(&v)?;
        let lambda = inner(&v, &dv).re;
        let resid: f64 = dv.iter().zip(&v).map(|(a, b)| (a - b * lambda).norm_sqr()).sum::<f64>().sqrt();
        if !resid.is_finite() {
            return Err(Error::Numeric("power iteration produced non-finite values".into()));
        }
        if best.as_ref().is_none_or(|b| resid < b.0) {
            best = Some((resid, v.clone(), lambda));
        }
        if resid <= tol {
            return Ok(finish(v, lambda, it, resid, true));
        }
        let mut next: ComplexVector = dv.iter().zip(&v).map(|(a, b)| a + b * shift).collect();
        if !rescale_to(&mut next, 1.0) {
            return Err(Error::Numeric("power iterate collapsed to zero; increase the shift".into()));
        }
        v = next;
    }
    let (resid, v, lambda) = best.expect("at least one iteration");
    Ok(finish(v, lambda, max_iter, resid, false))
}

fn finish(mut v: ComplexVector, lambda: f64, iterations: usize, residual: f64, converged: bool) -> SpectralEstimate {
    let n = v.len() as f64;
    rescale_to(&mut v, n);
    SpectralEstimate { x_hat: v, lambda_hat: lambda, iterations, residual, converged }
}

/// Shift ε used when none is configured: 0 for nonnegative T, 10 for MM, 50 for the 1 − 1/s family.
pub fn default_shift(spec: &FunctionSpec) -> f64 {
    match spec {
        FunctionSpec::Trim { .. } | FunctionSpec::Subset { .. } | FunctionSpec::ShiftedMm => 0.0,
        FunctionSpec::Mm => 10.0,
        FunctionSpec::Star | FunctionSpec::StarRegularized { .. } | FunctionSpec::AltWeak => 50.0,
        FunctionSpec::Custom { table, .. } => {
            let lo = table.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            (-lo).max(0.0)
        }
    }
}

/// Largest n for which a Haar trial is run (dense D is formed).
pub const HAAR_MAX_N: usize = 2000;

/// One row of a simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub kind: SensingKind,
    pub delta_realized: f64,
    pub func: String,
    pub p2: f64,
    pub lambda1: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSettings {
    pub shift: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for TrialSettings {
    fn default() -> Self {
        TrialSettings { shift: None, max_iter: DEFAULT_MAX_ITER, tol: DEFAULT_TOL }
    }
}

/// Runs one seeded trial end to end and returns the spectral estimate. The
/// processing function is normalized at the realized δ = m/n.
pub fn run_trial(sensing: &SensingSpec, func: &FunctionSpec, delta: f64, settings: &TrialSettings, seed: Seed) -> Result<TrialResult> {
    let desc = sensing.descriptor(delta, seed.derive("sensing"))?;
    if desc.kind == SensingKind::Haar && desc.n > HAAR_MAX_N {
        return Err(Error::CapExceeded { what: "haar trial n", size: desc.n, cap: HAAR_MAX_N });
    }
    let op = desc.build()?;
    let realized = op.delta();
    let pf = ProcessingFunction::new(func.clone(), realized)?;
    let signal = make_signal(&op, &mut make_rng(seed.derive("signal")))?;
    let w = build_weights(&pf, &signal, realized)?;
    let shift = settings.shift.unwrap_or_else(|| default_shift(func));
    let mut rng = make_rng(seed.derive("power"));
    let data = match op.kind() {
        SensingKind::Haar => DataMatrix::Dense(dense_d_product(&op, &w)?),
        _ => DataMatrix::MatrixFree { op: &op, w: &w },
    };
    let est = power_iterate(&data, shift, settings.max_iter, settings.tol, &mut rng)?;
    Ok(TrialResult {
        seed: seed.0,
        kind: op.kind(),
        delta_realized: realized,
        func: func.label(),
        p2: cosine_similarity_sq(&est.x_hat, &signal.x_star)?,
        lambda1: est.lambda_hat,
        iterations: est.iterations,
        converged: est.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::{build_haar, build_partial_dft};
    use crate::vector::norm;
    use faer::Side;

    fn haar_instance(m: usize, n: usize, spec: FunctionSpec, seed: u64) -> (SensingOperator, SignalInstance, ProcessingFunction, WeightDiagonal) {
        let op = build_haar(m, n, Seed(seed)).unwrap();
        let sig = make_signal(&op, &mut make_rng(Seed(seed + 1))).unwrap();
        let f = ProcessingFunction::new(spec, op.delta()).unwrap();
        let w = build_weights(&f, &sig, op.delta()).unwrap();
        (op, sig, f, w)
    }

    #[test]
    fn constant_weights() {
        let op = build_partial_dft(90, 30, Seed(1)).unwrap();
        let x = sample_complex_gaussian(&mut make_rng(Seed(2)), 30, 1.0).unwrap();
        for c in [1.0, -0.7, 2.5] {
            let w = WeightDiagonal { t_values: vec![c; 90] };
            let dx = apply_d(&op, &w, &x).unwrap();
            let err: f64 = dx.iter().zip(&x).map(|(a, b)| (a - b * c).norm_sqr()).sum::<f64>().sqrt();
            assert!(err <= 1e-9);
        }
    }

    #[test]
    fn unit_weights_converge_immediately() {
        let op = build_partial_dft(90, 30, Seed(1)).unwrap();
        let w = WeightDiagonal { t_values: vec![1.0; 90] };
        let est = power_method(&op, &w, 0.0, 100, 1e-9, &mut make_rng(Seed(3))).unwrap();
        assert!(est.converged);
        assert_eq!(est.iterations, 1);
        assert!((est.lambda_hat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subset_weights_are_indicator_with_exp_tail_fraction() {
        let op = build_partial_dft(6000, 2000, Seed(4)).unwrap();
        let sig = make_signal(&op, &mut make_rng(Seed(5))).unwrap();
        let f = ProcessingFunction::new(FunctionSpec::Subset { c1: 1.5 }, 3.0).unwrap();
        let w = build_weights(&f, &sig, 3.0).unwrap();
        assert!(w.t_values.iter().all(|&t| t == 0.0 || t == 1.0));
        let frac = w.t_values.iter().sum::<f64>() / 6000.0;
        assert!((frac - (-1.5f64).exp()).abs() < 0.05, "{frac}");
    }

    #[test]
    fn trim_weights_in_unit_interval() {
        let op = build_partial_dft(600, 200, Seed(4)).unwrap();
        let sig = make_signal(&op, &mut make_rng(Seed(5))).unwrap();
        let f = ProcessingFunction::new(FunctionSpec::Trim { c2: 2.0 }, 3.0).unwrap();
        let w = build_weights(&f, &sig, 3.0).unwrap();
        assert!(w.t_values.iter().all(|&t| (0.0..1.0).contains(&t)));
        let raw: Vec<f64> = sig.y.iter().map(|y| FunctionSpec::Trim { c2: 2.0 }.raw(3.0 * y * y, 3.0)).collect();
        assert!(raw.iter().all(|&t| (0.0..4.0).contains(&t)));
    }

    #[test]
    fn power_method_matches_dense_eigensolver() {
        let (op, _, _, w) = haar_instance(192, 48, FunctionSpec::Mm, 10);
        let est = power_method(&op, &w, 10.0, 20_000, 1e-10, &mut make_rng(Seed(11))).unwrap();
        assert!(est.converged);
        let d = dense_d_product(&op, &w).unwrap();
        let eigs = d.self_adjoint_eigenvalues(Side::Lower).unwrap();
        let top = eigs.iter().cloned().fold(f64::MIN, f64::max);
        assert!((est.lambda_hat - top).abs() < 1e-6, "{} vs {top}", est.lambda_hat);
        assert!(est.residual <= 1e-10);
    }

    #[test]
    fn normalization_leaves_top_eigenvector_unchanged() {
        // raw Trim (sup 4) versus its normalized form T/4
        let (op, _, _, w_norm) = haar_instance(384, 128, FunctionSpec::Trim { c2: 2.0 }, 20);
        let raw = WeightDiagonal { t_values: w_norm.t_values.iter().map(|t| 4.0 * t).collect() };
        let a = power_method(&op, &w_norm, 0.0, 20_000, 1e-11, &mut make_rng(Seed(1))).unwrap();
        let b = power_method(&op, &raw, 0.0, 20_000, 1e-11, &mut make_rng(Seed(2))).unwrap();
        assert!(cosine_similarity_sq(&a.x_hat, &b.x_hat).unwrap() >= 1.0 - 1e-6);
        // a constant offset C shifts every eigenvalue by C and keeps eigenvectors
        let shifted = WeightDiagonal { t_values: w_norm.t_values.iter().map(|t| (t + 3.0) / 4.0).collect() };
        let c = power_method(&op, &shifted, 0.0, 20_000, 1e-11, &mut make_rng(Seed(3))).unwrap();
        assert!(cosine_similarity_sq(&a.x_hat, &c.x_hat).unwrap() >= 1.0 - 1e-6);
    }

    #[test]
    fn estimate_has_signal_norm() {
        let (op, _, _, w) = haar_instance(120, 40, FunctionSpec::Subset { c1: 1.5 }, 30);
        let est = power_method(&op, &w, 0.0, 5000, 1e-9, &mut make_rng(Seed(1))).unwrap();
        assert!((norm(&est.x_hat).powi(2) - 40.0).abs() < 1e-9);
    }

    #[test]
    fn trials_are_deterministic() {
        let spec = SensingSpec { kind: SensingKind::PartialDft, n: 256 };
        let settings = TrialSettings::default();
        let a = run_trial(&spec, &FunctionSpec::Mm, 4.0, &settings, Seed(9)).unwrap();
        let b = run_trial(&spec, &FunctionSpec::Mm, 4.0, &settings, Seed(9)).unwrap();
        assert_eq!(a.p2.to_bits(), b.p2.to_bits());
        assert_eq!(a.iterations, b.iterations);
    }
}
