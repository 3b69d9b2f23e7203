//! Dense spectra of D = AᴴTA and of the PCA-EP matrix E(μ) at small sizes.

use faer::{Mat, Side};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::Integrator;
use crate::error::{invalid, Error, Result};
use crate::pcaep::{apply_e, Gains};
use crate::preprocessing::{FunctionSpec, ProcessingFunction};
use crate::quadrature::QuadratureSpec;
use crate::rng::{make_rng, Seed};
use crate::sensing::{SensingKind, SensingOperator, SensingSpec};
use crate::signal::make_signal;
use crate::spectral::{apply_d, build_weights, WeightDiagonal};
use crate::vector::ComplexVector;

/// Default cap on the dimension of any dense matrix built here.
pub const DEFAULT_DENSE_CAP: usize = 1536;
/// Largest tolerated |D − Dᴴ| entry before Hermitization.
pub const HERMITIAN_TOL: f64 = 1e-8;

fn check_cap(what: &'static str, size: usize, cap: usize) -> Result<()> {
    if size > cap {
        return Err(Error::CapExceeded { what, size, cap });
    }
    Ok(())
}

/// D materialized from basis probes and Hermitized; returns the matrix and the
/// largest asymmetry seen before symmetrizing.
pub fn dense_d(op: &SensingOperator, w: &WeightDiagonal, cap: usize) -> Result<(Mat<Complex64>, f64)> {
    let n = op.n();
    check_cap("dense D dimension", n, cap)?;
    let cols = probe_columns(n, |e| apply_d(op, w, e))?;
    let mut d = Mat::<Complex64>::from_fn(n, n, |i, j| cols[j][i]);
    let mut asym: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            let (a, b) = (d[(i, j)], d[(j, i)]);
            asym = asym.max((a - b.conj()).norm());
            let h = 0.5 * (a + b.conj());
            d[(i, j)] = h;
            d[(j, i)] = h.conj();
        }
    }
    if asym > HERMITIAN_TOL {
        return Err(Error::Numeric(format!("D is not Hermitian: asymmetry {asym:e}")));
    }
    Ok((d, asym))
}

/// E(μ) = (δAAᴴ − I)(G/Ḡ − I) materialized from basis probes.
pub fn dense_e(op: &SensingOperator, centered: &[f64], cap: usize) -> Result<Mat<Complex64>> {
    let m = op.m();
    check_cap("dense E dimension", m, cap)?;
    let cols = probe_columns(m, |e| apply_e(op, centered, e))?;
    Ok(Mat::from_fn(m, m, |i, j| cols[j][i]))
}

/// Images of the standard basis vectors under `map`, computed in parallel.
fn probe_columns(dim: usize, map: impl Fn(&[Complex64]) -> Result<ComplexVector> + Sync) -> Result<Vec<ComplexVector>> {
    (0..dim)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![Complex64::new(0.0, 0.0); dim];
            e[j] = Complex64::new(1.0, 0.0);
            map(&e)
        })
        .collect()
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn eig_hermitian(h: &Mat<Complex64>) -> Result<Vec<f64>> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(invalid("matrix is not square"));
    }
    for j in 0..n {
        for i in 0..=j {
            if (h[(i, j)] - h[(j, i)].conj()).norm() > HERMITIAN_TOL {
                return Err(invalid(format!("matrix is not Hermitian at ({i}, {j})")));
            }
        }
    }
    let mut ev = h
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numeric(format!("hermitian eigensolver failed: {e:?}")))?;
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Eigenvalues of a general complex matrix (Hessenberg reduction + shifted QR).
pub fn eig_general(a: &Mat<Complex64>) -> Result<Vec<Complex64>> {
    if a.nrows() != a.ncols() {
        return Err(invalid("matrix is not square"));
    }
    a.eigenvalues().map_err(|e| Error::Numeric(format!("eigensolver did not converge: {e:?}")))
}

/// Eigenvalues and eigenvectors (as columns) of a general complex matrix.
pub fn eig_general_vectors(a: &Mat<Complex64>) -> Result<(Vec<Complex64>, Mat<Complex64>)> {
    let evd = a.eigen().map_err(|e| Error::Numeric(format!("eigensolver did not converge: {e:?}")))?;
    let s = evd.S().column_vector().iter().copied().collect();
    Ok((s, evd.U().to_owned()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// μ̂ ∈ (0, μ̄]; predicts the largest eigenvalue of D.
    Max,
    /// 1/μ̂ < t_min; predicts the smallest eigenvalue of D.
    Min,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub branch: Branch,
    pub func: String,
    pub n: usize,
    pub m: usize,
    pub delta_realized: f64,
    pub mu: f64,
    /// Λ(μ̂) with the empirical Ḡ.
    pub lambda_pred: f64,
    /// Λ(μ̂) with the asymptotic E[G].
    pub lambda_asymptotic: f64,
    /// λ₁(D) on the max branch, λₙ(D) on the min branch.
    pub extreme_eig: f64,
    /// | |λ₁(E(μ̂))| − 1 |.
    pub outlier_gap: f64,
    /// |extreme_eig − lambda_pred|.
    pub top_match: f64,
    /// |extreme_eig − lambda_asymptotic|.
    pub asymptotic_match: f64,
    pub hermitian_residual: f64,
    pub d_eigs: Vec<f64>,
    pub e_eigs: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSetup {
    pub sensing: SensingSpec,
    pub func: FunctionSpec,
    pub delta: f64,
    pub branch: Branch,
    pub cap: usize,
}

impl Default for SpectrumSetup {
    /// Haar, n = 300, δ = 5, MM on the max branch.
    fn default() -> Self {
        SpectrumSetup {
            sensing: SensingSpec { kind: SensingKind::Haar, n: 300 },
            func: FunctionSpec::Mm,
            delta: 5.0,
            branch: Branch::Max,
            cap: DEFAULT_DENSE_CAP,
        }
    }
}

/// Builds both dense spectra at the branch's μ̂ and compares the extreme
/// eigenvalue of D and the outlier of E(μ̂) with their predictions.
pub fn analyze(setup: &SpectrumSetup, quad: &QuadratureSpec, seed: Seed) -> Result<SpectrumReport> {
    let desc = setup.sensing.descriptor(setup.delta, seed.derive("sensing"))?;
    check_cap("dense E dimension", desc.m, setup.cap)?;
    // resolve μ̂ before paying for any dense work
    let func = ProcessingFunction::new(setup.func.clone(), desc.delta())?;
    let integ = Integrator::new(&func, quad)?;
    let (mu, lambda_asymptotic) = match setup.branch {
        Branch::Max => {
            let pred = integ.predict()?;
            let mu = pred
                .mu_hat
                .ok_or_else(|| Error::NotApplicable(format!("{} has no mu_hat at delta = {}", func.label(), desc.delta())))?;
            (mu, pred.lambda_at_mu_hat.unwrap_or(f64::NAN))
        }
        Branch::Min => {
            let mb = integ.min_branch()?;
            (mb.mu_hat, mb.lambda)
        }
    };
    let op = desc.build()?;
    let delta = op.delta();
    let signal = make_signal(&op, &mut make_rng(seed.derive("signal")))?;
    let w = build_weights(&func, &signal, delta)?;
    let gains = Gains::new(&func, &signal, mu)?;
    let lambda_pred = 1.0 / mu - (delta - 1.0) / delta / gains.g_bar;

    let (d, hermitian_residual) = dense_d(&op, &w, setup.cap)?;
    let d_eigs = eig_hermitian(&d)?;
    let e_eigs = eig_general(&dense_e(&op, &gains.centered(), setup.cap)?)?;
    let outlier = e_eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let extreme_eig = match setup.branch {
        Branch::Max => *d_eigs.last().expect("n > 0"),
        Branch::Min => d_eigs[0],
    };
    Ok(SpectrumReport {
        branch: setup.branch,
        func: func.label(),
        n: op.n(),
        m: op.m(),
        delta_realized: delta,
        mu,
        lambda_pred,
        lambda_asymptotic,
        extreme_eig,
        outlier_gap: (outlier - 1.0).abs(),
        top_match: (extreme_eig - lambda_pred).abs(),
        asymptotic_match: (extreme_eig - lambda_asymptotic).abs(),
        hermitian_residual,
        d_eigs,
        e_eigs,
    })
}

/// Histogram bins (lower edge, upper edge, count) with the Freedman–Diaconis width.
pub fn freedman_diaconis(values: &[f64]) -> Vec<(f64, f64, usize)> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    let (min, max) = (v[0], v[v.len() - 1]);
    let iqr = q(0.75) - q(0.25);
    let width = 2.0 * iqr / (v.len() as f64).cbrt();
    let bins = if width > 0.0 && max > min { (((max - min) / width).ceil() as usize).clamp(1, 10_000) } else { 1 };
    let step = if max > min { (max - min) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &x in &v {
        let k = (((x - min) / step) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts.into_iter().enumerate().map(|(k, c)| (min + k as f64 * step, min + (k + 1) as f64 * step, c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcaep::{fixed_point_check, mu_for_eigenvalue};
    use crate::rng::sample_complex_gaussian;
    use crate::sensing::build_haar;
    use crate::spectral::{dense_d_product, power_method};

    #[test]
    fn constant_weights_give_flat_spectrum() {
        let op = build_haar(144, 48, Seed(1)).unwrap();
        for c in [1.0, 0.37] {
            let (d, _) = dense_d(&op, &WeightDiagonal { t_values: vec![c; 144] }, 100).unwrap();
            let ev = eig_hermitian(&d).unwrap();
            assert!(ev.iter().all(|x| (x - c).abs() < 1e-9));
        }
    }

    #[test]
    fn probed_d_matches_direct_product() {
        let op = build_haar(192, 48, Seed(2)).unwrap();
        let func = ProcessingFunction::new(FunctionSpec::Mm, 4.0).unwrap();
        let signal = make_signal(&op, &mut make_rng(Seed(3))).unwrap();
        let w = build_weights(&func, &signal, 4.0).unwrap();
        let (d, asym) = dense_d(&op, &w, 100).unwrap();
        assert!(asym < 1e-12);
        let direct = dense_d_product(&op, &w).unwrap();
        let err = (0..48).flat_map(|i| (0..48).map(move |j| (i, j))).map(|(i, j)| (d[(i, j)] - direct[(i, j)]).norm()).fold(0.0, f64::max);
        assert!(err < 1e-11, "{err}");
    }

    #[test]
    fn probed_e_matches_explicit_factors() {
        let op = build_haar(144, 48, Seed(4)).unwrap();
        let delta = op.delta();
        let func = ProcessingFunction::new(FunctionSpec::Mm, delta).unwrap();
        let signal = make_signal(&op, &mut make_rng(Seed(5))).unwrap();
        let gains = Gains::new(&func, &signal, 0.5).unwrap();
        let centered = gains.centered();
        let a = op.to_dense().unwrap();
        let left = Mat::<Complex64>::from_fn(144, 144, |i, j| {
            let aa: Complex64 = (0..48).map(|k| a[(i, k)] * a[(j, k)].conj()).sum();
            aa * delta - if i == j { 1.0 } else { 0.0 }
        });
        let right = Mat::<Complex64>::from_fn(144, 144, |i, j| Complex64::new(if i == j { centered[i] } else { 0.0 }, 0.0));
        let trace = |x: &Mat<Complex64>| (0..144).map(|i| x[(i, i)]).sum::<Complex64>().norm() / 144.0;
        assert!(trace(&left) <= 1e-9);
        assert!(trace(&right) <= 1e-9);

        let explicit = &left * &right;
        let probed = dense_e(&op, &centered, 200).unwrap();
        let lhs = eig_general(&probed).unwrap();
        let mut rhs = eig_general(&explicit).unwrap();
        for z in lhs {
            let k = (0..rhs.len()).min_by(|&a, &b| (rhs[a] - z).norm().total_cmp(&(rhs[b] - z).norm())).unwrap();
            assert!((rhs[k] - z).norm() < 1e-8, "{z} unmatched");
            rhs.swap_remove(k);
        }
    }

    #[test]
    fn dense_top_eigenvalue_matches_power_method() {
        let op = build_haar(300, 60, Seed(6)).unwrap();
        let delta = op.delta();
        let func = ProcessingFunction::new(FunctionSpec::Mm, delta).unwrap();
        let signal = make_signal(&op, &mut make_rng(Seed(7))).unwrap();
        let w = build_weights(&func, &signal, delta).unwrap();
        let (d, _) = dense_d(&op, &w, 100).unwrap();
        let top = *eig_hermitian(&d).unwrap().last().unwrap();
        let est = power_method(&op, &w, 10.0, 100_000, 1e-10, &mut make_rng(Seed(8))).unwrap();
        assert!((est.lambda_hat - top).abs() < 1e-6, "{} vs {top}", est.lambda_hat);
    }

    #[test]
    fn dense_d_cap() {
        let op = build_haar(144, 48, Seed(1)).unwrap();
        let w = WeightDiagonal { t_values: vec![1.0; 144] };
        assert!(matches!(dense_d(&op, &w, 10), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn hermitian_solver_basics() {
        let ident = Mat::<Complex64>::identity(5, 5);
        assert!(eig_hermitian(&ident).unwrap().iter().all(|x| (x - 1.0).abs() < 1e-14));
        let diag = Mat::<Complex64>::from_fn(6, 6, |i, j| if i == j { Complex64::new((6 - i) as f64, 0.0) } else { Complex64::new(0.0, 0.0) });
        let ev = eig_hermitian(&diag).unwrap();
        for (k, x) in ev.iter().enumerate() {
            assert!((x - (k + 1) as f64).abs() < 1e-12);
        }
        let g = sample_complex_gaussian(&mut make_rng(Seed(3)), 64 * 64, 1.0).unwrap();
        let h = Mat::<Complex64>::from_fn(64, 64, |i, j| g[i * 64 + j] + g[j * 64 + i].conj());
        let tr: f64 = (0..64).map(|i| h[(i, i)].re).sum();
        assert!((eig_hermitian(&h).unwrap().iter().sum::<f64>() - tr).abs() < 1e-9);
        let nonherm = Mat::<Complex64>::from_fn(3, 3, |i, j| Complex64::new((i * 3 + j) as f64, 0.0));
        assert!(eig_hermitian(&nonherm).is_err());
    }

    #[test]
    fn general_solver_basics() {
        let vals = [Complex64::new(1.0, 2.0), Complex64::new(-3.0, 0.5), Complex64::new(0.0, -1.0)];
        let diag = Mat::<Complex64>::from_fn(3, 3, |i, j| if i == j { vals[i] } else { Complex64::new(0.0, 0.0) });
        let mut ev = eig_general(&diag).unwrap();
        for v in vals {
            let k = ev.iter().position(|e| (e - v).norm() < 1e-12).expect("eigenvalue present");
            ev.remove(k);
        }
        let jordan = Mat::<Complex64>::from_fn(4, 4, |i, j| if j == i + 1 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
        assert!(eig_general(&jordan).unwrap().iter().all(|e| e.norm() < 1e-8));
        let g = sample_complex_gaussian(&mut make_rng(Seed(4)), 64 * 64, 1.0).unwrap();
        let a = Mat::<Complex64>::from_fn(64, 64, |i, j| g[i * 64 + j]);
        let tr: Complex64 = (0..64).map(|i| a[(i, i)]).sum();
        let sum: Complex64 = eig_general(&a).unwrap().iter().sum();
        assert!((sum - tr).norm() < 1e-7);
    }

    #[test]
    fn constant_t_gives_zero_e() {
        let op = build_haar(60, 20, Seed(5)).unwrap();
        let e = dense_e(&op, &vec![0.0; 60], 100).unwrap();
        assert!((0..60).all(|i| (0..60).all(|j| e[(i, j)].norm() == 0.0)));
    }

    #[test]
    fn below_threshold_is_not_applicable() {
        let setup = SpectrumSetup {
            sensing: SensingSpec { kind: SensingKind::Haar, n: 100 },
            func: FunctionSpec::Star,
            delta: 1.5,
            branch: Branch::Max,
            cap: DEFAULT_DENSE_CAP,
        };
        assert!(matches!(analyze(&setup, &QuadratureSpec::default(), Seed(1)), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn eigenvector_of_e_at_unit_eigenvalue_is_eigenvector_of_d() {
        let op = build_haar(150, 50, Seed(8)).unwrap();
        let delta = op.delta();
        let func = ProcessingFunction::new(FunctionSpec::Mm, delta).unwrap();
        let signal = make_signal(&op, &mut make_rng(Seed(9))).unwrap();
        let w = build_weights(&func, &signal, delta).unwrap();
        let (d, _) = dense_d(&op, &w, 200).unwrap();
        let lambda1 = *eig_hermitian(&d).unwrap().last().unwrap();
        let mu = mu_for_eigenvalue(&func, &signal, lambda1).unwrap();
        let gains = Gains::new(&func, &signal, mu).unwrap();
        let (vals, vecs) = eig_general_vectors(&dense_e(&op, &gains.centered(), 200).unwrap()).unwrap();
        let k = (0..vals.len())
            .min_by(|&a, &b| (vals[a] - 1.0).norm().total_cmp(&(vals[b] - 1.0).norm()))
            .unwrap();
        assert!((vals[k] - 1.0).norm() < 1e-6, "closest eigenvalue {}", vals[k]);
        let z: Vec<Complex64> = (0..vals.len()).map(|i| vecs[(i, k)]).collect();
        let check = fixed_point_check(&op, &func, &signal, mu, &z).unwrap();
        assert!((check.lambda_pred - lambda1).abs() < 1e-8);
        assert!(check.eigen_residual <= 1e-5, "residual {}", check.eigen_residual);
    }

    #[test]
    fn histogram_counts_everything() {
        let v: Vec<f64> = (0..1000).map(|k| ((k * 7919) % 1000) as f64 / 1000.0).collect();
        let h = freedman_diaconis(&v);
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), 1000);
        assert!(h.len() > 1);
        assert_eq!(freedman_diaconis(&[2.0, 2.0]).len(), 1);
    }
}
