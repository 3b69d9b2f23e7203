//! Column-orthogonal sensing operators A ∈ C^{m×n} with AᴴA = I.

use std::fmt;
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{make_rng, Seed};

/// Largest row count for which a dense Haar operator may be built.
pub const HAAR_MAX_M: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingKind {
    /// Uniformly random column-orthogonal matrix (dense).
    Haar,
    /// Coded diffraction patterns: L stacked DFT blocks with random phase masks.
    Cdp,
    /// Random n-column subset of the unitary m-point DFT with random input phases.
    PartialDft,
}

impl fmt::Display for SensingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensingKind::Haar => "haar",
            SensingKind::Cdp => "cdp",
            SensingKind::PartialDft => "partial_dft",
        })
    }
}

/// Everything needed to rebuild an operator bit-for-bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorDescriptor {
    pub kind: SensingKind,
    pub m: usize,
    pub n: usize,
    pub seed: Seed,
}

impl OperatorDescriptor {
    pub fn build(&self) -> Result<SensingOperator> {
        match self.kind {
            SensingKind::Haar => build_haar(self.m, self.n, self.seed),
            SensingKind::Cdp => {
                if self.m % self.n != 0 {
                    return Err(invalid(format!("cdp requires m divisible by n, got m={} n={}", self.m, self.n)));
                }
                build_cdp(self.n, self.m / self.n, self.seed)
            }
            SensingKind::PartialDft => build_partial_dft(self.m, self.n, self.seed),
        }
    }

    pub fn delta(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Ensemble request from a config: a kind and a signal length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensingSpec {
    pub kind: SensingKind,
    pub n: usize,
}

impl SensingSpec {
    /// Row count for a nominal δ: m = ⌈δ n⌉; CDP requires an integer δ.
    pub fn rows_for(&self, delta: f64) -> Result<usize> {
        if !(delta > 1.0 && delta.is_finite()) {
            return Err(invalid(format!("delta must exceed 1, got {delta}")));
        }
        if self.n == 0 {
            return Err(invalid("n must be positive"));
        }
        let exact = delta * self.n as f64;
        match self.kind {
            SensingKind::Cdp => {
                let l = delta.round();
                if (delta - l).abs() > 1e-9 {
                    return Err(invalid(format!("cdp needs an integer delta (number of masks), got {delta}")));
                }
                Ok(l as usize * self.n)
            }
            _ => Ok((exact - 1e-9).ceil() as usize),
        }
    }

    pub fn descriptor(&self, delta: f64, seed: Seed) -> Result<OperatorDescriptor> {
        Ok(OperatorDescriptor { kind: self.kind, m: self.rows_for(delta)?, n: self.n, seed })
    }
}

#[derive(Clone)]
enum Payload {
    /// Column-major m×n entries.
    Haar(Vec<Complex64>),
    Cdp {
        masks: Vec<Vec<Complex64>>,
        fwd: Arc<dyn Fft<f64>>,
        inv: Arc<dyn Fft<f64>>,
    },
    PartialDft {
        rows: Vec<usize>,
        phases: Vec<Complex64>,
        fwd: Arc<dyn Fft<f64>>,
        inv: Arc<dyn Fft<f64>>,
    },
}

/// Matrix-free column-orthogonal operator. Immutable and shareable across threads.
#[derive(Clone)]
pub struct SensingOperator {
    desc: OperatorDescriptor,
    payload: Payload,
}

impl fmt::Debug for SensingOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SensingOperator").field("descriptor", &self.desc).finish()
    }
}

fn check_shape(m: usize, n: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    if m <= n {
        return Err(invalid(format!("need m > n, got m={m} n={n}")));
    }
    Ok(())
}

/// Haar-distributed column-orthogonal matrix: thin QR of a complex Gaussian
/// matrix, with column j rotated by the phase of R_jj so that the
/// factorization has a positive diagonal.
pub fn build_haar(m: usize, n: usize, seed: Seed) -> Result<SensingOperator> {
    check_shape(m, n)?;
    if m > HAAR_MAX_M {
        return Err(Error::CapExceeded { what: "haar row count", size: m, cap: HAAR_MAX_M });
    }
    let mut rng = make_rng(seed);
    // Column-major draw order so that the stream layout is independent of faer internals.
    let mut g = Mat::<Complex64>::zeros(m, n);
    for j in 0..n {
        for i in 0..m {
            g[(i, j)] = rng.complex_normal(1.0);
        }
    }
    let qr = g.qr();
    let q = qr.compute_thin_Q();
    let r = qr.thin_R();
    let mut dense = Vec::with_capacity(m * n);
    for j in 0..n {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { Complex64::new(1.0, 0.0) };
        dense.extend((0..m).map(|i| q[(i, j)] * phase));
    }
    Ok(SensingOperator { desc: OperatorDescriptor { kind: SensingKind::Haar, m, n, seed }, payload: Payload::Haar(dense) })
}

/// Coded diffraction patterns: A = L^{-1/2} [F P₁; …; F P_L] with unitary n-point F
/// and uniformly random phase masks P_l.
pub fn build_cdp(n: usize, l: usize, seed: Seed) -> Result<SensingOperator> {
    if l < 2 {
        return Err(invalid(format!("cdp needs at least 2 masks, got {l}")));
    }
    check_shape(l * n, n)?;
    let mut rng = make_rng(seed);
    let masks = (0..l).map(|_| (0..n).map(|_| rng.unit_phase()).collect()).collect();
    let mut planner = FftPlanner::new();
    let payload = Payload::Cdp { masks, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) };
    Ok(SensingOperator { desc: OperatorDescriptor { kind: SensingKind::Cdp, m: l * n, n, seed }, payload })
}

/// Partial DFT: x is phase-rotated, scattered into n distinct random slots of
/// a length-m buffer and transformed by the unitary m-point DFT.
pub fn build_partial_dft(m: usize, n: usize, seed: Seed) -> Result<SensingOperator> {
    check_shape(m, n)?;
    let mut rng = make_rng(seed);
    let rows = rand::seq::index::sample(&mut rng, m, n).into_vec();
    let phases = (0..n).map(|_| rng.unit_phase()).collect();
    let mut planner = FftPlanner::new();
    let payload = Payload::PartialDft { rows, phases, fwd: planner.plan_fft_forward(m), inv: planner.plan_fft_inverse(m) };
    Ok(SensingOperator { desc: OperatorDescriptor { kind: SensingKind::PartialDft, m, n, seed }, payload })
}

impl SensingOperator {
    pub fn kind(&self) -> SensingKind {
        self.desc.kind
    }
    pub fn m(&self) -> usize {
        self.desc.m
    }
    pub fn n(&self) -> usize {
        self.desc.n
    }
    /// Realized oversampling ratio m/n.
    pub fn delta(&self) -> f64 {
        self.desc.delta()
    }
    pub fn descriptor(&self) -> OperatorDescriptor {
        self.desc
    }

    /// Selected DFT rows (partial DFT only).
    pub fn selected_rows(&self) -> Option<&[usize]> {
        match &self.payload {
            Payload::PartialDft { rows, .. } => Some(rows),
            _ => None,
        }
    }

    /// z = A x.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let (m, n) = (self.m(), self.n());
        if x.len() != n {
            return Err(invalid(format!("apply expects length {n}, got {}", x.len())));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); m];
        match &self.payload {
            Payload::Haar(a) => {
                for (col, &xj) in a.chunks_exact(m).zip(x) {
                    if xj == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for (o, &aij) in out.iter_mut().zip(col) {
                        *o += aij * xj;
                    }
                }
            }
            Payload::Cdp { masks, fwd, .. } => {
                let scale = 1.0 / ((n * masks.len()) as f64).sqrt();
                for (block, mask) in out.chunks_exact_mut(n).zip(masks) {
                    for ((b, &p), &xj) in block.iter_mut().zip(mask).zip(x) {
                        *b = p * xj * scale;
                    }
                    fwd.process(block);
                }
            }
            Payload::PartialDft { rows, phases, fwd, .. } => {
                let scale = 1.0 / (m as f64).sqrt();
                for ((&r, &p), &xj) in rows.iter().zip(phases).zip(x) {
                    out[r] = p * xj * scale;
                }
                fwd.process(&mut out);
            }
        }
        Ok(out)
    }

    /// x = Aᴴ z.
    pub fn apply_adjoint(&self, z: &[Complex64]) -> Result<Vec<Complex64>> {
        let (m, n) = (self.m(), self.n());
        if z.len() != m {
            return Err(invalid(format!("apply_adjoint expects length {m}, got {}", z.len())));
        }
        let out = match &self.payload {
            Payload::Haar(a) => a
                .chunks_exact(m)
                .map(|col| col.iter().zip(z).map(|(aij, zi)| aij.conj() * zi).sum())
                .collect(),
            Payload::Cdp { masks, inv, .. } => {
                let scale = 1.0 / ((n * masks.len()) as f64).sqrt();
                let mut acc = vec![Complex64::new(0.0, 0.0); n];
                let mut buf = vec![Complex64::new(0.0, 0.0); n];
                for (block, mask) in z.chunks_exact(n).zip(masks) {
                    buf.copy_from_slice(block);
                    inv.process(&mut buf);
                    for ((a, &p), &b) in acc.iter_mut().zip(mask).zip(&buf) {
                        *a += p.conj() * b * scale;
                    }
                }
                acc
            }
            Payload::PartialDft { rows, phases, inv, .. } => {
                let scale = 1.0 / (m as f64).sqrt();
                let mut buf = z.to_vec();
                inv.process(&mut buf);
                rows.iter().zip(phases).map(|(&r, &p)| p.conj() * buf[r] * scale).collect()
            }
        };
        Ok(out)
    }

    /// Dense copy of A as a faer matrix (column probes for the fast kinds).
    pub fn to_dense(&self) -> Result<Mat<Complex64>> {
        let (m, n) = (self.m(), self.n());
        if let Payload::Haar(a) = &self.payload {
            return Ok(Mat::from_fn(m, n, |i, j| a[j * m + i]));
        }
        let mut dense = Mat::<Complex64>::zeros(m, n);
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            e[j] = Complex64::new(1.0, 0.0);
            let col = self.apply(&e)?;
            e[j] = Complex64::new(0.0, 0.0);
            for (i, v) in col.into_iter().enumerate() {
                dense[(i, j)] = v;
            }
        }
        Ok(dense)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::sample_complex_gaussian;
    use crate::vector::{inner, norm, norm_sq};

    fn probe(n: usize, seed: u64) -> Vec<Complex64> {
        sample_complex_gaussian(&mut make_rng(Seed(seed)), n, 1.0).unwrap()
    }

    fn ops() -> Vec<SensingOperator> {
        vec![
            build_haar(40, 12, Seed(1)).unwrap(),
            build_cdp(16, 3, Seed(2)).unwrap(),
            build_partial_dft(50, 17, Seed(3)).unwrap(),
        ]
    }

    fn isometry_residual(op: &SensingOperator, v: &[Complex64]) -> f64 {
        let back = op.apply_adjoint(&op.apply(v).unwrap()).unwrap();
        let diff: Vec<_> = back.iter().zip(v).map(|(a, b)| a - b).collect();
        norm(&diff) / norm(v)
    }

    #[test]
    fn haar_small_is_column_orthogonal() {
        let op = build_haar(8, 4, Seed(11)).unwrap();
        let a = op.to_dense().unwrap();
        for j in 0..4 {
            for k in 0..4 {
                let g: Complex64 = (0..8).map(|i| a[(i, j)].conj() * a[(i, k)]).sum();
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((g - want).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn haar_seeds_differ_and_trace_is_inverse_delta() {
        let a = build_haar(300, 100, Seed(1)).unwrap().to_dense().unwrap();
        let b = build_haar(300, 100, Seed(2)).unwrap().to_dense().unwrap();
        assert!((a[(0, 0)] - b[(0, 0)]).norm() > 1e-6);
        let mut tr = 0.0;
        for j in 0..100 {
            for i in 0..300 {
                tr += a[(i, j)].norm_sqr();
            }
        }
        assert!((tr / 300.0 - 1.0 / 3.0).abs() <= 1e-12);
    }

    #[test]
    fn haar_entries_are_unbiased() {
        // an unfixed or wrongly fixed QR leaves the diagonal of Q biased
        let trials = 400;
        let mut mean = [Complex64::new(0.0, 0.0); 3];
        let mut second = 0.0;
        for s in 0..trials {
            let a = build_haar(6, 3, Seed(1000 + s)).unwrap().to_dense().unwrap();
            for (j, m) in mean.iter_mut().enumerate() {
                *m += a[(j, j)] / trials as f64;
            }
            second += a[(0, 0)].norm_sqr() / trials as f64;
        }
        assert!(mean.iter().all(|m| m.norm() < 0.06), "{mean:?}");
        assert!((second - 1.0 / 6.0).abs() < 0.03, "{second}");
    }

    #[test]
    fn haar_rejects_wide_or_square() {
        assert!(build_haar(4, 4, Seed(0)).is_err());
        assert!(build_partial_dft(4, 8, Seed(0)).is_err());
        assert!(build_cdp(8, 1, Seed(0)).is_err());
    }

    #[test]
    fn cdp_is_isometric() {
        let op = build_cdp(64, 3, Seed(5)).unwrap();
        assert!(isometry_residual(&op, &probe(64, 9)) <= 1e-10);
        let mut e1 = vec![Complex64::new(0.0, 0.0); 64];
        e1[0] = Complex64::new(1.0, 0.0);
        assert!((norm_sq(&op.apply(&e1).unwrap()) - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn partial_dft_isometry_and_rows() {
        let op = build_partial_dft(128, 32, Seed(6)).unwrap();
        assert!(isometry_residual(&op, &probe(32, 10)) <= 1e-10);
        let mut rows = op.selected_rows().unwrap().to_vec();
        rows.sort_unstable();
        rows.dedup();
        assert_eq!(rows.len(), 32);
        assert!(rows.iter().all(|&r| r < 128));
    }

    #[test]
    fn zero_in_zero_out() {
        for op in ops() {
            let zx = vec![Complex64::new(0.0, 0.0); op.n()];
            assert!(op.apply(&zx).unwrap().iter().all(|v| v.norm() == 0.0));
            let zz = vec![Complex64::new(0.0, 0.0); op.m()];
            assert!(op.apply_adjoint(&zz).unwrap().iter().all(|v| v.norm() == 0.0));
        }
    }

    #[test]
    fn linearity_adjointness_and_isometry_for_every_kind() {
        for op in ops() {
            let (m, n) = (op.m(), op.n());
            for k in 0..20u64 {
                let u = probe(n, 100 + k);
                let v = probe(n, 200 + k);
                let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(-0.7, 0.4));
                let comb: Vec<_> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
                let lhs = op.apply(&comb).unwrap();
                let (au, av) = (op.apply(&u).unwrap(), op.apply(&v).unwrap());
                let res: Vec<_> = lhs.iter().zip(au.iter().zip(&av)).map(|(l, (p, q))| l - (a * p + b * q)).collect();
                assert!(norm(&res) <= 1e-10 * norm(&lhs).max(1.0));

                let w = probe(m, 300 + k);
                let lhs = inner(&w, &au);
                let rhs = inner(&op.apply_adjoint(&w).unwrap(), &u);
                assert!((lhs - rhs).norm() <= 1e-10 * norm(&w) * norm(&u));

                assert!(isometry_residual(&op, &u) <= 1e-9);
            }
        }
    }

    #[test]
    fn haar_matrix_free_matches_dense_multiply() {
        let op = build_haar(8, 4, Seed(21)).unwrap();
        let a = op.to_dense().unwrap();
        let x = probe(4, 22);
        let z = op.apply(&x).unwrap();
        for i in 0..8 {
            let want: Complex64 = (0..4).map(|j| a[(i, j)] * x[j]).sum();
            assert!((z[i] - want).norm() <= 1e-12);
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        for op in ops() {
            assert!(op.apply(&vec![Complex64::new(0.0, 0.0); op.n() + 1]).is_err());
            assert!(op.apply_adjoint(&vec![Complex64::new(0.0, 0.0); op.m() - 1]).is_err());
        }
    }

    #[test]
    fn descriptor_round_trip_rebuilds_identical_operator() {
        for op in ops() {
            let json = op.descriptor().to_json().unwrap();
            let again = OperatorDescriptor::from_json(&json).unwrap().build().unwrap();
            let x = probe(op.n(), 77);
            assert_eq!(op.apply(&x).unwrap(), again.apply(&x).unwrap());
        }
    }

    #[test]
    fn spec_rounds_rows_up_and_checks_cdp() {
        let spec = SensingSpec { kind: SensingKind::PartialDft, n: 2048 };
        assert_eq!(spec.rows_for(2.5).unwrap(), 5120);
        assert_eq!(spec.rows_for(3.0).unwrap(), 6144);
        let spec = SensingSpec { kind: SensingKind::PartialDft, n: 100 };
        assert_eq!(spec.rows_for(2.555).unwrap(), 256);
        let cdp = SensingSpec { kind: SensingKind::Cdp, n: 64 };
        assert_eq!(cdp.rows_for(4.0).unwrap(), 256);
        assert!(cdp.rows_for(2.5).is_err());
        assert!(spec.rows_for(1.0).is_err());
    }
}
