//! ψ-functions, the μ̄/μ̂ fixed points and the asymptotic cosine-similarity
//! prediction ρ²_T(δ).
//!
//! All expectations are over s = δ|Z⋆|² ~ Exp(1) with g(s) = 1/(ν − T(s)),
//! ν = 1/μ. Working in ν lets one code path cover both the usual branch
//! μ ∈ (0, 1] (ν ≥ 1) and the extended branch ν < t_min used for the
//! minimum eigenvalue.

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::preprocessing::{FunctionSpec, ProcessingFunction, SINGULAR_EPS};
use crate::quadrature::{ExpRule, QuadratureSpec};
use crate::rng::{make_rng, Seed};

/// Lowest μ considered by the bisections (ψ₁, ψ₂ → 1 as μ → 0⁺).
pub const MU_FLOOR: f64 = 1e-8;
/// Upper bisection bracket when μ = 1 itself is singular.
pub const MU_CEIL: f64 = 1.0 - 1e-12;
/// Absolute tolerance of μ bisections.
pub const MU_TOL: f64 = 1e-10;
/// Absolute tolerance of δ bisections.
pub const DELTA_TOL: f64 = 1e-4;
/// |ψ₁(μ̄) − δ/(δ−1)| below this counts as the phase boundary.
pub const BOUNDARY_TOL: f64 = 1e-7;

/// Raw moments E[g], E[s g], E[g²], E[s g²].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiTriple {
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
    pub mu: f64,
    pub delta: f64,
}

impl Moments {
    fn psi(&self, mu: f64, delta: f64) -> PsiTriple {
        PsiTriple {
            psi1: self.m1 / self.m0,
            psi2: self.m2 / (self.m0 * self.m0),
            // Only ψ₃² enters any formula; the modulus keeps ψ₃ > 0 on the
            // extended branch where E[g] < 0.
            psi3: self.m3.sqrt() / self.m0.abs(),
            mu,
            delta,
        }
    }
}

/// δ/(δ−1).
#[inline]
pub fn ratio(delta: f64) -> f64 {
    delta / (delta - 1.0)
}

/// A processing function paired with a quadrature rule refined at its breakpoints.
#[derive(Clone, Debug)]
pub struct Integrator<'a> {
    pub func: &'a ProcessingFunction,
    rule: ExpRule,
    spec: QuadratureSpec,
}

impl<'a> Integrator<'a> {
    pub fn new(func: &'a ProcessingFunction, spec: &QuadratureSpec) -> Result<Self> {
        Ok(Integrator { func, rule: ExpRule::build(spec, &func.breakpoints())?, spec: spec.clone() })
    }

    pub fn delta(&self) -> f64 {
        self.func.delta
    }

    fn check_nu(&self, nu: f64) -> Result<()> {
        if !nu.is_finite() {
            return Err(invalid(format!("1/mu must be finite, got {nu}")));
        }
        let (t_min, t_max) = self.func.t_range();
        if nu >= t_min && nu < t_max {
            return Err(invalid(format!(
                "mu = {} puts 1/mu inside the range of T [{t_min}, {t_max}]",
                1.0 / nu
            )));
        }
        Ok(())
    }

    /// Moments at ν = 1/μ. Errors if any node sits on a pole of g.
    pub fn moments_nu(&self, nu: f64) -> Result<Moments> {
        self.check_nu(nu)?;
        let (mut m0, mut m1, mut m2, mut m3) = (0.0, 0.0, 0.0, 0.0);
        for (&s, &w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            let den = nu - self.func.t_of_s(s);
            if den.abs() <= SINGULAR_EPS {
                return Err(Error::Singularity { y: (s / self.delta()).sqrt(), mu: 1.0 / nu });
            }
            let g = 1.0 / den;
            let wg = w * g;
            m0 += wg;
            m1 += wg * s;
            m2 += wg * g;
            m3 += wg * g * s;
        }
        if let Some(samples) = self.spec.mc_fallback {
            self.cross_check(nu, Moments { m0, m1, m2, m3 }, samples)?;
        }
        Ok(Moments { m0, m1, m2, m3 })
    }

    fn cross_check(&self, nu: f64, q: Moments, samples: usize) -> Result<()> {
        let mc = monte_carlo_moments(self.func, nu, samples, Seed(0x5eed).derive("quadrature-check"));
        let pairs = [(q.m0, mc.mean.m0, mc.stderr.m0), (q.m1, mc.mean.m1, mc.stderr.m1), (q.m2, mc.mean.m2, mc.stderr.m2), (q.m3, mc.mean.m3, mc.stderr.m3)];
        for (quad, monte, se) in pairs {
            let allowed = 10.0 * self.spec.abs_tol + 5.0 * se;
            if (quad - monte).abs() > allowed {
                return Err(Error::Accuracy { quadrature: quad, monte_carlo: monte, allowed });
            }
        }
        Ok(())
    }

    pub fn psi_nu(&self, nu: f64) -> Result<PsiTriple> {
        let m = self.moments_nu(nu)?;
        if m.m0 == 0.0 {
            return Err(Error::Numeric(format!("E[G] vanished at mu = {}", 1.0 / nu)));
        }
        Ok(m.psi(1.0 / nu, self.delta()))
    }

    pub fn psi(&self, mu: f64) -> Result<PsiTriple> {
        if mu == 0.0 {
            return Err(invalid("mu must be nonzero"));
        }
        self.psi_nu(1.0 / mu)
    }

    /// Λ(μ) = 1/μ − ((δ−1)/δ)/E[G].
    pub fn lambda(&self, mu: f64) -> Result<f64> {
        let nu = 1.0 / mu;
        let m = self.moments_nu(nu)?;
        Ok(nu - (self.delta() - 1.0) / self.delta() / m.m0)
    }

    /// F(μ) = 1/μ − 1/E[s G].
    pub fn f_of_mu(&self, mu: f64) -> Result<f64> {
        let nu = 1.0 / mu;
        let m = self.moments_nu(nu)?;
        Ok(nu - 1.0 / m.m1)
    }

    /// Largest admissible μ on the usual branch: 1 if G is integrable there,
    /// otherwise just below 1.
    fn mu_top(&self) -> f64 {
        match self.psi_nu(1.0) {
            Ok(p) if p.psi1.is_finite() && p.psi2.is_finite() && p.psi3.is_finite() => 1.0,
            _ => MU_CEIL,
        }
    }

    /// μ̄: root of ψ₂(μ) = δ/(δ−1) in (0, 1), or 1 when ψ₂ stays below it.
    pub fn mu_bar(&self) -> Result<f64> {
        let r = ratio(self.delta());
        let top = self.mu_top();
        if self.psi(top)?.psi2 <= r {
            return Ok(1.0);
        }
        let lo = MU_FLOOR;
        if self.psi(lo)?.psi2 >= r {
            return Err(Error::Numeric(format!("psi2 already exceeds {r} at mu = {lo}; no bracket for mu_bar")));
        }
        bisect(lo, top, MU_TOL, |mu| Ok(self.psi(mu)?.psi2 - r))
    }

    /// μ̂ on (0, μ̄]: root of ψ₁(μ) = δ/(δ−1). Returns the root and whether the
    /// instance sits on the phase boundary.
    pub fn mu_hat_in(&self, mu_bar: f64) -> Result<(Option<f64>, bool)> {
        let r = ratio(self.delta());
        let hi = if mu_bar >= 1.0 { self.mu_top() } else { mu_bar };
        let at_hi = self.psi(hi)?.psi1 - r;
        let boundary = at_hi.abs() <= BOUNDARY_TOL;
        if at_hi < -BOUNDARY_TOL {
            return Ok((None, boundary));
        }
        if at_hi.abs() <= BOUNDARY_TOL && mu_bar >= 1.0 {
            // ψ₁ meets the target exactly at the end of the admissible interval
            return Ok((Some(mu_bar), boundary));
        }
        let lo = MU_FLOOR;
        if self.psi(lo)?.psi1 - r >= 0.0 {
            return Err(Error::Numeric(format!("psi1 already exceeds {r} at mu = {lo}")));
        }
        let root = bisect(lo, hi, MU_TOL, |mu| Ok(self.psi(mu)?.psi1 - r))?;
        Ok((Some(root), boundary))
    }

    pub fn mu_hat(&self) -> Result<Option<f64>> {
        let mb = self.mu_bar()?;
        Ok(self.mu_hat_in(mb)?.0)
    }

    /// The full prediction at this function's δ.
    pub fn predict(&self) -> Result<AsymptoticPrediction> {
        let delta = self.delta();
        let r = ratio(delta);
        let mu_bar = self.mu_bar()?;
        let (mu_hat, boundary) = self.mu_hat_in(mu_bar)?;
        let base = AsymptoticPrediction {
            delta,
            func: self.func.label(),
            admissible: true,
            mu_bar,
            mu_hat: None,
            rho_sq: 0.0,
            theta_sq: 0.0,
            lambda_at_mu_hat: None,
            positive_phase: false,
            boundary,
            psi_at_mu_hat: None,
        };
        let Some(mu) = mu_hat else { return Ok(base) };
        // at μ = 1 on a singular function, evaluate just inside
        let mu_eval = if mu >= 1.0 { self.mu_top() } else { mu };
        let p = self.psi(mu_eval)?;
        let (rho_sq, theta_sq) = rho_theta(&p, r)?;
        Ok(AsymptoticPrediction {
            mu_hat: Some(mu),
            rho_sq,
            theta_sq,
            lambda_at_mu_hat: Some(self.lambda(mu_eval)?),
            positive_phase: true,
            psi_at_mu_hat: Some(p),
            ..base
        })
    }

    /// Solution of ψ₁ = δ/(δ−1) on the extended branch 1/μ < t_min, giving the
    /// prediction for the smallest eigenvalue of D. Returns (μ̂, Λ(μ̂), θ²).
    pub fn min_branch(&self) -> Result<MinBranch> {
        let t_min = self.func.t_min;
        if !t_min.is_finite() {
            return Err(Error::NotApplicable(format!("{} is unbounded below", self.func.label())));
        }
        let r = ratio(self.delta());
        let objective = |log_d: f64| -> Result<f64> { Ok(self.psi_nu(t_min - log_d.exp())?.psi1 - r) };
        // scan from far below t_min inward, stop at the first crossing
        let steps = 160;
        let (lo_ld, hi_ld) = ((1e-10f64).ln(), (1e6f64).ln());
        let mut prev_ld = hi_ld;
        let mut prev = objective(prev_ld)?;
        let mut bracket = None;
        for k in 1..=steps {
            let ld = hi_ld + (lo_ld - hi_ld) * k as f64 / steps as f64;
            let cur = objective(ld)?;
            if prev.signum() != cur.signum() {
                bracket = Some((ld, prev_ld));
                break;
            }
            prev = cur;
            prev_ld = ld;
        }
        let Some((a, b)) = bracket else {
            return Err(Error::NotApplicable(format!("no solution of psi1 = {r} below t_min for {}", self.func.label())));
        };
        let ld = bisect(a, b, 1e-13, objective)?;
        let nu = t_min - ld.exp();
        let p = self.psi_nu(nu)?;
        let theta_sq = (r - p.psi2) / (p.psi3 * p.psi3 - r * r);
        if !(theta_sq > 0.0) {
            return Err(Error::NotApplicable(format!("min-branch root at 1/mu = {nu} has theta^2 = {theta_sq} <= 0")));
        }
        let m = self.moments_nu(nu)?;
        let delta = self.delta();
        Ok(MinBranch { mu_hat: 1.0 / nu, lambda: nu - (delta - 1.0) / delta / m.m0, theta_sq, psi: p })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinBranch {
    pub mu_hat: f64,
    pub lambda: f64,
    pub theta_sq: f64,
    pub psi: PsiTriple,
}

/// ρ² and θ² from ψ at μ̂, with their algebraic consistency enforced.
fn rho_theta(p: &PsiTriple, r: f64) -> Result<(f64, f64)> {
    let p3sq = p.psi3 * p.psi3;
    let den_rho = p3sq - r * p.psi2;
    let den_theta = p3sq - r * r;
    if den_rho.abs() <= 1e-12 || den_theta.abs() <= 1e-12 {
        return Err(Error::DegeneratePrediction(format!(
            "denominator vanishes at mu = {} (psi3^2 - r psi2 = {den_rho:e}, psi3^2 - r^2 = {den_theta:e})",
            p.mu
        )));
    }
    let rho_sq = (r * r - r * p.psi2) / den_rho;
    let theta_sq = (r - p.psi2) / den_theta;
    let implied = (p.delta - 1.0) / p.delta * rho_sq / (1.0 - rho_sq);
    if (implied - theta_sq).abs() > 1e-9 * theta_sq.abs().max(1.0) {
        return Err(Error::Numeric(format!("rho^2/theta^2 inconsistency: {implied} vs {theta_sq}")));
    }
    Ok((rho_sq, theta_sq))
}

/// Claim-1 style prediction at one δ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticPrediction {
    pub delta: f64,
    pub func: String,
    /// False when T is unbounded above at this δ, so no μ is admissible.
    pub admissible: bool,
    pub mu_bar: f64,
    pub mu_hat: Option<f64>,
    pub rho_sq: f64,
    pub theta_sq: f64,
    pub lambda_at_mu_hat: Option<f64>,
    pub positive_phase: bool,
    /// ψ₁(μ̄) within `BOUNDARY_TOL` of δ/(δ−1).
    pub boundary: bool,
    pub psi_at_mu_hat: Option<PsiTriple>,
}

impl AsymptoticPrediction {
    fn inadmissible(delta: f64, func: String, mu_bar: f64) -> Self {
        AsymptoticPrediction {
            delta,
            func,
            admissible: false,
            mu_bar,
            mu_hat: None,
            rho_sq: 0.0,
            theta_sq: 0.0,
            lambda_at_mu_hat: None,
            positive_phase: false,
            boundary: false,
            psi_at_mu_hat: None,
        }
    }
}

/// ψ₁, ψ₂, ψ₃ of `func` at μ.
pub fn psi(func: &ProcessingFunction, delta: f64, mu: f64, quad: &QuadratureSpec) -> Result<PsiTriple> {
    let bound = rebind(func, delta)?;
    Integrator::new(&bound, quad)?.psi(mu)
}

/// Λ(μ) = 1/μ − ((δ−1)/δ)/E[G].
pub fn lambda_of_mu(func: &ProcessingFunction, delta: f64, mu: f64, quad: &QuadratureSpec) -> Result<f64> {
    let bound = rebind(func, delta)?;
    Integrator::new(&bound, quad)?.lambda(mu)
}

pub fn mu_bar(func: &ProcessingFunction, delta: f64, quad: &QuadratureSpec) -> Result<f64> {
    let bound = rebind(func, delta)?;
    Integrator::new(&bound, quad)?.mu_bar()
}

pub fn mu_hat(func: &ProcessingFunction, delta: f64, quad: &QuadratureSpec) -> Result<Option<f64>> {
    let bound = rebind(func, delta)?;
    Integrator::new(&bound, quad)?.mu_hat()
}

/// δ-free functions can be evaluated at any δ; the others must match their bound δ.
fn rebind(func: &ProcessingFunction, delta: f64) -> Result<ProcessingFunction> {
    if !(delta > 1.0 && delta.is_finite()) {
        return Err(invalid(format!("delta must exceed 1, got {delta}")));
    }
    if (func.delta - delta).abs() <= 1e-12 * delta {
        return Ok(func.clone());
    }
    if !func.delta_free {
        return Err(invalid(format!("{} was built for delta = {}, not {delta}", func.label(), func.delta)));
    }
    Ok(ProcessingFunction { delta, ..func.clone() })
}

/// ρ²_T(δ) for a function spec, normalizing it at δ first. Functions that are
/// unbounded above at δ yield an inadmissible, zero prediction.
pub fn rho_sq(spec: &FunctionSpec, delta: f64, quad: &QuadratureSpec) -> Result<AsymptoticPrediction> {
    if !(delta > 1.0 && delta.is_finite()) {
        return Err(invalid(format!("delta must exceed 1, got {delta}")));
    }
    let func = match ProcessingFunction::new(spec.clone(), delta) {
        Ok(f) => f,
        Err(Error::InvalidParameter(msg)) if msg.contains("unbounded above") => {
            return Ok(AsymptoticPrediction::inadmissible(delta, spec.label(), f64::NAN));
        }
        Err(e) => return Err(e),
    };
    Integrator::new(&func, quad)?.predict()
}

/// Outcome of a threshold search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub delta: f64,
    pub found: bool,
}

/// Smallest δ in [1 + 1e-3, delta_max] with a positive phase, by bisection.
pub fn delta_threshold(spec: &FunctionSpec, quad: &QuadratureSpec, delta_max: f64) -> Result<Threshold> {
    let lo = 1.0 + 1e-3;
    if !(delta_max > lo) {
        return Err(invalid(format!("delta_max must exceed {lo}")));
    }
    let positive = |d: f64| -> Result<bool> { Ok(rho_sq(spec, d, quad)?.positive_phase) };
    if !positive(delta_max)? {
        return Ok(Threshold { delta: delta_max, found: false });
    }
    if positive(lo)? {
        return Ok(Threshold { delta: lo, found: true });
    }
    let (mut a, mut b) = (lo, delta_max);
    while b - a > DELTA_TOL {
        let mid = 0.5 * (a + b);
        if positive(mid)? {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(Threshold { delta: 0.5 * (a + b), found: true })
}

/// ρ²⋆ = (1 − μ̂)/(1 − μ̂/δ) for the optimal function 1 − 1/s, or 0 below δ = 2.
pub fn rho_star_closed_form(delta: f64, quad: &QuadratureSpec) -> Result<f64> {
    let func = ProcessingFunction::new(FunctionSpec::Star, delta)?;
    match Integrator::new(&func, quad)?.mu_hat()? {
        Some(mu) => Ok((1.0 - mu) / (1.0 - mu / delta)),
        None => Ok(0.0),
    }
}

/// (δ, ρ²⋆(δ)) along a grid.
pub fn rho_star_curve(delta_grid: &[f64], quad: &QuadratureSpec) -> Result<Vec<(f64, f64)>> {
    delta_grid.iter().map(|&d| Ok((d, rho_star_closed_form(d, quad)?))).collect()
}

/// Monte Carlo estimates of the raw moments and their standard errors.
#[derive(Clone, Copy, Debug)]
pub struct McMoments {
    pub mean: Moments,
    pub stderr: Moments,
}

pub fn monte_carlo_moments(func: &ProcessingFunction, nu: f64, samples: usize, seed: Seed) -> McMoments {
    let mut rng = make_rng(seed);
    let mut sum = [0.0f64; 4];
    let mut sum_sq = [0.0f64; 4];
    for _ in 0..samples {
        let s: f64 = Exp1.sample(&mut rng);
        let g = func.g_of_s(s, nu);
        let v = [g, s * g, g * g, s * g * g];
        for k in 0..4 {
            sum[k] += v[k];
            sum_sq[k] += v[k] * v[k];
        }
    }
    let n = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|x| x / n).collect();
    let se: Vec<f64> = (0..4).map(|k| ((sum_sq[k] / n - mean[k] * mean[k]).max(0.0) / n).sqrt()).collect();
    McMoments {
        mean: Moments { m0: mean[0], m1: mean[1], m2: mean[2], m3: mean[3] },
        stderr: Moments { m0: se[0], m1: se[1], m2: se[2], m3: se[3] },
    }
}

/// Bisection for a sign change of `f` on [a, b].
pub(crate) fn bisect(mut a: f64, mut b: f64, tol: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let fa = f(a)?;
    let fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Numeric(format!("bisection bracket [{a}, {b}] has no sign change (f = {fa}, {fb})")));
    }
    let neg_at_a = fa < 0.0;
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        let mid = 0.5 * (a + b);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == neg_at_a {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn bound(spec: FunctionSpec, delta: f64) -> ProcessingFunction {
        ProcessingFunction::new(spec, delta).unwrap()
    }

    #[test]
    fn constant_t_gives_unit_psis() {
        for c in [-2.0, 0.0, 0.5] {
            let f = ProcessingFunction::unnormalized(FunctionSpec::Custom { table: vec![(0.0, c)], csv: None }, 3.0).unwrap();
            for mu in [0.1, 0.5, 0.9] {
                let p = psi(&f, 3.0, mu, &quad()).unwrap();
                assert!((p.psi1 - 1.0).abs() < 1e-10);
                assert!((p.psi2 - 1.0).abs() < 1e-10);
                assert!((p.psi3 - 1.0).abs() < 1e-10);
            }
            assert_eq!(mu_bar(&f, 3.0, &quad()).unwrap(), 1.0);
        }
    }

    #[test]
    fn zero_t_lambda() {
        let f = ProcessingFunction::unnormalized(FunctionSpec::Custom { table: vec![(0.0, 0.0)], csv: None }, 3.0).unwrap();
        for mu in [0.2, 0.7] {
            let l = lambda_of_mu(&f, 3.0, mu, &quad()).unwrap();
            assert!((l - 1.0 / (3.0 * mu)).abs() < 1e-10);
        }
    }

    #[test]
    fn star_limits() {
        let f = bound(FunctionSpec::Star, 3.0);
        let small = psi(&f, 3.0, 1e-6, &quad()).unwrap();
        assert!((small.psi1 - 1.0).abs() < 1e-3);
        for d in [1.5, 3.0, 7.0] {
            let p = psi(&f, d, 1.0, &quad()).unwrap();
            assert!((p.psi1 - 2.0).abs() < 1e-6, "{p:?}");
            assert!((p.psi2 - 2.0).abs() < 1e-6, "{p:?}");
        }
    }

    #[test]
    fn star_mu_bar_interior_and_mu_hat_absent_below_two() {
        let f = bound(FunctionSpec::Star, 3.0);
        let mb = mu_bar(&f, 3.0, &quad()).unwrap();
        assert!(mb > 0.0 && mb < 1.0);
        let p = psi(&f, 3.0, mb, &quad()).unwrap();
        assert!((p.psi2 - 1.5).abs() < 1e-8);
        assert!(mu_hat(&f, 1.5, &quad()).unwrap().is_none());
        assert!(mu_hat(&f, 3.0, &quad()).unwrap().is_some());
    }

    #[test]
    fn alt_weak_remark_formula() {
        for d in [3.0, 4.0, 6.0] {
            let pred = rho_sq(&FunctionSpec::AltWeak, d, &quad()).unwrap();
            let want = (d * d - 2.0 * d) / (d * d - 2.0);
            assert!((pred.mu_hat.unwrap() - 1.0).abs() < 1e-6, "{pred:?}");
            assert!((pred.rho_sq - want).abs() < 1e-6, "{d}: {} vs {want}", pred.rho_sq);
        }
    }

    #[test]
    fn alt_weak_inadmissible_below_two() {
        let pred = rho_sq(&FunctionSpec::AltWeak, 1.99, &quad()).unwrap();
        assert!(!pred.admissible && !pred.positive_phase && pred.rho_sq == 0.0);
        assert!(rho_sq(&FunctionSpec::AltWeak, 2.01, &quad()).unwrap().positive_phase);
    }

    #[test]
    fn star_closed_form_matches_general_formula() {
        for d in [2.5, 3.0, 4.0, 5.0] {
            let general = rho_sq(&FunctionSpec::Star, d, &quad()).unwrap().rho_sq;
            let closed = rho_star_closed_form(d, &quad()).unwrap();
            assert!((general - closed).abs() < 1e-8, "{d}: {general} vs {closed}");
        }
    }

    #[test]
    fn theta_consistency() {
        for spec in [FunctionSpec::Star, FunctionSpec::Mm, FunctionSpec::Subset { c1: 1.5 }, FunctionSpec::Trim { c2: 2.0 }] {
            let p = rho_sq(&spec, 4.0, &quad()).unwrap();
            assert!(p.positive_phase, "{spec:?}");
            let implied = 0.75 * p.rho_sq / (1.0 - p.rho_sq);
            assert!((implied - p.theta_sq).abs() < 1e-9);
            let psi = p.psi_at_mu_hat.unwrap();
            assert!(((4.0 - 1.0) * (psi.psi1 - 1.0) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn star_threshold_is_two() {
        let t = delta_threshold(&FunctionSpec::Star, &quad(), 10.0).unwrap();
        assert!(t.found);
        assert!((t.delta - 2.0).abs() < 1e-3, "{t:?}");
    }

    #[test]
    fn narrow_trim_has_no_transition() {
        let t = delta_threshold(&FunctionSpec::Trim { c2: 0.8 }, &quad(), 50.0).unwrap();
        assert!(!t.found);
        assert_eq!(t.delta, 50.0);
    }

    #[test]
    fn star_curve_monotone() {
        let grid: Vec<f64> = (0..=8).map(|k| 2.1 + 0.4875 * k as f64).collect();
        let curve = rho_star_curve(&grid, &quad()).unwrap();
        assert!(curve.windows(2).all(|w| w[1].1 > w[0].1));
        assert_eq!(rho_star_curve(&[1.5], &quad()).unwrap()[0].1, 0.0);
    }

    #[test]
    fn forbidden_mu_rejected() {
        let f = bound(FunctionSpec::Mm, 4.0);
        // 1/μ = 0.5 lies inside [t_min, 1] = [−1, 1]
        assert!(psi(&f, 4.0, 2.0, &quad()).is_err());
        let sub = bound(FunctionSpec::Subset { c1: 1.5 }, 4.0);
        assert!(matches!(psi(&sub, 4.0, 1.0, &quad()), Err(Error::Singularity { .. })));
    }

    #[test]
    fn quadrature_agrees_with_monte_carlo() {
        let q = QuadratureSpec { mc_fallback: Some(200_000), ..quad() };
        for spec in [FunctionSpec::Star, FunctionSpec::Subset { c1: 1.5 }, FunctionSpec::Mm, FunctionSpec::StarRegularized { kappa: 0.01 }] {
            let f = bound(spec, 3.0);
            for mu in [0.2, 0.6, 0.9] {
                psi(&f, 3.0, mu, &q).unwrap();
            }
        }
    }

    #[test]
    fn rebinding_delta_dependent_kind_is_rejected() {
        let f = bound(FunctionSpec::Mm, 4.0);
        assert!(psi(&f, 3.0, 0.5, &quad()).is_err());
    }
}
