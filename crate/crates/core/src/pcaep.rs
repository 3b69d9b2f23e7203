//! PCA-EP: the linear iteration z ← (δAAᴴ − I)(G/Ḡ − I) z, its state-evolution
//! predictor and the stationary-point check.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{bisect, Integrator, PsiTriple};
use crate::error::{invalid, Error, Result};
use crate::preprocessing::{FunctionSpec, ProcessingFunction, SINGULAR_EPS};
use crate::quadrature::QuadratureSpec;
use crate::rng::{make_rng, sample_complex_gaussian, RandomStream, Seed};
use crate::sensing::{SensingOperator, SensingSpec};
use crate::signal::{make_signal, SignalInstance};
use crate::spectral::{apply_d, WeightDiagonal};
use crate::vector::{cosine_similarity_sq, inner, norm, norm_sq, rescale_to, ComplexVector};

/// Per-measurement gains G(yᵢ, μ) and their empirical mean Ḡ.
#[derive(Clone, Debug, PartialEq)]
pub struct Gains {
    pub mu: f64,
    pub g: Vec<f64>,
    pub g_bar: f64,
}

impl Gains {
    pub fn new(func: &ProcessingFunction, signal: &SignalInstance, mu: f64) -> Result<Self> {
        if mu == 0.0 || !mu.is_finite() {
            return Err(invalid(format!("mu must be finite and nonzero, got {mu}")));
        }
        let delta = signal.m() as f64 / signal.n() as f64;
        let nu = 1.0 / mu;
        let mut bad = Vec::new();
        let mut g = Vec::with_capacity(signal.m());
        for (i, &y) in signal.y.iter().enumerate() {
            let den = nu - func.eval_t(y, delta)?;
            if den.abs() <= SINGULAR_EPS {
                bad.push(i);
            }
            g.push(1.0 / den);
        }
        if !bad.is_empty() {
            return Err(Error::SingularWeights { indices: bad });
        }
        let g_bar = g.iter().sum::<f64>() / g.len() as f64;
        if g_bar == 0.0 || !g_bar.is_finite() {
            return Err(Error::Numeric(format!("empirical mean of G is {g_bar}")));
        }
        Ok(Gains { mu, g, g_bar })
    }

    /// Diagonal of G/Ḡ − I; sums to zero up to rounding.
    pub fn centered(&self) -> Vec<f64> {
        self.g.iter().map(|g| g / self.g_bar - 1.0).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpState {
    pub z: ComplexVector,
    pub t: usize,
    pub mu: f64,
    pub g_bar: f64,
    centered: Vec<f64>,
}

/// z⁰ = α₀ z⋆ + σ₀ w with w ~ CN(0, I/δ) independent of z⋆.
pub fn ep_init(
    func: &ProcessingFunction,
    mu: f64,
    signal: &SignalInstance,
    alpha0: Complex64,
    sigma0: f64,
    rng: &mut RandomStream,
) -> Result<EpState> {
    if !(sigma0 >= 0.0 && sigma0.is_finite()) {
        return Err(invalid(format!("sigma0 must be finite and non-negative, got {sigma0}")));
    }
    let gains = Gains::new(func, signal, mu)?;
    let delta = signal.m() as f64 / signal.n() as f64;
    let z = if sigma0 > 0.0 {
        let w = sample_complex_gaussian(rng, signal.m(), 1.0 / delta)?;
        signal.z_star.iter().zip(&w).map(|(zs, wi)| alpha0 * zs + wi * sigma0).collect()
    } else {
        signal.z_star.iter().map(|zs| alpha0 * zs).collect()
    };
    Ok(EpState { z, t: 0, mu, g_bar: gains.g_bar, centered: gains.centered() })
}

impl EpState {
    /// State with an explicit iterate, for probing the linear map.
    pub fn from_parts(z: ComplexVector, gains: &Gains) -> Self {
        EpState { z, t: 0, mu: gains.mu, g_bar: gains.g_bar, centered: gains.centered() }
    }

    pub fn centered_gains(&self) -> &[f64] {
        &self.centered
    }
}

/// Applies E(μ) = (δAAᴴ − I)(G/Ḡ − I) to an arbitrary vector.
pub fn apply_e(op: &SensingOperator, centered: &[f64], z: &[Complex64]) -> Result<ComplexVector> {
    if centered.len() != op.m() || z.len() != op.m() {
        return Err(invalid("E(mu) operand length does not match m"));
    }
    let delta = op.delta();
    let p: ComplexVector = z.iter().zip(centered).map(|(zi, c)| zi * c).collect();
    let back = op.apply(&op.apply_adjoint(&p)?)?;
    Ok(back.iter().zip(&p).map(|(b, pi)| b * delta - pi).collect())
}

pub fn ep_step(op: &SensingOperator, state: &EpState) -> Result<EpState> {
    let z = apply_e(op, &state.centered, &state.z)?;
    Ok(EpState { z, t: state.t + 1, ..state.clone() })
}

/// x = √n · Aᴴz/‖Aᴴz‖.
pub fn ep_extract_x(op: &SensingOperator, z: &[Complex64]) -> Result<ComplexVector> {
    let mut x = op.apply_adjoint(z)?;
    let scale = norm(z).max(f64::MIN_POSITIVE);
    if norm(&x) <= 1e-12 * scale {
        return Err(Error::DegenerateState("iterate has no component in the range of A".into()));
    }
    rescale_to(&mut x, op.n() as f64);
    Ok(x)
}

/// State-evolution state (α_t, σ²_t) plus the running noise covariance
/// E[(W̃ᵗ)* W̃ᵗ⁺¹].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeState {
    pub alpha: Complex64,
    pub sigma_sq: f64,
    pub w_corr: f64,
    pub t: usize,
}

/// α' = (δ−1)α(ψ₁−1), σ²' = (δ−1)[|α|²(ψ₃²−ψ₁²) + σ²(ψ₂−1)]; the noise
/// covariance is carried forward with `noise_corr_step`.
pub fn se_step(psi: &PsiTriple, delta: f64, state: &SeState) -> SeState {
    let k = delta - 1.0;
    let alpha = state.alpha * (k * (psi.psi1 - 1.0));
    let a2 = state.alpha.norm_sqr();
    let sigma_sq = k * (a2 * (psi.psi3 * psi.psi3 - psi.psi1 * psi.psi1) + state.sigma_sq * (psi.psi2 - 1.0));
    let w_corr = noise_corr_step(psi, delta, state.alpha, alpha, state.w_corr);
    SeState { alpha, sigma_sq: sigma_sq.max(0.0), w_corr, t: state.t + 1 }
}

/// Predicted P²(x⋆, xᵗ) for t ≥ 1, where the noise lies in the range of δAAᴴ − I.
pub fn se_cosine(state: &SeState, delta: f64) -> Result<f64> {
    cosine_from(state.alpha.norm_sqr(), state.sigma_sq, (delta - 1.0) / delta)
}

/// Predicted P²(x⋆, x⁰) for an initial iterate with white noise.
pub fn se_cosine_initial(alpha0: Complex64, sigma0_sq: f64, delta: f64) -> Result<f64> {
    cosine_from(alpha0.norm_sqr(), sigma0_sq, 1.0 / delta)
}

fn cosine_from(a2: f64, sigma_sq: f64, factor: f64) -> Result<f64> {
    let den = a2 + factor * sigma_sq;
    if den <= 0.0 {
        return Err(Error::DegenerateState("alpha and sigma are both zero".into()));
    }
    Ok(a2 / den)
}

/// E[(W̃ᵗ⁺¹)* W̃ᵗ⁺²] from E[(W̃ᵗ)* W̃ᵗ⁺¹].
pub fn noise_corr_step(psi: &PsiTriple, delta: f64, alpha_t: Complex64, alpha_t1: Complex64, prev: f64) -> f64 {
    let signal = (alpha_t.conj() * alpha_t1).re / delta * (psi.psi3 * psi.psi3 - psi.psi1 * psi.psi1);
    (delta - 1.0) * (signal + (psi.psi2 - 1.0) * prev)
}

/// Normalized noise correlation δ·c/(σ_t σ_{t+1}).
pub fn normalized_corr(c: f64, sigma_sq_t: f64, sigma_sq_t1: f64, delta: f64) -> f64 {
    let den = (sigma_sq_t * sigma_sq_t1).sqrt();
    if den > 0.0 {
        delta * c / den
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuChoice {
    /// The asymptotic μ̂ of the processing function.
    Hat,
    Explicit(f64),
}

/// One row of a tracked run; column names follow the CSV schema.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackedRecord {
    pub t: usize,
    pub alpha_emp_re: f64,
    pub alpha_emp_im: f64,
    pub alpha_se_re: f64,
    pub alpha_se_im: f64,
    pub sigma2_emp: f64,
    pub sigma2_se: f64,
    pub p2_emp: f64,
    pub p2_se: f64,
    pub wcorr_emp: f64,
    pub wcorr_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackedRun {
    pub mu: f64,
    pub delta_realized: f64,
    pub psi: PsiTriple,
    pub records: Vec<TrackedRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingSetup {
    pub sensing: SensingSpec,
    pub func: FunctionSpec,
    pub delta: f64,
    pub mu: MuChoice,
    pub alpha0: f64,
    pub sigma0_sq: f64,
    pub t_max: usize,
}

impl Default for TrackingSetup {
    /// Partial DFT, n = 16384, δ = 3, regularized 1 − 1/s at μ̂, α₀ = 0.2, σ₀² = 1.
    fn default() -> Self {
        TrackingSetup {
            sensing: SensingSpec { kind: crate::sensing::SensingKind::PartialDft, n: 16384 },
            func: FunctionSpec::StarRegularized { kappa: 0.01 },
            delta: 3.0,
            mu: MuChoice::Hat,
            alpha0: 0.2,
            sigma0_sq: 1.0,
            t_max: 15,
        }
    }
}

/// Runs PCA-EP for `t_max` steps (plus one for the last noise correlation)
/// and pairs the empirical overlap statistics with their SE predictions.
pub fn run_tracked(setup: &TrackingSetup, quad: &QuadratureSpec, seed: Seed) -> Result<TrackedRun> {
    let desc = setup.sensing.descriptor(setup.delta, seed.derive("sensing"))?;
    let op = desc.build()?;
    let delta = op.delta();
    let func = ProcessingFunction::new(setup.func.clone(), delta)?;
    let integ = Integrator::new(&func, quad)?;
    let mu = match setup.mu {
        MuChoice::Explicit(mu) => mu,
        MuChoice::Hat => integ
            .mu_hat()?
            .ok_or_else(|| Error::NotApplicable(format!("{} has no mu_hat at delta = {delta}", func.label())))?,
    };
    let psi = integ.psi(mu)?;
    let signal = make_signal(&op, &mut make_rng(seed.derive("signal")))?;
    let alpha0 = Complex64::new(setup.alpha0, 0.0);
    let mut state = ep_init(&func, mu, &signal, alpha0, setup.sigma0_sq.sqrt(), &mut make_rng(seed.derive("ep-init")))?;

    let zs_sq = norm_sq(&signal.z_star);
    let overlap = |z: &[Complex64]| -> (Complex64, ComplexVector) {
        let a = inner(&signal.z_star, z) / zs_sq;
        let w: ComplexVector = z.iter().zip(&signal.z_star).map(|(zi, s)| zi - a * s).collect();
        (a, w)
    };

    let mut se = SeState { alpha: alpha0, sigma_sq: setup.sigma0_sq, w_corr: 0.0, t: 0 };
    let mut records = Vec::with_capacity(setup.t_max + 1);
    let (mut a_emp, mut w_emp) = overlap(&state.z);
    for t in 0..=setup.t_max {
        let next_state = ep_step(&op, &state)?;
        let (a_next, w_next) = overlap(&next_state.z);
        let next_se = se_step(&psi, delta, &se);

        let x = ep_extract_x(&op, &state.z)?;
        let p2_se = if t == 0 { se_cosine_initial(alpha0, setup.sigma0_sq, delta)? } else { se_cosine(&se, delta)? };
        let wcorr_emp = inner(&w_emp, &w_next).re / (norm(&w_emp) * norm(&w_next)).max(f64::MIN_POSITIVE);
        records.push(TrackedRecord {
            t,
            alpha_emp_re: a_emp.re,
            alpha_emp_im: a_emp.im,
            alpha_se_re: se.alpha.re,
            alpha_se_im: se.alpha.im,
            sigma2_emp: norm_sq(&w_emp) / zs_sq,
            sigma2_se: se.sigma_sq,
            p2_emp: cosine_similarity_sq(&signal.x_star, &x)?,
            p2_se,
            wcorr_emp,
            wcorr_se: normalized_corr(se.w_corr, se.sigma_sq, next_se.sigma_sq, delta),
        });
        state = next_state;
        se = next_se;
        a_emp = a_next;
        w_emp = w_next;
    }
    Ok(TrackedRun { mu, delta_realized: delta, psi, records })
}

/// Residual of the eigen-pair that a PCA-EP stationary point induces on D.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointCheck {
    pub eigen_residual: f64,
    /// 1/μ − ((δ−1)/δ)/Ḡ with the empirical Ḡ.
    pub lambda_pred: f64,
}

pub fn fixed_point_check(
    op: &SensingOperator,
    func: &ProcessingFunction,
    signal: &SignalInstance,
    mu: f64,
    z_inf: &[Complex64],
) -> Result<FixedPointCheck> {
    let gains = Gains::new(func, signal, mu)?;
    let delta = op.delta();
    let lambda_pred = 1.0 / mu - (delta - 1.0) / delta / gains.g_bar;
    let x = ep_extract_x(op, z_inf)?;
    let w = WeightDiagonal { t_values: signal.y.iter().map(|&y| func.eval_t(y, delta)).collect::<Result<_>>()? };
    let dx = apply_d(op, &w, &x)?;
    let resid: f64 = dx.iter().zip(&x).map(|(a, b)| (a - b * lambda_pred).norm_sqr()).sum::<f64>().sqrt();
    Ok(FixedPointCheck { eigen_residual: resid / norm(&x), lambda_pred })
}

/// The μ on (0, 1/max T) at which the empirical eigenvalue map
/// 1/μ − ((δ−1)/δ)/Ḡ(μ) equals `lambda`; at this μ the matrix E(μ) has an
/// eigenvalue exactly 1. The map is searched on its increasing branch, to the
/// right of its minimum in ν = 1/μ.
pub fn mu_for_eigenvalue(func: &ProcessingFunction, signal: &SignalInstance, lambda: f64) -> Result<f64> {
    let delta = signal.m() as f64 / signal.n() as f64;
    let t_max = signal.y.iter().map(|&y| func.eval_t(y, delta)).collect::<Result<Vec<_>>>()?.into_iter().fold(f64::MIN, f64::max);
    let k = (delta - 1.0) / delta;
    let gap = |log_d: f64| -> Result<f64> {
        let nu = t_max + log_d.exp();
        let g_bar = Gains::new(func, signal, 1.0 / nu)?.g_bar;
        Ok(nu - k / g_bar - lambda)
    };
    let (lo, hi) = ((1e-12f64).ln(), (1e8f64).ln());
    const STEPS: usize = 400;
    let mut best = (lo, f64::INFINITY);
    for i in 0..=STEPS {
        let x = lo + (hi - lo) * i as f64 / STEPS as f64;
        let v = gap(x)?;
        if v < best.1 {
            best = (x, v);
        }
    }
    if best.1 > 0.0 {
        return Err(Error::Numeric(format!("eigenvalue {lambda} lies below the empirical map minimum {}", best.1 + lambda)));
    }
    let log_d = bisect(best.0, hi, 1e-14, gap)?;
    Ok(1.0 / (t_max + log_d.exp()))
}
