//! Processing functions T and the weight G(y, μ) = 1/(1/μ − T(y)).
//!
//! Every shipped T is written in the variable s = δy², which is Exp(1)
//! distributed under the measurement model. Kinds whose formula also carries a
//! standalone δ (MM, AltWeak, ShiftedMM) are bound to one δ at construction.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Floor applied to s before evaluating the unregularized 1 − 1/s.
pub const STAR_S_FLOOR: f64 = 1e-12;

/// Denominators 1/μ − T at or below this magnitude are treated as singular.
pub const SINGULAR_EPS: f64 = 1e-14;

/// A processing function as written in configs: kind plus raw parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionSpec {
    /// s·1{s < c₂²}.
    Trim { c2: f64 },
    /// 1{s > c₁}.
    Subset { c1: f64 },
    /// 1 − √δ/(s + √δ − 1).
    Mm,
    /// 1 − 1/s.
    Star,
    /// 1 − 1/(s + κ).
    StarRegularized {
        #[serde(default = "default_kappa")]
        kappa: f64,
    },
    /// 1 − 1/(s + δ − 2).
    AltWeak,
    /// 3 − T_MM, i.e. 2 + √δ/(s + √δ − 1).
    ShiftedMm,
    /// Piecewise-linear interpolation of an (s, T) table, constant beyond its ends.
    Custom {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        table: Vec<(f64, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        csv: Option<PathBuf>,
    },
}

fn default_kappa() -> f64 {
    0.01
}

impl FunctionSpec {
    pub fn label(&self) -> String {
        match self {
            FunctionSpec::Trim { c2 } => format!("trim(c2={c2})"),
            FunctionSpec::Subset { c1 } => format!("subset(c1={c1})"),
            FunctionSpec::Mm => "mm".into(),
            FunctionSpec::Star => "star".into(),
            FunctionSpec::StarRegularized { kappa } => format!("star_reg(kappa={kappa})"),
            FunctionSpec::AltWeak => "alt_weak".into(),
            FunctionSpec::ShiftedMm => "shifted_mm".into(),
            FunctionSpec::Custom { .. } => "custom".into(),
        }
    }

    /// True when T depends on (y, δ) only through s = δy².
    pub fn is_delta_free(&self) -> bool {
        !matches!(self, FunctionSpec::Mm | FunctionSpec::AltWeak | FunctionSpec::ShiftedMm)
    }

    /// Loads a Custom table from its CSV file (columns `s,T`), if one is referenced.
    pub fn resolve(self) -> Result<Self> {
        match self {
            FunctionSpec::Custom { table, csv: Some(path) } => {
                if !table.is_empty() {
                    return Err(Error::Config("custom function: give either `table` or `csv`, not both".into()));
                }
                let mut reader = csv::Reader::from_path(&path)?;
                let mut rows = Vec::new();
                for rec in reader.deserialize::<(f64, f64)>() {
                    rows.push(rec?);
                }
                Ok(FunctionSpec::Custom { table: rows, csv: None })
            }
            other => Ok(other),
        }
    }

    /// Un-normalized T at s, with δ for the kinds that embed it.
    pub fn raw(&self, s: f64, delta: f64) -> f64 {
        match self {
            FunctionSpec::Trim { c2 } => {
                if s < c2 * c2 {
                    s
                } else {
                    0.0
                }
            }
            FunctionSpec::Subset { c1 } => {
                if s > *c1 {
                    1.0
                } else {
                    0.0
                }
            }
            FunctionSpec::Mm => {
                let r = delta.sqrt();
                1.0 - r / (s + r - 1.0)
            }
            FunctionSpec::Star => 1.0 - 1.0 / s.max(STAR_S_FLOOR),
            FunctionSpec::StarRegularized { kappa } => 1.0 - 1.0 / (s + kappa),
            FunctionSpec::AltWeak => 1.0 - 1.0 / (s + delta - 2.0),
            FunctionSpec::ShiftedMm => {
                let r = delta.sqrt();
                2.0 + r / (s + r - 1.0)
            }
            FunctionSpec::Custom { table, .. } => interpolate(table, s),
        }
    }

    /// Exact (inf, sup) of the raw function over s ≥ 0. `None` for an unbounded side.
    fn raw_bounds(&self, delta: f64) -> (Option<f64>, Option<f64>) {
        match self {
            FunctionSpec::Trim { c2 } => (Some(0.0), Some(c2 * c2)),
            FunctionSpec::Subset { .. } => (Some(0.0), Some(1.0)),
            FunctionSpec::Mm => {
                let r = delta.sqrt();
                (Some(1.0 - r / (r - 1.0)), Some(1.0))
            }
            FunctionSpec::Star => (None, Some(1.0)),
            FunctionSpec::StarRegularized { kappa } => (Some(1.0 - 1.0 / kappa), Some(1.0)),
            FunctionSpec::AltWeak => {
                if delta > 2.0 {
                    (Some(1.0 - 1.0 / (delta - 2.0)), Some(1.0))
                } else if delta == 2.0 {
                    (None, Some(1.0))
                } else {
                    (None, None)
                }
            }
            FunctionSpec::ShiftedMm => {
                let r = delta.sqrt();
                (Some(2.0), Some(2.0 + r / (r - 1.0)))
            }
            FunctionSpec::Custom { table, .. } => {
                let lo = table.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                let hi = table.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
                (Some(lo), Some(hi))
            }
        }
    }

    /// Locations in s where T is discontinuous or has a kink.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            FunctionSpec::Trim { c2 } => vec![c2 * c2],
            FunctionSpec::Subset { c1 } => vec![*c1],
            FunctionSpec::Custom { table, .. } => table.iter().map(|p| p.0).filter(|s| *s > 0.0).collect(),
            _ => Vec::new(),
        }
    }

    fn validate(&self, delta: f64) -> Result<()> {
        if !(delta > 1.0 && delta.is_finite()) {
            return Err(invalid(format!("delta must exceed 1, got {delta}")));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match self {
            FunctionSpec::Trim { c2 } => positive("c2", *c2),
            FunctionSpec::Subset { c1 } => positive("c1", *c1),
            FunctionSpec::StarRegularized { kappa } => positive("kappa", *kappa),
            FunctionSpec::Custom { table, csv } => {
                if csv.is_some() && table.is_empty() {
                    return Err(invalid("custom function table not loaded; call resolve() first"));
                }
                if table.is_empty() {
                    return Err(invalid("custom function needs at least one (s, T) row"));
                }
                if table.iter().any(|(s, t)| !s.is_finite() || !t.is_finite() || *s < 0.0) {
                    return Err(invalid("custom table entries must be finite with s >= 0"));
                }
                if table.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(invalid("custom table s values must be strictly increasing"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn interpolate(table: &[(f64, f64)], s: f64) -> f64 {
    let first = table[0];
    if s <= first.0 {
        return first.1;
    }
    let idx = table.partition_point(|p| p.0 < s);
    if idx >= table.len() {
        return table[table.len() - 1].1;
    }
    let (a, b) = (table[idx - 1], table[idx]);
    a.1 + (b.1 - a.1) * (s - a.0) / (b.0 - a.0)
}

/// Affine map T̂ = (C + T)/(C + T_max) bringing the supremum to 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub c: f64,
    pub t_max_raw: f64,
}

impl Normalization {
    pub fn from_sup(t_max_raw: f64) -> Self {
        let c = if t_max_raw > 0.0 { 0.0 } else { 1.0 - t_max_raw };
        Normalization { c, t_max_raw }
    }

    pub fn apply(&self, t: f64) -> f64 {
        (self.c + t) / (self.c + self.t_max_raw)
    }
}

/// A processing function bound to one δ and normalized so that sup T = 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessingFunction {
    pub spec: FunctionSpec,
    pub delta: f64,
    pub normalization: Normalization,
    /// Infimum of the normalized T (−∞ when unbounded below).
    pub t_min: f64,
    pub delta_free: bool,
}

impl ProcessingFunction {
    /// Normalizes with the exact supremum of the raw function.
    pub fn new(spec: FunctionSpec, delta: f64) -> Result<Self> {
        spec.validate(delta)?;
        let (lo, hi) = spec.raw_bounds(delta);
        let hi = hi.ok_or_else(|| invalid(format!("{} is unbounded above at delta = {delta}", spec.label())))?;
        Ok(Self::with_normalization(spec, delta, Normalization::from_sup(hi), lo))
    }

    /// Identity normalization, for analysing a raw T whose supremum is not 1.
    pub fn unnormalized(spec: FunctionSpec, delta: f64) -> Result<Self> {
        spec.validate(delta)?;
        let lo = spec.raw_bounds(delta).0;
        Ok(Self::with_normalization(spec, delta, Normalization { c: 0.0, t_max_raw: 1.0 }, lo))
    }

    fn with_normalization(spec: FunctionSpec, delta: f64, normalization: Normalization, raw_lo: Option<f64>) -> Self {
        let t_min = raw_lo.map_or(f64::NEG_INFINITY, |lo| normalization.apply(lo));
        let delta_free = spec.is_delta_free();
        ProcessingFunction { spec, delta, normalization, t_min, delta_free }
    }

    /// Normalized T as a function of s = δy².
    #[inline]
    pub fn t_of_s(&self, s: f64) -> f64 {
        self.normalization.apply(self.spec.raw(s, self.delta))
    }

    /// Normalized T(y). For δ-embedding kinds `delta` must equal the bound δ.
    pub fn eval_t(&self, y: f64, delta: f64) -> Result<f64> {
        if !(y >= 0.0 && y.is_finite()) {
            return Err(invalid(format!("y must be finite and non-negative, got {y}")));
        }
        self.check_delta(delta)?;
        Ok(self.t_of_s(delta * y * y))
    }

    fn check_delta(&self, delta: f64) -> Result<()> {
        if !self.delta_free && (delta - self.delta).abs() > 1e-12 * self.delta {
            return Err(invalid(format!(
                "{} was built for delta = {}, evaluated at {delta}",
                self.spec.label(),
                self.delta
            )));
        }
        Ok(())
    }

    /// G(y, μ) = 1/(1/μ − T(y)).
    pub fn eval_g(&self, y: f64, mu: f64, delta: f64) -> Result<f64> {
        if mu == 0.0 || !mu.is_finite() {
            return Err(invalid(format!("mu must be finite and nonzero, got {mu}")));
        }
        let t = self.eval_t(y, delta)?;
        let den = 1.0 / mu - t;
        if den.abs() <= SINGULAR_EPS {
            return Err(Error::Singularity { y, mu });
        }
        Ok(1.0 / den)
    }

    /// 1/(ν − T(s)) with ν = 1/μ; the parametrization used by the integrators.
    #[inline]
    pub fn g_of_s(&self, s: f64, nu: f64) -> f64 {
        1.0 / (nu - self.t_of_s(s))
    }

    /// (t_min, t_max) of the normalized function.
    pub fn t_range(&self) -> (f64, f64) {
        (self.t_min, 1.0)
    }

    /// Jump or kink locations in s.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.spec.breakpoints()
    }

    pub fn label(&self) -> String {
        self.spec.label()
    }
}

/// (t_min, t_max) of `func`.
pub fn t_range(func: &ProcessingFunction) -> (f64, f64) {
    func.t_range()
}

/// Normalizes `spec` at `delta` using the largest raw value on a probe grid of s
/// values. Errors when the raw function looks unbounded on the grid.
pub fn normalize(spec: FunctionSpec, delta: f64, probe_grid: &[f64]) -> Result<ProcessingFunction> {
    spec.validate(delta)?;
    if probe_grid.is_empty() {
        return Err(invalid("empty probe grid"));
    }
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for &s in probe_grid {
        let t = spec.raw(s, delta);
        if !t.is_finite() || t.abs() > 1e12 {
            return Err(invalid(format!("{} is unbounded near s = {s}", spec.label())));
        }
        hi = hi.max(t);
        lo = lo.min(t);
    }
    // Poles can fall between grid points; trust the exact bounds where known.
    if spec.raw_bounds(delta).1.is_none() {
        return Err(invalid(format!("{} is unbounded above at delta = {delta}", spec.label())));
    }
    let exact_lo = spec.raw_bounds(delta).0;
    Ok(ProcessingFunction::with_normalization(spec, delta, Normalization::from_sup(hi), exact_lo.map(|e| e.min(lo))))
}

/// Default probe grid: dense near zero, logarithmic out to s = 1e4.
pub fn default_probe_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (0..=4000).map(|k| k as f64 * 0.005).collect();
    g.extend((0..=400).map(|k| 20.0 * 10f64.powf(k as f64 / 150.0)));
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(spec: FunctionSpec, delta: f64) -> ProcessingFunction {
        ProcessingFunction::new(spec, delta).unwrap()
    }

    #[test]
    fn formula_spot_values() {
        let mm = f(FunctionSpec::Mm, 4.0);
        assert!((mm.eval_t(100.0, 4.0).unwrap() - 1.0).abs() < 1e-3);
        let star = f(FunctionSpec::Star, 3.0);
        let y1 = (1.0f64 / 3.0).sqrt();
        assert!(star.eval_t(y1, 3.0).unwrap().abs() < 1e-15);
        let alt = f(FunctionSpec::AltWeak, 3.0);
        assert!((alt.eval_t(y1, 3.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn star_is_clamped_at_zero() {
        let star = f(FunctionSpec::Star, 3.0);
        let t = star.eval_t(0.0, 3.0).unwrap();
        assert!(t.is_finite() && t < -1e11);
    }

    #[test]
    fn constant_raw_normalizes_to_one() {
        let spec = FunctionSpec::Custom { table: vec![(0.0, 0.5), (5.0, 0.5)], csv: None };
        let func = normalize(spec, 3.0, &default_probe_grid()).unwrap();
        for s in [0.0, 0.3, 7.0, 1e3] {
            assert_eq!(func.t_of_s(s), 1.0);
        }
    }

    #[test]
    fn trim_normalizes_by_c2_squared() {
        let func = normalize(FunctionSpec::Trim { c2: 2.0 }, 3.0, &default_probe_grid()).unwrap();
        // grid sup sits just below 4
        assert!((func.normalization.t_max_raw - 4.0).abs() < 0.01);
        let exact = f(FunctionSpec::Trim { c2: 2.0 }, 3.0);
        assert_eq!(exact.normalization.t_max_raw, 4.0);
        for s in [0.0, 1.0, 3.99, 4.0, 9.0] {
            let want = if s < 4.0 { s / 4.0 } else { 0.0 };
            assert!((exact.t_of_s(s) - want).abs() < 1e-15);
        }
        assert_eq!(exact.t_range(), (0.0, 1.0));
    }

    #[test]
    fn shifted_mm_grid_sup_near_one() {
        let func = normalize(FunctionSpec::ShiftedMm, 5.0, &default_probe_grid()).unwrap();
        let sup = default_probe_grid().iter().map(|&s| func.t_of_s(s)).fold(f64::MIN, f64::max);
        assert!(sup <= 1.0 + 1e-9 && sup >= 1.0 - 1e-3, "{sup}");
        let exact = f(FunctionSpec::ShiftedMm, 5.0);
        let r = 5f64.sqrt();
        assert!((exact.t_min - 2.0 / (2.0 + r / (r - 1.0))).abs() < 1e-15);
    }

    #[test]
    fn unbounded_alt_weak_rejected_below_two() {
        assert!(ProcessingFunction::new(FunctionSpec::AltWeak, 1.5).is_err());
        assert!(normalize(FunctionSpec::AltWeak, 1.5, &default_probe_grid()).is_err());
        assert!(ProcessingFunction::new(FunctionSpec::AltWeak, 2.5).is_ok());
    }

    #[test]
    fn g_spot_values() {
        let zero = ProcessingFunction::unnormalized(FunctionSpec::Custom { table: vec![(0.0, 0.0)], csv: None }, 3.0).unwrap();
        for y in [0.0, 0.4, 3.0] {
            assert!((zero.eval_g(y, 0.3, 3.0).unwrap() - 0.3).abs() < 1e-15);
        }
        // normalizing an all-zero T shifts it to T̂ ≡ 1
        assert_eq!(f(FunctionSpec::Custom { table: vec![(0.0, 0.0)], csv: None }, 3.0).t_of_s(2.0), 1.0);

        let one = f(FunctionSpec::Subset { c1: 0.0001 }, 3.0);
        assert!((one.eval_g(1.0, 0.5, 3.0).unwrap() - 1.0).abs() < 1e-15);

        let star = f(FunctionSpec::Star, 3.0);
        let y = (2.0f64 / 3.0).sqrt();
        assert!((star.eval_g(y, 0.5, 3.0).unwrap() - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn g_singularity_reports_location() {
        let one = f(FunctionSpec::Subset { c1: 0.0001 }, 3.0);
        match one.eval_g(1.0, 1.0, 3.0) {
            Err(Error::Singularity { y, mu }) => {
                assert_eq!(y, 1.0);
                assert_eq!(mu, 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ranges() {
        assert_eq!(f(FunctionSpec::Subset { c1: 1.5 }, 3.0).t_range(), (0.0, 1.0));
        assert!((f(FunctionSpec::Mm, 4.0).t_min + 1.0).abs() < 1e-15);
        assert!((f(FunctionSpec::StarRegularized { kappa: 0.01 }, 3.0).t_min + 99.0).abs() < 1e-9);
        assert_eq!(f(FunctionSpec::Star, 3.0).t_min, f64::NEG_INFINITY);
    }

    #[test]
    fn delta_embedding_kinds_reject_other_delta() {
        let mm = f(FunctionSpec::Mm, 4.0);
        assert!(mm.eval_t(1.0, 3.0).is_err());
        let star = f(FunctionSpec::Star, 4.0);
        assert!(star.eval_t(1.0, 3.0).is_ok());
    }

    #[test]
    fn custom_interpolates_linearly() {
        let func = f(FunctionSpec::Custom { table: vec![(0.0, -1.0), (2.0, 1.0), (4.0, 0.0)], csv: None }, 3.0);
        assert!((func.t_of_s(1.0) - 0.0).abs() < 1e-15);
        assert!((func.t_of_s(3.0) - 0.5).abs() < 1e-15);
        assert_eq!(func.t_of_s(10.0), 0.0);
        assert_eq!(func.breakpoints(), vec![2.0, 4.0]);
    }

    #[test]
    fn invalid_parameters() {
        assert!(ProcessingFunction::new(FunctionSpec::Trim { c2: 0.0 }, 3.0).is_err());
        assert!(ProcessingFunction::new(FunctionSpec::Subset { c1: -1.0 }, 3.0).is_err());
        assert!(ProcessingFunction::new(FunctionSpec::Mm, 1.0).is_err());
        assert!(ProcessingFunction::new(FunctionSpec::Custom { table: vec![], csv: None }, 3.0).is_err());
        assert!(ProcessingFunction::new(FunctionSpec::Custom { table: vec![(1.0, 0.0), (0.5, 1.0)], csv: None }, 3.0).is_err());
    }

    #[test]
    fn spec_toml_round_trip() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct Wrap {
            func: FunctionSpec,
        }
        for spec in [
            FunctionSpec::Trim { c2: 2.0 },
            FunctionSpec::StarRegularized { kappa: 0.01 },
            FunctionSpec::Mm,
            FunctionSpec::Custom { table: vec![(0.0, 0.0), (1.0, 1.0)], csv: None },
        ] {
            let w = Wrap { func: spec };
            let text = toml::to_string(&w).unwrap();
            assert_eq!(toml::from_str::<Wrap>(&text).unwrap(), w);
        }
        let w: Wrap = toml::from_str("[func]\nkind = \"star_regularized\"\n").unwrap();
        assert_eq!(w.func, FunctionSpec::StarRegularized { kappa: 0.01 });
    }
}
