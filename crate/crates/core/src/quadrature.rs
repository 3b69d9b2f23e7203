//! Expectations over s ~ Exp(1).
//!
//! The rule is composite Gauss–Legendre on [0, cutoff], with panels refined
//! geometrically toward s = 0 and toward both sides of every breakpoint of T,
//! followed by a shifted Gauss–Laguerre rule on [cutoff, ∞). The geometric
//! refinement resolves the near-poles of 1/(ν − T(s)) that appear next to a
//! jump of T when ν approaches sup T.

use std::num::NonZeroUsize;

use gauss_quad::{GaussLaguerre, GaussLegendre};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    /// Gauss–Legendre points per panel.
    pub panel_order: usize,
    /// Number of halvings of the panel width toward each graded point.
    pub grading_levels: usize,
    /// Split between the composite part and the Laguerre tail.
    pub cutoff: f64,
    /// Gauss–Laguerre points on the tail.
    pub tail_order: usize,
    /// Target absolute accuracy of E[1] and E[s].
    pub abs_tol: f64,
    /// Monte Carlo sample count used to cross-check every evaluation, if set.
    pub mc_fallback: Option<usize>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { panel_order: 16, grading_levels: 40, cutoff: 50.0, tail_order: 32, abs_tol: 1e-10, mc_fallback: None }
    }
}

/// Nodes and weights with Σ wᵢ f(sᵢ) ≈ E[f(s)], s ~ Exp(1).
#[derive(Clone, Debug)]
pub struct ExpRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ExpRule {
    /// Builds the rule with extra refinement at `breakpoints` (values outside
    /// (0, cutoff) are ignored).
    pub fn build(spec: &QuadratureSpec, breakpoints: &[f64]) -> Result<Self> {
        let order = NonZeroUsize::new(spec.panel_order).ok_or_else(|| invalid("panel_order must be positive"))?;
        let tail_order = NonZeroUsize::new(spec.tail_order).ok_or_else(|| invalid("tail_order must be positive"))?;
        if !(spec.cutoff > 0.0 && spec.cutoff.is_finite()) {
            return Err(invalid("cutoff must be positive and finite"));
        }
        let legendre = GaussLegendre::new(order);
        let std_nodes: Vec<(f64, f64)> = legendre.nodes().copied().zip(legendre.weights().copied()).collect();

        let mut knots = vec![0.0];
        let mut inner: Vec<f64> = breakpoints.iter().copied().filter(|b| *b > 0.0 && *b < spec.cutoff).collect();
        inner.sort_by(f64::total_cmp);
        inner.dedup();
        knots.extend(inner);
        knots.push(spec.cutoff);

        let mut edges = Vec::new();
        let last = knots.len() - 2;
        for (k, w) in knots.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let len = b - a;
            let h0 = (0.5 * len).min(1.0);
            edges.push(a);
            let mut x = a + 1.0;
            while x < b {
                edges.push(x);
                x += 1.0;
            }
            for lvl in 0..=spec.grading_levels {
                let d = h0 * 0.5f64.powi(lvl as i32);
                edges.push(a + d);
                if k != last {
                    edges.push(b - d);
                }
            }
            edges.push(b);
        }
        edges.sort_by(f64::total_cmp);
        edges.dedup();

        let mut nodes = Vec::with_capacity(edges.len() * spec.panel_order + spec.tail_order);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for &(x, wt) in &std_nodes {
                let s = mid + half * x;
                nodes.push(s);
                weights.push(half * wt * (-s).exp());
            }
        }

        let laguerre = GaussLaguerre::new(tail_order, gauss_quad::FiniteAboveNegOneF64::new(0.0).expect("0 > -1"));
        let scale = (-spec.cutoff).exp();
        for (&u, &wt) in laguerre.nodes().zip(laguerre.weights()) {
            nodes.push(spec.cutoff + u);
            weights.push(scale * wt);
        }
        Ok(ExpRule { nodes, weights })
    }

    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&s, &w)| w * f(s)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_moments_are_exact() {
        let spec = QuadratureSpec::default();
        for bps in [vec![], vec![1.5], vec![4.0, 0.64, 60.0]] {
            let rule = ExpRule::build(&spec, &bps).unwrap();
            assert!((rule.expect(|_| 1.0) - 1.0).abs() <= spec.abs_tol);
            assert!((rule.expect(|s| s) - 1.0).abs() <= spec.abs_tol);
            assert!((rule.expect(|s| s * s) - 2.0).abs() <= 1e-9);
            assert!((rule.expect(|s| s.powi(3)) - 6.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn jump_integrals_are_exact() {
        let rule = ExpRule::build(&QuadratureSpec::default(), &[1.5]).unwrap();
        let tail = rule.expect(|s| if s > 1.5 { 1.0 } else { 0.0 });
        assert!((tail - (-1.5f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn near_log_singularity_next_to_jump() {
        // ∫₀^c e^{-s}/(c + ε − s) ds for tiny ε grows like e^{-c}·ln(1/ε)
        let c = 4.0;
        let eps = 1e-9;
        let rule = ExpRule::build(&QuadratureSpec::default(), &[c]).unwrap();
        let q = rule.expect(|s| if s < c { 1.0 / (c + eps - s) } else { 0.0 });
        // reference by substitution u = c − s with a fine graded trapezoid in log u
        let mut reference = 0.0;
        let n = 400_000;
        let (lo, hi) = ((1e-16f64).ln(), c.ln());
        let h = (hi - lo) / n as f64;
        for k in 0..=n {
            let u = (lo + k as f64 * h).exp();
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            reference += w * h * u * (-(c - u)).exp() / (u + eps);
        }
        assert!((q - reference).abs() < 1e-6 * reference, "{q} vs {reference}");
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = QuadratureSpec { panel_order: 0, ..QuadratureSpec::default() };
        assert!(ExpRule::build(&bad, &[]).is_err());
        let bad = QuadratureSpec { cutoff: -1.0, ..QuadratureSpec::default() };
        assert!(ExpRule::build(&bad, &[]).is_err());
    }
}
