//! Complex vector helpers. Vectors are plain `Vec<Complex64>`; inner products
//! conjugate the left argument.

use num_complex::Complex64;

use crate::error::{invalid, Result};

pub type ComplexVector = Vec<Complex64>;

/// ⟨a, b⟩ = Σ conj(aᵢ) bᵢ.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sq(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    norm_sq(a).sqrt()
}

/// Rescale in place so that ‖a‖² = `target_sq`. Returns false for a zero vector.
pub fn rescale_to(a: &mut [Complex64], target_sq: f64) -> bool {
    let n = norm(a);
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    let f = target_sq.sqrt() / n;
    a.iter_mut().for_each(|x| *x *= f);
    true
}

/// |⟨a, b⟩|² / (‖a‖² ‖b‖²), clamped to [0, 1].
pub fn cosine_similarity_sq(a: &[Complex64], b: &[Complex64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(invalid(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    let (na, nb) = (norm_sq(a), norm_sq(b));
    if na == 0.0 || nb == 0.0 {
        return Err(invalid("cosine similarity of a zero vector"));
    }
    Ok((inner(a, b).norm_sqr() / (na * nb)).clamp(0.0, 1.0))
}

/// ‖a − e^{iφ}b‖ with φ chosen to best align `b` to `a`.
pub fn phase_aligned_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let ip = inner(b, a);
    let phase = if ip.norm() > 0.0 { ip / ip.norm() } else { Complex64::new(1.0, 0.0) };
    a.iter().zip(b).map(|(x, y)| (x - y * phase).norm_sqr()).sum::<f64>().sqrt()
}
