use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sample_complex_gaussian, RandomStream};
use crate::sensing::{OperatorDescriptor, SensingOperator};
use crate::vector::{rescale_to, ComplexVector};

/// A ground-truth signal and its phaseless measurements y = |A x⋆|.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignalInstance {
    pub x_star: ComplexVector,
    pub z_star: ComplexVector,
    pub y: Vec<f64>,
    pub op: OperatorDescriptor,
}

/// Draws x⋆ ~ CN(0, I), rescales it to ‖x⋆‖² = n and measures it through `op`.
pub fn make_signal(op: &SensingOperator, rng: &mut RandomStream) -> Result<SignalInstance> {
    let n = op.n();
    let mut x_star = sample_complex_gaussian(rng, n, 1.0)?;
    if !rescale_to(&mut x_star, n as f64) {
        return Err(Error::DegenerateState("drawn signal is zero".into()));
    }
    let z_star = op.apply(&x_star)?;
    let y = z_star.iter().map(|z| z.norm()).collect();
    Ok(SignalInstance { x_star, z_star, y, op: op.descriptor() })
}

impl SignalInstance {
    pub fn n(&self) -> usize {
        self.x_star.len()
    }
    pub fn m(&self) -> usize {
        self.z_star.len()
    }
}
