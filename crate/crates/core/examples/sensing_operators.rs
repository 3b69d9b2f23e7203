//! The three column-orthogonal ensembles: isometry, realized δ and
//! reconstruction from a JSON descriptor.

use ortho_spectral::rng::{make_rng, sample_complex_gaussian, Seed};
use ortho_spectral::sensing::{build_cdp, build_haar, build_partial_dft, OperatorDescriptor};
use ortho_spectral::vector::{norm, phase_aligned_distance};

fn main() -> ortho_spectral::Result<()> {
    let ops = [build_haar(600, 200, Seed(1))?, build_cdp(256, 4, Seed(2))?, build_partial_dft(1000, 300, Seed(3))?];
    for op in &ops {
        let x = sample_complex_gaussian(&mut make_rng(Seed(9)), op.n(), 1.0)?;
        let back = op.apply_adjoint(&op.apply(&x)?)?;
        let json = op.descriptor().to_json()?;
        let rebuilt = OperatorDescriptor::from_json(&json)?.build()?;
        let same = phase_aligned_distance(&rebuilt.apply(&x)?, &op.apply(&x)?);
        println!(
            "{:<12} m = {:<5} n = {:<4} delta = {:.3}  ||A^H A x - x||/||x|| = {:.1e}  rebuilt diff = {:.1e}  {json}",
            op.kind().to_string(),
            op.m(),
            op.n(),
            op.delta(),
            phase_aligned_distance(&back, &x) / norm(&x),
            same
        );
    }
    Ok(())
}
