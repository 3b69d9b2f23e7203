//! PCA-EP at μ̂ against its state evolution: overlap, noise energy, cosine
//! similarity and the correlation of consecutive noise vectors.

use ortho_spectral::pcaep::{run_tracked, TrackingSetup};
use ortho_spectral::quadrature::QuadratureSpec;
use ortho_spectral::rng::Seed;
use ortho_spectral::sensing::{SensingKind, SensingSpec};

fn main() -> ortho_spectral::Result<()> {
    let setup = TrackingSetup { sensing: SensingSpec { kind: SensingKind::PartialDft, n: 4096 }, t_max: 12, ..TrackingSetup::default() };
    let run = run_tracked(&setup, &QuadratureSpec::default(), Seed(5))?;
    println!("mu_hat = {:.6}, psi = ({:.4}, {:.4}, {:.4})", run.mu, run.psi.psi1, run.psi.psi2, run.psi.psi3);
    println!("{:>3} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}", "t", "alpha", "alpha SE", "P2", "P2 SE", "corr", "corr SE");
    for r in &run.records {
        println!(
            "{:>3} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            r.t, r.alpha_emp_re, r.alpha_se_re, r.p2_emp, r.p2_se, r.wcorr_emp, r.wcorr_se
        );
    }
    Ok(())
}
