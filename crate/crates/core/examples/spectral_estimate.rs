//! Spectral estimates on the partial DFT ensemble against the asymptotic ρ².

use ortho_spectral::asymptotics::rho_sq;
use ortho_spectral::preprocessing::FunctionSpec;
use ortho_spectral::quadrature::QuadratureSpec;
use ortho_spectral::rng::Seed;
use ortho_spectral::sensing::{SensingKind, SensingSpec};
use ortho_spectral::spectral::{run_trial, TrialSettings};

fn main() -> ortho_spectral::Result<()> {
    let quad = QuadratureSpec::default();
    let sensing = SensingSpec { kind: SensingKind::PartialDft, n: 1024 };
    let settings = TrialSettings::default();
    for func in [FunctionSpec::Mm, FunctionSpec::StarRegularized { kappa: 0.01 }, FunctionSpec::Subset { c1: 1.5 }] {
        for delta in [3.0, 5.0] {
            let trials = (0..5)
                .map(|k| run_trial(&sensing, &func, delta, &settings, Seed(100 + k)))
                .collect::<ortho_spectral::Result<Vec<_>>>()?;
            let mean = trials.iter().map(|t| t.p2).sum::<f64>() / trials.len() as f64;
            let pred = rho_sq(&func, trials[0].delta_realized, &quad)?.rho_sq;
            let iters = trials.iter().map(|t| t.iterations).max().unwrap_or(0);
            println!("{:<22} delta {delta}: mean P^2 {mean:.4}, predicted {pred:.4} (max {iters} iterations)", func.label());
        }
    }
    Ok(())
}
