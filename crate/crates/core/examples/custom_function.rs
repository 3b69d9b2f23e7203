//! A processing function given as an (s, T) table: its ψ functions, fixed
//! points and predicted performance next to the optimal function.

use ortho_spectral::asymptotics::{rho_sq, rho_star_closed_form, Integrator};
use ortho_spectral::preprocessing::{FunctionSpec, ProcessingFunction};
use ortho_spectral::quadrature::QuadratureSpec;

fn main() -> ortho_spectral::Result<()> {
    let quad = QuadratureSpec::default();
    // a soft clipped ramp in s = δy²
    let spec = FunctionSpec::Custom { table: vec![(0.0, -1.0), (0.5, 0.0), (2.0, 0.8), (4.0, 1.0)], csv: None };
    let func = ProcessingFunction::new(spec.clone(), 4.0)?;
    let integ = Integrator::new(&func, &quad)?;
    let pred = integ.predict()?;
    println!("T range after normalization: {:?}", func.t_range());
    println!("mu_bar = {:.5}, mu_hat = {:?}", pred.mu_bar, pred.mu_hat);
    for k in 1..=5 {
        let mu = pred.mu_bar * k as f64 / 6.0;
        let p = integ.psi(mu)?;
        println!("  mu {mu:.4}: psi1 {:.4} psi2 {:.4} psi3 {:.4} Lambda {:.4}", p.psi1, p.psi2, p.psi3, integ.lambda(mu)?);
    }
    for delta in [2.5, 4.0, 6.0] {
        println!("delta {delta}: rho^2 = {:.4} (optimal {:.4})", rho_sq(&spec, delta, &quad)?.rho_sq, rho_star_closed_form(delta, &quad)?);
    }
    Ok(())
}
