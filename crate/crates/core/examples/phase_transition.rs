//! Predicted cosine similarity ρ²(δ) for the shipped processing functions,
//! and the weak threshold of the optimal one.

use ortho_spectral::asymptotics::{delta_threshold, rho_sq};
use ortho_spectral::preprocessing::FunctionSpec;
use ortho_spectral::quadrature::QuadratureSpec;

fn main() -> ortho_spectral::Result<()> {
    let quad = QuadratureSpec::default();
    let funcs = [
        FunctionSpec::Star,
        FunctionSpec::Mm,
        FunctionSpec::Subset { c1: 1.5 },
        FunctionSpec::Trim { c2: 2.0 },
        FunctionSpec::Trim { c2: 0.8 },
    ];
    let deltas = [1.5, 2.1, 2.5, 3.0, 4.0, 5.0, 6.0];
    print!("{:<16}", "delta");
    for d in deltas {
        print!("{d:>8.1}");
    }
    println!();
    for f in &funcs {
        print!("{:<16}", f.label());
        for d in deltas {
            print!("{:>8.4}", rho_sq(f, d, &quad)?.rho_sq);
        }
        println!();
    }
    let th = delta_threshold(&FunctionSpec::Star, &quad, 6.0)?;
    println!("weak threshold of 1 - 1/s: delta = {:.4}", th.delta);
    Ok(())
}
