//! Builds an experiment manifest in code, prints it as TOML and runs a small
//! sweep through the same path the `sweep` command uses.

use ortho_spectral::cli::{sweep_cells, EnsembleGrid, ExperimentConfig};
use ortho_spectral::preprocessing::FunctionSpec;
use ortho_spectral::rng::Seed;
use ortho_spectral::sensing::SensingKind;
use ortho_spectral::sweep::run_sweep;

fn main() -> ortho_spectral::Result<()> {
    let mut cfg = ExperimentConfig { seed: 42, ..ExperimentConfig::default() };
    cfg.sweep.ensembles = vec![EnsembleGrid { kind: SensingKind::Cdp, n: 512, deltas: vec![3.0, 5.0] }];
    cfg.sweep.funcs = vec![FunctionSpec::Mm, FunctionSpec::Trim { c2: 2.0 }];
    cfg.sweep.trials = 4;
    cfg.validate()?;
    println!("{}", cfg.to_toml()?);

    let result = run_sweep(&sweep_cells(&cfg.sweep), cfg.sweep.trials, &cfg.sweep.power, &cfg.quadrature, Seed(cfg.seed))?;
    for r in &result.rows {
        println!("{} {:<10} delta {}: {:.4} ± {:.4} (predicted {:.4})", r.ensemble, r.func, r.delta_nominal, r.p2_emp_mean, r.p2_emp_std, r.p2_pred);
    }
    Ok(())
}
