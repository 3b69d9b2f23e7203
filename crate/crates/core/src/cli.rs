//! Experiment configuration, command runners and the command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::acceptance::{self, Outcome};
use crate::asymptotics::{rho_sq, AsymptoticPrediction, Integrator};
use crate::error::{Error, Result};
use crate::pcaep::{run_tracked, TrackingSetup};
use crate::preprocessing::{FunctionSpec, ProcessingFunction};
use crate::quadrature::QuadratureSpec;
use crate::rng::Seed;
use crate::sensing::{SensingKind, SensingSpec};
use crate::spectral::{TrialSettings, HAAR_MAX_N};
use crate::spectrum::{analyze, freedman_diaconis, SpectrumSetup};
use crate::sweep::{gnuplot_table, run_sweep, SweepCell};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

/// Name of the resolved-config copy written next to every run's outputs.
pub const RESOLVED_CONFIG: &str = "config.toml";

/// A full experiment manifest. Every section has defaults, so an empty file
/// is valid and reproduces the reference scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Output directory; defaults to `out/<command>`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; 0 lets the pool pick.
    pub threads: usize,
    pub quadrature: QuadratureSpec,
    pub predict: PredictConfig,
    pub sweep: SweepConfig,
    pub pcaep: TrackingSetup,
    pub spectrum: SpectrumSetup,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            output_dir: None,
            threads: 0,
            quadrature: QuadratureSpec::default(),
            predict: PredictConfig::default(),
            sweep: SweepConfig::default(),
            pcaep: TrackingSetup::default(),
            spectrum: SpectrumSetup::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub funcs: Vec<FunctionSpec>,
    pub deltas: Vec<f64>,
    /// δ at which ψ-curves are tabulated.
    pub psi_delta: f64,
    /// Number of μ points on (0, μ̄) for the ψ-curves.
    pub mu_points: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            funcs: vec![FunctionSpec::Trim { c2: 2.0 }, FunctionSpec::Trim { c2: 0.8 }, FunctionSpec::Star],
            deltas: reference_delta_grid(),
            psi_delta: 3.0,
            mu_points: 50,
        }
    }
}

/// δ ∈ {2.1, 2.5, 3.0, …, 6.0}.
pub fn reference_delta_grid() -> Vec<f64> {
    std::iter::once(2.1).chain((0..8).map(|k| 2.5 + 0.5 * k as f64)).collect()
}

/// One sensing ensemble of a sweep with its own δ-grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleGrid {
    pub kind: SensingKind,
    pub n: usize,
    pub deltas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub ensembles: Vec<EnsembleGrid>,
    pub funcs: Vec<FunctionSpec>,
    pub trials: usize,
    /// Largest n accepted for a Haar ensemble.
    pub haar_max_n: usize,
    pub power: TrialSettings,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            ensembles: vec![
                EnsembleGrid { kind: SensingKind::PartialDft, n: 2048, deltas: reference_delta_grid() },
                EnsembleGrid { kind: SensingKind::Cdp, n: 2048, deltas: vec![3.0, 4.0, 5.0, 6.0] },
            ],
            funcs: vec![
                FunctionSpec::Trim { c2: 2.0 },
                FunctionSpec::Subset { c1: 1.5 },
                FunctionSpec::Mm,
                FunctionSpec::StarRegularized { kappa: 0.01 },
            ],
            trials: 10,
            haar_max_n: HAAR_MAX_N,
            power: TrialSettings::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML; errors carry the line, column and offending field.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Checks that do not need any numerics.
    pub fn validate(&self) -> Result<()> {
        let sweep = &self.sweep;
        if sweep.trials == 0 {
            return Err(Error::Config("sweep.trials must be positive".into()));
        }
        for e in &sweep.ensembles {
            if e.kind == SensingKind::Haar && e.n > sweep.haar_max_n {
                return Err(Error::Config(format!("sweep: haar n = {} exceeds haar_max_n = {}", e.n, sweep.haar_max_n)));
            }
            for &d in &e.deltas {
                SensingSpec { kind: e.kind, n: e.n }.rows_for(d).map_err(|err| Error::Config(format!("sweep: {err}")))?;
            }
        }
        if self.predict.deltas.iter().any(|d| !(*d > 1.0)) {
            return Err(Error::Config("predict.deltas must all exceed 1".into()));
        }
        Ok(())
    }

    fn resolve_functions(&mut self) -> Result<()> {
        let resolve = |v: &mut Vec<FunctionSpec>| -> Result<()> {
            for f in v.iter_mut() {
                *f = f.clone().resolve()?;
            }
            Ok(())
        };
        resolve(&mut self.predict.funcs)?;
        resolve(&mut self.sweep.funcs)?;
        self.pcaep.func = self.pcaep.func.clone().resolve()?;
        self.spectrum.func = self.spectrum.func.clone().resolve()?;
        Ok(())
    }
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// TOML experiment manifest.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = automatic).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Subcommand, Clone, Debug)]
pub enum Command {
    /// Asymptotic ρ² over a δ-grid and ψ-curves over a μ-grid.
    Predict(CommonArgs),
    /// Monte Carlo sweep of the spectral initializer against predictions.
    Sweep(CommonArgs),
    /// PCA-EP trajectory against state evolution.
    Pcaep(CommonArgs),
    /// Dense spectra of D and E(μ̂).
    Spectrum(CommonArgs),
    /// Run the acceptance suite.
    Check(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Predict(_) => "predict",
            Command::Sweep(_) => "sweep",
            Command::Pcaep(_) => "pcaep",
            Command::Spectrum(_) => "spectrum",
            Command::Check(_) => "check",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Predict(a) | Command::Sweep(a) | Command::Pcaep(a) | Command::Spectrum(a) | Command::Check(a) => a,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ortho-spectral", version, about = "Spectral initialization for phase retrieval with column-orthogonal sensing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Loads the config, applies flag overrides and resolves external tables.
pub fn resolve_config(args: &CommonArgs, command: &str) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    if let Some(threads) = args.threads {
        cfg.threads = threads;
    }
    if cfg.output_dir.is_none() {
        cfg.output_dir = Some(PathBuf::from("out").join(command));
    }
    cfg.resolve_functions().map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Creates the output directory, refusing a non-empty one unless forced.
pub fn prepare_output(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)?.next().is_some();
        if occupied && !force {
            return Err(Error::Config(format!("output directory {} is not empty; pass --force to overwrite", dir.display())));
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Flat CSV view of a prediction.
#[derive(Serialize)]
struct PredictionRow<'a> {
    func: &'a str,
    delta: f64,
    admissible: bool,
    mu_bar: f64,
    mu_hat: Option<f64>,
    rho_sq: f64,
    theta_sq: f64,
    lambda_at_mu_hat: Option<f64>,
    positive_phase: bool,
    boundary: bool,
}

#[derive(Serialize)]
struct PsiRow {
    func: String,
    delta: f64,
    mu: f64,
    psi1: f64,
    psi2: f64,
    psi3: f64,
    lambda: f64,
}

pub fn cmd_predict(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<AsymptoticPrediction>> {
    let p = &cfg.predict;
    let mut preds = Vec::new();
    for f in &p.funcs {
        for &d in &p.deltas {
            preds.push(rho_sq(f, d, &cfg.quadrature)?);
        }
    }
    let rows: Vec<PredictionRow> = preds
        .iter()
        .map(|q| PredictionRow {
            func: &q.func,
            delta: q.delta,
            admissible: q.admissible,
            mu_bar: q.mu_bar,
            mu_hat: q.mu_hat,
            rho_sq: q.rho_sq,
            theta_sq: q.theta_sq,
            lambda_at_mu_hat: q.lambda_at_mu_hat,
            positive_phase: q.positive_phase,
            boundary: q.boundary,
        })
        .collect();
    write_csv(&out.join("predictions.csv"), &rows)?;
    write_json(&out.join("predictions.json"), &preds)?;

    let mut curves = Vec::new();
    for f in &p.funcs {
        let func = match ProcessingFunction::new(f.clone(), p.psi_delta) {
            Ok(func) => func,
            Err(Error::InvalidParameter(msg)) if msg.contains("unbounded above") => continue,
            Err(e) => return Err(e),
        };
        let integ = Integrator::new(&func, &cfg.quadrature)?;
        let mu_bar = integ.mu_bar()?;
        for k in 1..=p.mu_points {
            let mu = mu_bar * k as f64 / (p.mu_points + 1) as f64;
            let psi = integ.psi(mu)?;
            curves.push(PsiRow { func: func.label(), delta: p.psi_delta, mu, psi1: psi.psi1, psi2: psi.psi2, psi3: psi.psi3, lambda: integ.lambda(mu)? });
        }
    }
    write_csv(&out.join("psi_curves.csv"), &curves)?;
    Ok(preds)
}

pub fn sweep_cells(cfg: &SweepConfig) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for e in &cfg.ensembles {
        for f in &cfg.funcs {
            for &delta in &e.deltas {
                cells.push(SweepCell { sensing: SensingSpec { kind: e.kind, n: e.n }, func: f.clone(), delta });
            }
        }
    }
    cells
}

pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<crate::sweep::SweepResult> {
    let result = run_sweep(&sweep_cells(&cfg.sweep), cfg.sweep.trials, &cfg.sweep.power, &cfg.quadrature, Seed(cfg.seed))?;
    write_csv(&out.join("trials.csv"), &result.trials)?;
    write_csv(&out.join("sweep.csv"), &result.rows)?;
    fs::write(out.join("sweep.dat"), gnuplot_table(&result.rows))?;
    Ok(result)
}

pub fn cmd_pcaep(cfg: &ExperimentConfig, out: &Path) -> Result<crate::pcaep::TrackedRun> {
    let run = run_tracked(&cfg.pcaep, &cfg.quadrature, Seed(cfg.seed))?;
    write_csv(&out.join("tracked.csv"), &run.records)?;
    write_json(&out.join("tracked.json"), &serde_json::json!({ "mu": run.mu, "delta_realized": run.delta_realized, "psi": run.psi }))?;
    Ok(run)
}

#[derive(Serialize)]
struct ComplexRow {
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct EigRow {
    eig: f64,
}

#[derive(Serialize)]
struct BinRow {
    lower: f64,
    upper: f64,
    count: usize,
}

/// Writes the report; a missing μ̂ yields a `not_applicable` status file and succeeds.
pub fn cmd_spectrum(cfg: &ExperimentConfig, out: &Path) -> Result<Option<crate::spectrum::SpectrumReport>> {
    let report = match analyze(&cfg.spectrum, &cfg.quadrature, Seed(cfg.seed)) {
        Ok(r) => r,
        Err(Error::NotApplicable(msg)) => {
            write_json(&out.join("report.json"), &serde_json::json!({ "status": "not_applicable", "reason": msg }))?;
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    write_csv(&out.join("d_eigs.csv"), &report.d_eigs.iter().map(|&eig| EigRow { eig }).collect::<Vec<_>>())?;
    write_csv(&out.join("e_eigs.csv"), &report.e_eigs.iter().map(|z| ComplexRow { re: z.re, im: z.im }).collect::<Vec<_>>())?;
    let bins: Vec<BinRow> = freedman_diaconis(&report.d_eigs).into_iter().map(|(lower, upper, count)| BinRow { lower, upper, count }).collect();
    write_csv(&out.join("d_histogram.csv"), &bins)?;
    let mut summary = serde_json::to_value(&report)?;
    if let Some(obj) = summary.as_object_mut() {
        obj.remove("d_eigs");
        obj.remove("e_eigs");
        obj.insert("status".into(), "ok".into());
    }
    write_json(&out.join("report.json"), &summary)?;
    Ok(Some(report))
}

pub fn cmd_check(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<Outcome>> {
    let mut outcomes = Vec::new();
    for criterion in [
        acceptance::weak_threshold as fn(&QuadratureSpec) -> Outcome,
        acceptance::closed_form,
        acceptance::optimality,
    ] {
        outcomes.push(criterion(&cfg.quadrature));
        println!("{}", outcomes.last().expect("pushed"));
    }
    let seed = Seed(cfg.seed);
    for criterion in [
        acceptance::prediction_vs_simulation as fn(&QuadratureSpec, Seed) -> Outcome,
        acceptance::se_tracking,
        acceptance::eigen_structure,
        acceptance::property_suite,
    ] {
        outcomes.push(criterion(&cfg.quadrature, seed));
        println!("{}", outcomes.last().expect("pushed"));
    }
    write_json(&out.join("check.json"), &outcomes)?;
    Ok(outcomes)
}

fn exit_code_for(e: &Error) -> i32 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_NUMERIC
    }
}

fn execute(cmd: &Command) -> Result<i32> {
    let args = cmd.common();
    let cfg = resolve_config(args, cmd.name())?;
    let out = cfg.output_dir.clone().expect("resolved");
    prepare_output(&out, args.force)?;
    fs::write(out.join(RESOLVED_CONFIG), cfg.to_toml()?)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        Ok(match cmd {
            Command::Predict(_) => {
                let preds = cmd_predict(&cfg, &out)?;
                println!("{} predictions written to {}", preds.len(), out.display());
                EXIT_OK
            }
            Command::Sweep(_) => {
                let r = cmd_sweep(&cfg, &out)?;
                for row in &r.rows {
                    println!(
                        "{:<12} n={:<6} {:<22} delta {:<5} p2 {:.4} ± {:.4}  predicted {:.4}  ({} ok, {} failed)",
                        row.ensemble, row.n, row.func, row.delta_nominal, row.p2_emp_mean, row.p2_emp_std, row.p2_pred, row.trials, row.failed
                    );
                }
                EXIT_OK
            }
            Command::Pcaep(_) => {
                let run = cmd_pcaep(&cfg, &out)?;
                println!("mu = {:.6}; {} records written to {}", run.mu, run.records.len(), out.display());
                EXIT_OK
            }
            Command::Spectrum(_) => {
                match cmd_spectrum(&cfg, &out)? {
                    Some(r) => println!(
                        "{} {:?} branch: extreme eigenvalue {:.4}, predicted {:.4}, outlier gap {:.4}",
                        r.func, r.branch, r.extreme_eig, r.lambda_pred, r.outlier_gap
                    ),
                    None => println!("not applicable: no mu_hat on the requested branch"),
                }
                EXIT_OK
            }
            Command::Check(_) => {
                let outcomes = cmd_check(&cfg, &out)?;
                if outcomes.iter().all(|o| o.passed) {
                    EXIT_OK
                } else {
                    EXIT_ACCEPTANCE
                }
            }
        })
    })
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
