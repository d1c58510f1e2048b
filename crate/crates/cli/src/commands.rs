//! Command surface. `run` maps arguments to an exit code: 0 success, 1
//! numerical failure, 2 usage error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cvgate::cubic::{cubic_pair_limit, limit_csv, CubicLimitConfig};
use cvgate::fock::KetVector;
use cvgate::gridsim::{
    gaussian_state_to_grid, ideal_ancilla, protocol_scan, run_protocol, write_snapshot, GridSpec, GridWavefunction,
    Policy, ProtocolReport, Scheme,
};
use cvgate::nlsq::{gaussian_benchmark, mean_photons};
use cvgate::optimizer::{minimize, sweep, AnsatzSpec, OptimizationRecord, Processing};
use cvgate::quadpoly::QuadraturePolynomial;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::appendix_b;
use crate::defaults;
use crate::expr::parse_hamiltonian;
use crate::store::{ResultStore, StoreError, StoredRecord};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Numerical(#[from] cvgate::Error),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Debug, Parser)]
#[command(
    name = "cvgate",
    version,
    about = "Resource states and grid simulation for measurement-induced nonlinear gates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Gaussian benchmark V_G as CSV
    Benchmark(BenchmarkArgs),
    /// Optimize one resource and store the record
    Optimize(OptimizeArgs),
    /// R_V against kappa and photon number as CSV
    Sweep(SweepArgs),
    /// Reproduce a tabulated result set
    Reproduce(ReproduceArgs),
    /// Simulate the measurement-induced gate on a position grid
    Simulate(SimulateArgs),
    /// Two-cubic-ancilla limit curve as CSV
    CubicLimit(CubicLimitArgs),
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// list `a,b,c` or range `start:stop:step`
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: String,
    #[command(flatten)]
    pub search: SearchArgs,
    /// cache results in this directory
    #[arg(long)]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Simplified,
    Factorized,
    Entangled,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GaussianArg {
    Passive,
    Full,
}

#[derive(Debug, Args)]
pub struct AnsatzArgs {
    #[arg(long, value_enum)]
    pub ansatz: FamilyArg,
    /// highest Fock level per mode, `M,N`
    #[arg(long)]
    pub dims: String,
    #[arg(long, value_enum, default_value = "passive")]
    pub gaussian: GaussianArg,
    /// restrict coefficients to be real up to `i^n`
    #[arg(long)]
    pub real: bool,
    /// require exchange-symmetric cores
    #[arg(long)]
    pub symmetric: bool,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub kappa: f64,
    #[command(flatten)]
    pub ansatz: AnsatzArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value = defaults::STORE_DIR)]
    pub store: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: String,
    #[command(flatten)]
    pub ansatz: AnsatzArgs,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Recipe {
    AppendixB,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub recipe: Recipe,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Qsg,
    BeamSplitter,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub hamiltonian: String,
    /// `record:FILE`, `ideal:STD` or `vacuum`
    #[arg(long)]
    pub ancilla: String,
    /// `L,X`: points per mode and half-width
    #[arg(long)]
    pub grid: Option<String>,
    /// `feedforward`, `postselect:EPS` or `none`
    #[arg(long, default_value = "feedforward")]
    pub policy: String,
    /// `vacuum` or `coherent:X,P`
    #[arg(long)]
    pub input: Option<String>,
    #[arg(long, value_enum, default_value = "qsg")]
    pub scheme: SchemeArg,
    #[arg(long)]
    pub seed: Option<u64>,
    /// sampled runs to log
    #[arg(long)]
    pub runs: Option<usize>,
    /// write the output wavefunction of the last sampled run
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CubicLimitArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<f64>,
    /// list or `start:stop:step`
    #[arg(long)]
    pub lambda1: Option<String>,
    /// keep `lambda2 = 1` instead of `lambda1 lambda2^2 = 1`
    #[arg(long)]
    pub unconstrained: bool,
    #[command(flatten)]
    pub search: SearchArgs,
}

fn round12(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

/// `a,b,c` or `start:stop:step` (inclusive, either direction).
pub fn parse_values(text: &str) -> Result<Vec<f64>, CliError> {
    let num = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
    let parts: Vec<&str> = text.split(':').collect();
    let values = match parts.as_slice() {
        [single] => single.split(',').map(num).collect::<Option<Vec<f64>>>(),
        [a, b, s] => match (num(a), num(b), num(s)) {
            (Some(a), Some(b), Some(s)) if s > 0.0 => {
                let n = ((b - a).abs() / s + 1e-9).floor() as usize;
                if n > 100_000 {
                    return usage(format!("range '{text}' has too many points"));
                }
                let dir = if b >= a { 1.0 } else { -1.0 };
                Some((0..=n).map(|i| round12(a + dir * s * i as f64)).collect())
            }
            _ => None,
        },
        _ => None,
    };
    match values {
        Some(v) if !v.is_empty() => Ok(v),
        _ => usage(format!("cannot read '{text}' as a list or start:stop:step range")),
    }
}

fn parse_pair<T: std::str::FromStr>(text: &str, what: &str) -> Result<(T, T), CliError> {
    match text.split(',').collect::<Vec<_>>().as_slice() {
        [a, b] => match (a.trim().parse(), b.trim().parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => usage(format!("cannot read {what} '{text}'")),
        },
        _ => usage(format!("{what} must be two comma-separated values, got '{text}'")),
    }
}

impl AnsatzArgs {
    pub fn spec(&self) -> Result<AnsatzSpec, CliError> {
        let (m, n) = parse_pair::<usize>(&self.dims, "--dims")?;
        let processing = match self.gaussian {
            GaussianArg::Passive => Processing::Passive,
            GaussianArg::Full => Processing::Full,
        };
        let spec = match self.ansatz {
            FamilyArg::Simplified if processing == Processing::Full => {
                return usage("the simplified ansatz admits passive Gaussian processing only")
            }
            FamilyArg::Simplified => AnsatzSpec::simplified(m, n),
            FamilyArg::Factorized => AnsatzSpec::factorized(m, n, processing),
            FamilyArg::Entangled => AnsatzSpec::entangled(m, n, processing),
        }
        .with_real_up_to_phase(self.real)
        .with_exchange_symmetry(self.symmetric);
        spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(spec)
    }
}

fn check_kappa(k: f64) -> Result<(), CliError> {
    if !(k >= 0.0 && k.is_finite()) {
        return usage(format!("kappa must be a finite value >= 0, got {k}"));
    }
    Ok(())
}

fn benchmark(args: &BenchmarkArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let kappas = parse_values(&args.kappa)?;
    kappas.iter().try_for_each(|&k| check_kappa(k))?;
    let config = defaults::optimizer(args.search.starts, args.search.seed).benchmark();
    let store = args.store.as_ref().map(ResultStore::open).transpose()?;
    writeln!(out, "kappa,v_g,theta1,lambda1,lambda2,theta2,bound_hit")?;
    for k in kappas {
        let mut table = toml::Table::new();
        table.insert("kappa".into(), k.into());
        table.insert("starts".into(), (config.starts as i64).into());
        table.insert("seed".into(), (config.seed as i64).into());
        let cached = match &store {
            Some(s) => s.get("benchmark", &table)?.and_then(|r| r.benchmark),
            None => None,
        };
        let b = match cached {
            Some(b) => b,
            None => {
                let b = gaussian_benchmark(k, &config)?;
                if let Some(s) = &store {
                    let mut rec = ResultStore::new_record("benchmark", table);
                    rec.benchmark = Some(b.clone());
                    s.put(&rec)?;
                }
                b
            }
        };
        let g = b.params;
        writeln!(out, "{k},{},{},{},{},{},{}", b.report.total, g.theta1, g.lambda1, g.lambda2, g.theta2, b.bound_hit)?;
    }
    Ok(())
}

fn optimize_config(kappa: f64, spec: &AnsatzSpec, starts: usize, seed: u64) -> toml::Table {
    let mut t = toml::Table::new();
    t.insert("kappa".into(), kappa.into());
    t.insert("ansatz".into(), spec.to_string().into());
    t.insert("starts".into(), (starts as i64).into());
    t.insert("seed".into(), (seed as i64).into());
    t
}

pub fn summary_line(r: &OptimizationRecord) -> String {
    format!(
        "ansatz={} kappa={} v_ng={:.8} v_g={:.8} r_v={:.6} converged={}/{} bound_hit={}",
        r.ansatz, r.kappa, r.v_ng, r.v_g, r.r_v, r.converged_starts, r.starts, r.bound_hit
    )
}

fn optimize(args: &OptimizeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    check_kappa(args.kappa)?;
    let spec = args.ansatz.spec()?;
    let config = defaults::optimizer(args.search.starts, args.search.seed);
    let store = ResultStore::open(&args.store)?;
    let table = optimize_config(args.kappa, &spec, config.starts, config.seed);
    let (rec, reused) = match store.get("optimize", &table)? {
        Some(r) if r.record.is_some() => (r, true),
        _ => {
            let record = minimize(&spec, args.kappa, &config)?;
            let mut rec = ResultStore::new_record("optimize", table);
            rec.record = Some(record);
            (rec, false)
        }
    };
    let path = if reused { store.path_for(&rec.kind, &rec.key) } else { store.put(&rec)? };
    let record = rec.record.as_ref().expect("present");
    writeln!(out, "{} file={}{}", summary_line(record), path.display(), if reused { " (cached)" } else { "" })?;
    Ok(())
}

fn core_ket(record: &OptimizationRecord) -> Result<KetVector, CliError> {
    let amps = record.core.iter().map(|p| C64::new(p[0], p[1])).collect();
    Ok(KetVector::new(record.ansatz.core_basis(), amps)?)
}

fn sweep_cmd(args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let kappas = parse_values(&args.kappa)?;
    kappas.iter().try_for_each(|&k| check_kappa(k))?;
    let spec = args.ansatz.spec()?;
    let config = defaults::optimizer(args.search.starts, args.search.seed);
    let result = sweep(&spec, &kappas, &config)?;
    writeln!(out, "kappa,r_v,v_ng,v_g,photons,local_minimum")?;
    for (r, c) in result.records.iter().zip(&result.curve) {
        let photons = mean_photons(&core_ket(r)?, &r.gaussian.transform()?)?;
        writeln!(out, "{},{},{},{},{},{}", r.kappa, r.r_v, r.v_ng, r.v_g, photons, c.minimum)?;
    }
    Ok(())
}

fn reproduce(args: &ReproduceArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let Recipe::AppendixB = args.recipe;
    let config = defaults::optimizer(args.search.starts, args.search.seed);
    writeln!(out, "{}", appendix_b::EntryCheck::TABLE_HEADER)?;
    let mut failed = 0;
    for entry in appendix_b::entries() {
        let (check, _) = appendix_b::check_entry(&entry, &config)?;
        writeln!(out, "{}", check.table_row())?;
        if !check.passed() {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} of 8 entries outside tolerance")));
    }
    writeln!(out, "all 8 entries within tolerance")?;
    Ok(())
}

fn parse_policy(text: &str) -> Result<Policy, CliError> {
    match text.split_once(':') {
        None if text == "feedforward" => Ok(Policy::Feedforward),
        None if text == "none" => Ok(Policy::None),
        Some(("postselect", eps)) => match eps.parse::<f64>() {
            Ok(e) if e >= 0.0 && e.is_finite() => Ok(Policy::Postselect { epsilon: e }),
            _ => usage(format!("postselection window '{eps}' must be a number >= 0")),
        },
        _ => usage(format!("unknown policy '{text}' (feedforward, postselect:EPS, none)")),
    }
}

fn input_state(text: Option<&str>, grid: GridSpec, modes: usize) -> Result<GridWavefunction, CliError> {
    let (q, p) = match text {
        None => defaults::INPUT_MEAN,
        Some("vacuum") => (0.0, 0.0),
        Some(t) => match t.split_once(':') {
            Some(("coherent", qp)) => parse_pair::<f64>(qp, "coherent input")?,
            _ => return usage(format!("unknown input '{t}' (vacuum, coherent:X,P)")),
        },
    };
    Ok(GridWavefunction::from_fn(grid, modes, |x| {
        x.iter().map(|&t| C64::from_polar((-(t - q).powi(2) / 2.0).exp(), p * t)).product()
    })?
    .normalized()?)
}

fn ancilla_state(text: &str, grid: GridSpec, v: &QuadraturePolynomial) -> Result<GridWavefunction, CliError> {
    let n = v.modes();
    match text.split_once(':') {
        None if text == "vacuum" => input_state(Some("vacuum"), grid, n),
        Some(("ideal", w)) => match w.parse::<f64>() {
            Ok(std) if std > 0.0 => Ok(ideal_ancilla(grid, v, defaults::envelope(std))?),
            _ => usage(format!("ideal ancilla width '{w}' must be positive")),
        },
        Some(("record", file)) => {
            let stored: StoredRecord = ResultStore::read(std::path::Path::new(file))?;
            let Some(record) = stored.record else {
                return usage(format!("{file} holds no optimization record"));
            };
            if n != 2 {
                return usage("record ancillas are two-mode; the Hamiltonian must act on two modes");
            }
            Ok(gaussian_state_to_grid(&core_ket(&record)?, &record.gaussian.transform()?, grid)?)
        }
        _ => usage(format!("unknown ancilla '{text}' (record:FILE, ideal:STD, vacuum)")),
    }
}

fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let expr = parse_hamiltonian(&args.hamiltonian).map_err(|e| CliError::Usage(format!("hamiltonian {e}")))?;
    let v = expr.poly;
    let (points, half_width) = match &args.grid {
        Some(g) => parse_pair::<f64>(g, "--grid").map(|(l, x)| (l as usize, x))?,
        None => (defaults::GRID_POINTS, defaults::GRID_HALF_WIDTH),
    };
    let grid = GridSpec::new(points, half_width).map_err(|e| CliError::Usage(e.to_string()))?;
    let policy = parse_policy(&args.policy)?;
    let scheme = match args.scheme {
        SchemeArg::Qsg => Scheme::Qsg,
        SchemeArg::BeamSplitter => Scheme::BeamSplitter,
    };
    let input = input_state(args.input.as_deref(), grid, v.modes())?;
    let ancilla = ancilla_state(&args.ancilla, grid, &v)?;
    let report: ProtocolReport = protocol_scan(&input, &ancilla, &v, policy, scheme)?;
    writeln!(out, "{}", ProtocolReport::CSV_HEADER)?;
    writeln!(out, "{}", report.csv_row())?;
    let runs = args.runs.unwrap_or(defaults::RUNS);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed.unwrap_or(defaults::SEED));
    let ideal = cvgate::gridsim::apply_phase(&input, &v)?;
    let qs: Vec<String> = (1..=v.modes()).map(|j| format!("q{j}")).collect();
    writeln!(out, "run,{},probability,fidelity", qs.join(","))?;
    let mut last = None;
    for r in 0..runs {
        let (state, outcome) = match scheme {
            Scheme::Qsg => run_protocol(&input, &ancilla, &v, policy, &mut rng)?,
            Scheme::BeamSplitter => {
                let (s, o, _) = cvgate::gridsim::beamsplitter_variant(&input, &ancilla, &v, policy, &mut rng)?;
                (s, o)
            }
        };
        let q: Vec<String> = outcome.q.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{r},{},{},{}", q.join(","), outcome.probability, ideal.fidelity(&state)?)?;
        last = Some(state);
    }
    if let (Some(path), Some(state)) = (&args.snapshot, &last) {
        let mut w = BufWriter::new(File::create(path)?);
        write_snapshot(state, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn cubic_limit(args: &CubicLimitArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = CubicLimitConfig {
        t: args.t.unwrap_or(defaults::LIMIT_T),
        n: args.n.unwrap_or(defaults::LIMIT_N),
        lambda1: parse_values(args.lambda1.as_deref().unwrap_or(defaults::LIMIT_LAMBDA1))?,
        constrained: !args.unconstrained,
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let points = cubic_pair_limit(&config, &defaults::optimizer(args.search.starts, args.search.seed))?;
    write!(out, "{}", limit_csv(&points))?;
    Ok(())
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Benchmark(a) => benchmark(a, out),
        Command::Optimize(a) => optimize(a, out),
        Command::Sweep(a) => sweep_cmd(a, out),
        Command::Reproduce(a) => reproduce(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::CubicLimit(a) => cubic_limit(a, out),
    }
}

/// Parses `args` (without the program name) and runs; returns the exit code.
/// Diagnostics go to `err`.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("cvgate")).chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_lists_and_ranges() {
        assert_eq!(parse_values("0.1,0.2").unwrap(), vec![0.1, 0.2]);
        let r = parse_values("0:0.3:0.1").unwrap();
        assert_eq!(r.len(), 4);
        assert!((r[3] - 0.3).abs() < 1e-12);
        let d = parse_values("1:0.5:0.25").unwrap();
        assert_eq!(d, vec![1.0, 0.75, 0.5]);
        assert!(parse_values("0:1:0").is_err());
        assert!(parse_values("a,b").is_err());
    }

    #[test]
    fn policies() {
        assert_eq!(parse_policy("feedforward").unwrap(), Policy::Feedforward);
        assert_eq!(parse_policy("postselect:0.5").unwrap(), Policy::Postselect { epsilon: 0.5 });
        assert!(parse_policy("postselect:-1").is_err());
        assert!(parse_policy("maybe").is_err());
    }
}
