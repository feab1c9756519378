//! `qlan`: sweeps and audits over the teleportation benchmark library.
//!
//! Every command reads flags and, optionally, a JSON file given with
//! `--config` whose keys are the flag names in snake case. Flags win.
//!
//! Exit codes: 0 success, 1 usage, 2 domain or I/O error, 3 failed audit.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use qlan::benchmark::{self, OptimizerConfig};
use qlan::lan::{self, ScanRow};
use qlan::protocol::{self, EstimatorMode, GadgetConfig, ProtocolRun};
use qlan::schur_weyl::{self, QubitModel};
use qlan::{gaussian, Error};

#[derive(Parser)]
#[command(name = "qlan", version, about = "Teleportation benchmarks for thermal states and qubit ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minmax risk R*(s) next to the brute-force L1 distance.
    BenchmarkCurve(RunConfig),
    /// Stochastic ordering of the amplifier outputs and the risk floor of random preparations.
    StochasticOrderAudit(RunConfig),
    /// Numerical minimisation of the covariant-channel risk over diagonal preparations.
    TauOptimize(RunConfig),
    /// Distances between n qubits and the Gaussian model through T_n and S_n.
    LanConverge(RunConfig),
    /// Monte Carlo risk of the adaptive measure-and-prepare protocol.
    ProtocolRisk(RunConfig),
    /// Risk of the Gaussian scheme built from the protocol, with itemised slack.
    LowerBound(RunConfig),
    /// Block decomposition of the n-qubit state.
    BlocksInspect(RunConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    /// JSON file with default values for any of the other options.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Thermal parameters: a comma list or start:stop:step.
    #[arg(long, allow_hyphen_values = true)]
    s_grid: Option<SGrid>,
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    /// Bloch length of the centre of the local model.
    #[arg(long)]
    r0: Option<f64>,
    /// Local parameter u as x,y,z.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    u: Option<Vec<f64>>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Fock truncation.
    #[arg(long)]
    fock_n: Option<usize>,
    #[arg(long)]
    grid_bins: Option<usize>,
    /// Number of preparation levels (or largest k for the ordering audit).
    #[arg(long)]
    tau_k: Option<usize>,
    /// Monte Carlo samples.
    #[arg(long)]
    mc: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

/// A list of `s` values, given as `a,b,c` or `start:stop:step`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum SGrid {
    List(Vec<f64>),
    Text(String),
}

impl std::str::FromStr for SGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(SGrid::Text(s.to_string()))
    }
}

impl SGrid {
    fn values(&self) -> Result<Vec<f64>, CliError> {
        let text = match self {
            SGrid::List(v) => return Ok(v.clone()),
            SGrid::Text(s) => s.trim(),
        };
        if text.is_empty() {
            return Ok(vec![]);
        }
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad number {t:?} in s grid")));
        if text.contains(':') {
            let parts: Vec<&str> = text.split(':').collect();
            if parts.len() != 3 {
                return Err(CliError::Usage(format!("s grid {text:?} is not start:stop:step")));
            }
            let (a, b, h) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(h > 0.0) {
                return Err(CliError::Usage("s grid step must be positive".into()));
            }
            let count = ((b - a) / h + 1e-9).floor();
            if count < 0.0 {
                return Ok(vec![]);
            }
            // index times step so the grid does not drift
            return Ok((0..=count as usize).map(|i| a + i as f64 * h).map(|x| (x * 1e12).round() / 1e12).collect());
        }
        text.split(',').map(num).collect()
    }
}

impl RunConfig {
    fn merged(self) -> Result<Self, CliError> {
        let Some(path) = self.config.clone() else { return Ok(self) };
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let file: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Ok(RunConfig {
            config: Some(path),
            s_grid: self.s_grid.or(file.s_grid),
            n_list: self.n_list.or(file.n_list),
            r0: self.r0.or(file.r0),
            u: self.u.or(file.u),
            epsilon: self.epsilon.or(file.epsilon),
            delta: self.delta.or(file.delta),
            fock_n: self.fock_n.or(file.fock_n),
            grid_bins: self.grid_bins.or(file.grid_bins),
            tau_k: self.tau_k.or(file.tau_k),
            mc: self.mc.or(file.mc),
            seed: self.seed.or(file.seed),
            mode: self.mode.or(file.mode),
            out: self.out.or(file.out),
            format: self.format.or(file.format),
        })
    }

    fn s_values(&self, default: &[f64]) -> Result<Vec<f64>, CliError> {
        let v = match &self.s_grid {
            Some(g) => g.values()?,
            None => default.to_vec(),
        };
        if v.is_empty() {
            return Err(CliError::Usage("empty s grid".into()));
        }
        Ok(v)
    }

    fn n_values(&self, default: &[usize]) -> Result<Vec<usize>, CliError> {
        let v = self.n_list.clone().unwrap_or_else(|| default.to_vec());
        if v.is_empty() {
            return Err(CliError::Usage("empty n list".into()));
        }
        Ok(v)
    }

    fn u(&self) -> Result<[f64; 3], CliError> {
        match &self.u {
            None => Ok([0.0; 3]),
            Some(v) if v.len() == 3 => Ok([v[0], v[1], v[2]]),
            Some(v) => Err(CliError::Usage(format!("--u needs three components, got {}", v.len()))),
        }
    }

    fn seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Usage("this command is stochastic and needs --seed".into()))
    }

    fn format(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
    Io(std::io::Error),
    Audit(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(Error::Config(_) | Error::Precondition(_)) => 1,
            CliError::Core(Error::Invariant(_)) => 3,
            CliError::Core(_) | CliError::Io(_) => 2,
            CliError::Audit(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "I/O error: {e}"),
            CliError::Audit(m) => write!(f, "audit failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn emit(cfg: &RunConfig, text: &str) -> Result<(), CliError> {
    match &cfg.out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable output");
    s.push('\n');
    s
}

fn csv<I: IntoIterator<Item = String>>(header: &str, rows: I) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn with_row<T>(s: f64, r: qlan::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| match e {
        Error::Domain(m) => CliError::Core(Error::Domain(format!("row s={s}: {m}"))),
        other => CliError::Core(other),
    })
}

#[derive(Serialize)]
struct CurveRow {
    s: f64,
    m0: usize,
    r_star: f64,
    brute_force_l1: f64,
    abs_err: f64,
    #[serde(skip)]
    tail: f64,
}

const CURVE_TOL: f64 = 1e-10;

fn benchmark_curve(cfg: &RunConfig) -> Result<(), CliError> {
    let default: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    let grid = cfg.s_values(&default)?;
    let n = cfg.fock_n.unwrap_or(500);
    let rows: Vec<CurveRow> = grid
        .par_iter()
        .map(|&s| {
            let r_star = with_row(s, benchmark::optimal_risk(s))?;
            let m0 = with_row(s, benchmark::crossover_m0(s))?;
            let bf = with_row(s, benchmark::geometric_l1(s, 1.0 / (2.0 - s), n))?;
            Ok(CurveRow { s, m0, r_star, brute_force_l1: bf.value, abs_err: (r_star - bf.value).abs(), tail: bf.tail })
        })
        .collect::<Result<_, CliError>>()?;
    let text = match cfg.format(Format::Csv) {
        Format::Csv => csv(
            "s,m0,R_star,brute_force_L1,abs_err",
            rows.iter().map(|r| format!("{},{},{:.15e},{:.15e},{:.3e}", r.s, r.m0, r.r_star, r.brute_force_l1, r.abs_err)),
        ),
        Format::Json => to_json(&rows),
    };
    emit(cfg, &text)?;
    for r in rows.iter().filter(|r| r.abs_err >= CURVE_TOL) {
        eprintln!("note: s={}: |R* - L1| = {:.3e} from {n} levels; omitted tail up to {:.3e}", r.s, r.abs_err, r.tail);
    }
    if let Some(bad) = rows.iter().find(|r| !(r.abs_err < CURVE_TOL + r.tail)) {
        return Err(CliError::Audit(format!("s={}: |R* - L1| = {:e} beyond the truncation tail", bad.s, bad.abs_err)));
    }
    Ok(())
}

fn order_audit(cfg: &RunConfig) -> Result<(), CliError> {
    let default: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
    let grid = cfg.s_values(&default)?;
    let k_max = cfg.tau_k.unwrap_or(40);
    let m_max = cfg.fock_n.unwrap_or(400);
    let samples = cfg.mc.unwrap_or(100);
    let seed = cfg.seed()?;
    let results: Vec<_> = grid
        .par_iter()
        .map(|&s| {
            let v = with_row(s, benchmark::order_audit(s, k_max, m_max))?;
            let f = with_row(s, benchmark::floor_audit(s, k_max + 1, m_max + 1, samples, seed, 1e-9))?;
            Ok((v, f))
        })
        .collect::<Result<_, CliError>>()?;
    let order: usize = results.iter().map(|r| r.0.len()).sum();
    let floor: usize = results.iter().map(|r| r.1.violations).sum();
    let text = match cfg.format(Format::Json) {
        Format::Json => to_json(&json!({
            "k_max": k_max,
            "m_max": m_max,
            "tau_samples": samples,
            "seed": seed,
            "order_violations": results.iter().flat_map(|r| r.0.clone()).collect::<Vec<_>>(),
            "floor": results.iter().map(|r| r.1).collect::<Vec<_>>(),
            "passed": order + floor == 0,
        })),
        Format::Csv => csv(
            "s,k_max,m_max,order_violations,witness_k,witness_m,tau_samples,min_risk,R_star,floor_violations",
            results.iter().map(|(v, f)| {
                let (wk, wm) = v.first().map_or((String::new(), String::new()), |w| (w.k.to_string(), w.m.to_string()));
                format!(
                    "{},{k_max},{m_max},{},{wk},{wm},{samples},{:.15e},{:.15e},{}",
                    f.s,
                    v.len(),
                    f.min_risk,
                    f.benchmark,
                    f.violations
                )
            }),
        ),
    };
    emit(cfg, &text)?;
    if order + floor > 0 {
        let first = results.iter().flat_map(|r| r.0.first()).next();
        return Err(CliError::Audit(format!(
            "{order} ordering violations (first {first:?}), {floor} preparations below R*"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct TauRow {
    s: f64,
    k: usize,
    n: usize,
    vacuum_weight: f64,
    risk: f64,
    r_star: f64,
    abs_err: f64,
    converged: bool,
    iterations: usize,
    tau: Vec<f64>,
}

fn tau_optimize(cfg: &RunConfig) -> Result<(), CliError> {
    let grid = cfg.s_values(&[0.3, 0.5, 0.9])?;
    let k = cfg.tau_k.unwrap_or(8);
    let n = cfg.fock_n.unwrap_or(500);
    let opt = OptimizerConfig { seed: cfg.seed()?, ..Default::default() };
    let rows: Vec<TauRow> = grid
        .iter()
        .map(|&s| {
            let r = with_row(s, benchmark::minimize_over_tau(s, k, n, &opt))?;
            let r_star = with_row(s, benchmark::optimal_risk(s))?;
            Ok(TauRow {
                s,
                k,
                n,
                vacuum_weight: r.tau[0],
                risk: r.risk,
                r_star,
                abs_err: (r.risk - r_star).abs(),
                converged: r.converged,
                iterations: r.iterations,
                tau: r.tau,
            })
        })
        .collect::<Result<_, CliError>>()?;
    let text = match cfg.format(Format::Json) {
        Format::Json => to_json(&rows),
        Format::Csv => csv(
            "s,K,N,vacuum_weight,risk,R_star,abs_err,converged,iterations",
            rows.iter().map(|r| {
                format!(
                    "{},{},{},{:.12},{:.15e},{:.15e},{:.3e},{},{}",
                    r.s, r.k, r.n, r.vacuum_weight, r.risk, r.r_star, r.abs_err, r.converged, r.iterations
                )
            }),
        ),
    };
    emit(cfg, &text)?;
    if let Some(r) = rows.iter().find(|r| r.vacuum_weight < 0.999 || r.abs_err > 1e-6) {
        return Err(CliError::Audit(format!(
            "s={}: vacuum weight {} and risk gap {:e}",
            r.s, r.vacuum_weight, r.abs_err
        )));
    }
    Ok(())
}

fn lan_converge(cfg: &RunConfig) -> Result<(), CliError> {
    let ns = cfg.n_values(&[16, 32, 64, 128])?;
    let u = cfg.u()?;
    let r0 = cfg.r0.unwrap_or(0.5);
    let bins = cfg.grid_bins.unwrap_or(lan::DEFAULT_GRID_BINS);
    let eps = cfg.epsilon.unwrap_or(protocol::DEFAULT_EPSILON);
    let seed = cfg.seed.unwrap_or(0);
    let rows: Vec<ScanRow> = ns
        .iter()
        .map(|&n| lan::lan_distances(n, u, r0, bins, cfg.fock_n, eps, seed))
        .collect::<Result<_, Error>>()?;
    for r in rows.iter().filter(|r| !r.in_model) {
        eprintln!("warning: n={}: |u| exceeds n^epsilon = {:.4}; outside the local model", r.n, (r.n as f64).powf(eps));
    }
    let text = match cfg.format(Format::Csv) {
        Format::Csv => csv(lan::SCAN_CSV_HEADER, rows.iter().map(ScanRow::csv)),
        Format::Json => to_json(&rows),
    };
    emit(cfg, &text)
}

fn protocol_risk(cfg: &RunConfig) -> Result<(), CliError> {
    let ns = cfg.n_values(&[100, 200, 400])?;
    let u = cfg.u()?;
    let r0 = cfg.r0.unwrap_or(0.5);
    let eps = cfg.epsilon.unwrap_or(protocol::DEFAULT_EPSILON);
    let mc = cfg.mc.unwrap_or(200);
    let seed = cfg.seed()?;
    let bins = cfg.grid_bins.unwrap_or(lan::DEFAULT_GRID_BINS);
    let mode = match cfg.mode.unwrap_or(Mode::Exact) {
        Mode::Exact => EstimatorMode::Exact,
        Mode::Sampled => EstimatorMode::Sampled,
    };
    let reports: Vec<protocol::RiskReport> = ns
        .iter()
        .map(|&n| {
            let model = QubitModel::new(r0, u, n)?;
            let lan_cfg = lan::LanConfig::new(n, r0, u, bins, cfg.fock_n)?;
            let run = ProtocolRun::with_config(model, eps, mc, seed, lan_cfg, mode)?;
            protocol::run_map_protocol(&run)
        })
        .collect::<Result<_, Error>>()?;
    let text = match cfg.format(Format::Json) {
        Format::Json => to_json(&reports),
        Format::Csv => csv(
            "n,r0,u_x,u_y,u_z,s,risk,stderr,benchmark,seed,config_hash",
            reports.iter().map(|r| {
                format!(
                    "{},{},{},{},{},{},{:.15e},{:.15e},{:.15e},{},{}",
                    r.n, r.r0, r.u[0], r.u[1], r.u[2], r.s, r.risk, r.stderr, r.benchmark, r.seed, r.config_hash
                )
            }),
        ),
    };
    emit(cfg, &text)
}

fn lower_bound(cfg: &RunConfig) -> Result<(), CliError> {
    let s_list = match &cfg.s_grid {
        Some(_) => cfg.s_values(&[])?,
        None => vec![gaussian::s_from_bloch_length(cfg.r0.unwrap_or(0.5))],
    };
    let ns = cfg.n_values(&[256])?;
    let seed = cfg.seed()?;
    let mut reports = Vec::new();
    for &s in &s_list {
        for &n in &ns {
            let g = GadgetConfig {
                epsilon: cfg.epsilon.unwrap_or(protocol::DEFAULT_EPSILON),
                mc_samples: cfg.mc.unwrap_or(64),
                seed,
                grid_bins: cfg.grid_bins.unwrap_or(1024),
                ..GadgetConfig::new(s, cfg.delta.unwrap_or(protocol::DEFAULT_DELTA), n)
            };
            reports.push(with_row(s, protocol::lower_bound_gadget(&g, &protocol::OptimalMap))?);
        }
    }
    let text = match cfg.format(Format::Json) {
        Format::Json => to_json(&reports),
        Format::Csv => csv(
            "s,delta,n,seed,risk,stderr,ideal_risk,benchmark,total_slack,bound_holds,slack_small",
            reports.iter().map(|r| {
                format!(
                    "{},{},{},{},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{},{}",
                    r.s, r.delta, r.n, r.seed, r.risk, r.stderr, r.ideal_risk, r.benchmark, r.total_slack, r.bound_holds, r.slack_small
                )
            }),
        ),
    };
    emit(cfg, &text)?;
    if let Some(r) = reports.iter().find(|r| !r.bound_holds) {
        return Err(CliError::Audit(format!("n={}: risk {} below R* - slack", r.n, r.risk)));
    }
    Ok(())
}

/// Largest deviation between the fast decomposition and the coupled-basis oracle.
fn oracle_deviation(fast: &schur_weyl::BlockDecomposition, slow: &schur_weyl::BlockDecomposition) -> f64 {
    let mut worst: f64 = 0.0;
    for b in &slow.blocks {
        match fast.block(b.two_j) {
            Some(f) => {
                worst = worst.max((f.probability - b.probability).abs());
                let scaled = |m: &qlan::linalg::CMatrix, p: f64| m * qlan::linalg::c(p, 0.0);
                worst = worst.max(qlan::linalg::max_abs(&(scaled(&f.rho, f.probability) - scaled(&b.rho, b.probability))));
            }
            None => worst = worst.max(b.probability),
        }
    }
    worst
}

fn blocks_inspect(cfg: &RunConfig) -> Result<(), CliError> {
    let n = cfg.n_values(&[2])?[0];
    let model = QubitModel::new(cfg.r0.unwrap_or(0.5), cfg.u()?, n)?;
    let d = schur_weyl::decompose(&model, 0.0)?;
    let mut v = d.to_json();
    let mut deviation = None;
    if n <= 8 {
        let slow = schur_weyl::brute_force_decompose(&model.qubit_state(), n)?;
        deviation = Some(oracle_deviation(&d, &slow));
    }
    v["mu"] = json!(model.mu());
    v["oracle_checked"] = json!(deviation.is_some());
    v["oracle_max_deviation"] = json!(deviation);
    emit(cfg, &to_json(&v))?;
    match deviation {
        Some(dev) if dev > 1e-10 => Err(CliError::Audit(format!("decomposition differs from the oracle by {dev:e}"))),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::BenchmarkCurve(c) => benchmark_curve(&c.merged()?),
        Command::StochasticOrderAudit(c) => order_audit(&c.merged()?),
        Command::TauOptimize(c) => tau_optimize(&c.merged()?),
        Command::LanConverge(c) => lan_converge(&c.merged()?),
        Command::ProtocolRisk(c) => protocol_risk(&c.merged()?),
        Command::LowerBound(c) => lower_bound(&c.merged()?),
        Command::BlocksInspect(c) => blocks_inspect(&c.merged()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qlan: {e}");
            ExitCode::from(e.code())
        }
    }
}
