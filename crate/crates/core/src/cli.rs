//! Batch front-end: one subcommand per experiment family.
//!
//! Every subcommand reads a parameter block (built-in defaults, replaced by
//! `--config` and then patched by flags), runs the mapped operation and emits
//! either a long-format CSV table or a JSON document. Both carry the resolved
//! run configuration and the tool version.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid flags or configuration,
//! 3 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::charfun::{
    bernstein_approximation, concentration_bound, decay_exponent_fit, quadratic_log_bound,
    taylor_remainder_check, PsiForm, ShellWeights, SignChain,
};
use crate::error::{invalid, Error, Result};
use crate::experiments::{
    ils_strong_disorder, ils_thin_tail, msa_run, thin_tail_exact, wegner_exact, wegner_experiment,
    MsaConfig, MsaParams, StrongDisorderConfig, ThinTailConfig, WegnerConfig,
};
use crate::lattice::{Ball, Site};
use crate::model::{sample_field, AmplitudeDistribution, Background, FieldSample, InteractionPotential};
use crate::rng::StreamId;
use crate::spectral::{
    assemble_hamiltonian, dos_histogram, efc_profile, eigensystem, plateau_decompose, EnsembleConfig,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const TOOL: &str = env!("CARGO_PKG_NAME");
/// Environment variable consulted when `--threads` is absent.
pub const THREADS_ENV: &str = "SCREENED_ANDERSON_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "screened-anderson", version, about = "Screened Anderson model laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON parameter block for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Existing directory receiving `<subcommand>.csv` / `<subcommand>.json`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// |φ_S(t)| of the full shell sum and its fitted decay exponent.
    Charfun(CharfunArgs),
    /// Fourier bound on the probability of a short interval.
    Concentration(ConcentrationArgs),
    /// Ensemble density of states.
    Dos(EnsembleArgs),
    /// Plateau decomposition of one sampled box Hamiltonian.
    Decompose(DecomposeArgs),
    /// Finite-volume Wegner estimate against exact enumeration.
    Wegner,
    /// Initial scale estimate through thin tails.
    IlsThin,
    /// Initial scale estimate at strong disorder.
    IlsStrong,
    /// Multiscale analysis step.
    Msa,
    /// Ensemble eigenfunction correlator profile.
    Efc(EnsembleArgs),
    /// Brute-force oracle suite.
    Selftest,
}

#[derive(Debug, Args)]
pub struct CharfunArgs {
    #[arg(long)]
    pub dist: Option<AmplitudeDistribution>,
    #[arg(long = "d")]
    pub dim: Option<usize>,
    #[arg(long = "A")]
    pub exponent: Option<f64>,
    #[arg(long)]
    pub ups: Option<f64>,
    #[arg(long)]
    pub tmin: Option<f64>,
    #[arg(long)]
    pub tmax: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ConcentrationArgs {
    #[arg(long)]
    pub dist: Option<AmplitudeDistribution>,
    #[arg(long = "d")]
    pub dim: Option<usize>,
    #[arg(long = "A")]
    pub exponent: Option<f64>,
    #[arg(long)]
    pub ups: Option<f64>,
    #[arg(long = "M")]
    pub m: Option<u64>,
    #[arg(long = "N")]
    pub n: Option<u64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub dist: Option<AmplitudeDistribution>,
    #[arg(long = "d")]
    pub dim: Option<usize>,
    #[arg(long = "L")]
    pub radius: Option<u64>,
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long = "L")]
    pub radius: Option<u64>,
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Charfun(_) => "charfun",
            Command::Concentration(_) => "concentration",
            Command::Dos(_) => "dos",
            Command::Decompose(_) => "decompose",
            Command::Wegner => "wegner",
            Command::IlsThin => "ils-thin",
            Command::IlsStrong => "ils-strong",
            Command::Msa => "msa",
            Command::Efc(_) => "efc",
            Command::Selftest => "selftest",
        }
    }
}

/// Everything needed to reproduce a run; embedded in every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub master_seed: u64,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharfunParams {
    pub distribution: AmplitudeDistribution,
    pub dim: usize,
    pub potential: InteractionPotential,
    /// Last explicit shell; `None` takes the first with `𝔞_N t_max <= 10^{-3}`.
    pub n: Option<u64>,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl Default for CharfunParams {
    fn default() -> Self {
        CharfunParams {
            distribution: AmplitudeDistribution::BernoulliSym,
            dim: 1,
            potential: InteractionPotential::piecewise(2.0, 1.0).expect("valid"),
            n: None,
            t_min: 1e2,
            t_max: 1e6,
            points: 200,
        }
    }
}

impl CharfunParams {
    pub fn last_shell(&self) -> u64 {
        self.n.unwrap_or_else(|| {
            let r = (1e3 * self.t_max).powf(1.0 / self.potential.exponent);
            let mut n = 1u64;
            while (self.potential.shell_radius(n) as f64) < r {
                n *= 2;
            }
            n
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationParams {
    pub distribution: AmplitudeDistribution,
    pub dim: usize,
    pub potential: InteractionPotential,
    pub m: u64,
    pub n: u64,
    pub center: f64,
    pub eps: f64,
    pub theta: f64,
    #[serde(default)]
    pub t0: Option<f64>,
}

impl Default for ConcentrationParams {
    fn default() -> Self {
        ConcentrationParams {
            distribution: AmplitudeDistribution::BernoulliSym,
            dim: 1,
            potential: InteractionPotential::piecewise(2.0, 1.0).expect("valid"),
            m: 1,
            n: 64,
            center: 0.0,
            eps: 0.05,
            theta: 1.0,
            t0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosParams {
    pub ensemble: EnsembleConfig,
    pub bins: usize,
    #[serde(default)]
    pub range: Option<(f64, f64)>,
}

fn default_ensemble() -> EnsembleConfig {
    EnsembleConfig {
        dim: 1,
        radius: 12,
        potential: InteractionPotential::piecewise(2.0, 1.0).expect("valid"),
        distribution: AmplitudeDistribution::Uniform01,
        g: 50.0,
        r_max: 30,
        samples: 1000,
    }
}

impl Default for DosParams {
    fn default() -> Self {
        DosParams {
            ensemble: default_ensemble(),
            bins: 50,
            range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfcParams {
    pub ensemble: EnsembleConfig,
    pub distances: Vec<u64>,
    /// Energy window; the whole spectrum when absent.
    #[serde(default)]
    pub window: Option<(f64, f64)>,
}

impl Default for EfcParams {
    fn default() -> Self {
        EfcParams {
            ensemble: default_ensemble(),
            distances: (0..=12).collect(),
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposeParams {
    pub dim: usize,
    pub radius: u64,
    pub potential: InteractionPotential,
    pub distribution: AmplitudeDistribution,
    pub g: f64,
    pub r_max: u64,
    /// Shift applied to the first plateau amplitude for the eigenvalue check.
    pub delta: f64,
}

impl Default for DecomposeParams {
    fn default() -> Self {
        DecomposeParams {
            dim: 1,
            radius: 2,
            potential: InteractionPotential::piecewise(2.0, 3.0).expect("valid"),
            distribution: AmplitudeDistribution::Uniform01,
            g: 10.0,
            r_max: 40,
            delta: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThinTailParams {
    #[serde(flatten)]
    pub config: ThinTailConfig,
    /// Also enumerate the region exactly (atomic laws, small regions).
    #[serde(default)]
    pub exact: bool,
}

pub fn default_wegner() -> WegnerConfig {
    WegnerConfig {
        dim: 1,
        radius: 2,
        tau: 3.4,
        theta: 1.0,
        energies: vec![0.0, 2.0, 4.0],
        trials: 10_000,
        distribution: AmplitudeDistribution::BernoulliSym,
        potential: InteractionPotential::piecewise(2.0, 3.0).expect("valid"),
        g: 20.0,
        r_max: 40,
        confidence: 0.99,
    }
}

pub fn default_thin_tail() -> ThinTailParams {
    ThinTailParams {
        config: ThinTailConfig {
            dim: 1,
            l0: 4,
            theta: 0.5,
            kappa: 0.5,
            distribution: AmplitudeDistribution::BernoulliP { p: 0.2 },
            potential: InteractionPotential::piecewise(2.0, 1.0).expect("valid"),
            g: 20.0,
            trials: 100_000,
            confidence: 0.95,
        },
        exact: false,
    }
}

pub fn default_strong_disorder() -> StrongDisorderConfig {
    StrongDisorderConfig {
        dim: 1,
        radius: 4,
        eps: 1.0,
        kappa: 0.5,
        distribution: AmplitudeDistribution::Uniform01,
        potential: InteractionPotential::piecewise(3.0, 1.0).expect("valid"),
        r_max: 30,
        trials: 2000,
        conditioning: None,
        grid_spacing: None,
        g: None,
        confidence: 0.95,
    }
}

pub fn default_msa() -> MsaConfig {
    MsaConfig {
        params: MsaParams {
            a: 3.0,
            d: 1,
            b: 1.5,
            tau: 1.2,
            alpha: 1.4,
            s: 22,
            theta: 0.1,
            m: 1.0,
            l0: 6,
        },
        g: 1000.0,
        energy: 1700.0,
        distribution: AmplitudeDistribution::Uniform01,
        ups: 1.0,
        r_max: 60,
        m_ext: 2,
        trials: 1000,
        k_max: 1,
        confidence: 0.95,
    }
}

/// Long-format table plus the full result.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub result: Value,
}

impl Output {
    pub fn to_csv(&self, run: &RunConfig) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {} {}", run.tool, run.version);
        let _ = writeln!(s, "# config: {}", serde_json::to_string(run).expect("serializable"));
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self, run: &RunConfig) -> String {
        let doc = json!({ "config": run, "result": self.result });
        let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
        s.push('\n');
        s
    }
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            Error::Io(io) => CliError::Io(io.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn site(s: &Site) -> String {
    s.0.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("serializable")
}

fn load<T: DeserializeOwned>(path: Option<&Path>, default: impl FnOnce() -> T) -> Result<T, CliError> {
    match path {
        None => Ok(default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("malformed config {}: {e}", p.display())))
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{THREADS_ENV} must be a thread count, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Some(dir) = &cli.out {
        if !dir.is_dir() {
            return Err(CliError::Config(format!("output directory {} does not exist", dir.display())));
        }
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(CliError::Config("thread count must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Io(e.to_string()))?;
    let (params, output) = pool.install(|| dispatch(cli))?;
    let run = RunConfig {
        tool: TOOL.into(),
        version: VERSION.into(),
        subcommand: cli.command.name().into(),
        master_seed: cli.seed,
        format: cli.format,
        output: cli.out.clone(),
        params,
    };
    emit(cli, &run, &output)?;
    if let Command::Selftest = cli.command {
        if output.result["passed"] != Value::Bool(true) {
            return Err(CliError::Numerical("selftest failed".into()));
        }
    }
    Ok(())
}

fn emit(cli: &Cli, run: &RunConfig, output: &Output) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    match &cli.out {
        None => {
            let text = match cli.format {
                Format::Csv => output.to_csv(run),
                Format::Json => output.to_json(run),
            };
            print!("{text}");
        }
        Some(dir) => {
            let stem = cli.command.name();
            // JSON is the full-fidelity record and is always written.
            std::fs::write(dir.join(format!("{stem}.json")), output.to_json(run)).map_err(io)?;
            if cli.format == Format::Csv {
                std::fs::write(dir.join(format!("{stem}.csv")), output.to_csv(run)).map_err(io)?;
            }
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(Value, Output), CliError> {
    let cfg = cli.config.as_deref();
    let seed = cli.seed;
    match &cli.command {
        Command::Charfun(a) => {
            let mut p: CharfunParams = load(cfg, CharfunParams::default)?;
            if let Some(d) = a.dist {
                p.distribution = d;
            }
            if let Some(d) = a.dim {
                p.dim = d;
            }
            if let Some(x) = a.exponent {
                p.potential.exponent = x;
            }
            if let Some(u) = a.ups {
                p.potential = InteractionPotential::piecewise(p.potential.exponent, u)?;
            }
            if let Some(t) = a.tmin {
                p.t_min = t;
            }
            if let Some(t) = a.tmax {
                p.t_max = t;
            }
            if let Some(n) = a.points {
                p.points = n;
            }
            Ok((to_value(&p), charfun(&p)?))
        }
        Command::Concentration(a) => {
            let mut p: ConcentrationParams = load(cfg, ConcentrationParams::default)?;
            if let Some(d) = a.dist {
                p.distribution = d;
            }
            if let Some(d) = a.dim {
                p.dim = d;
            }
            if let Some(x) = a.exponent {
                p.potential.exponent = x;
            }
            if let Some(u) = a.ups {
                p.potential = InteractionPotential::piecewise(p.potential.exponent, u)?;
            }
            if let Some(m) = a.m {
                p.m = m;
            }
            if let Some(n) = a.n {
                p.n = n;
            }
            if let Some(e) = a.eps {
                p.eps = e;
            }
            if let Some(t) = a.theta {
                p.theta = t;
            }
            Ok((to_value(&p), concentration(&p)?))
        }
        Command::Dos(a) => {
            let mut p: DosParams = load(cfg, DosParams::default)?;
            patch_ensemble(&mut p.ensemble, a);
            Ok((to_value(&p), dos(&p, seed)?))
        }
        Command::Efc(a) => {
            let mut p: EfcParams = load(cfg, EfcParams::default)?;
            patch_ensemble(&mut p.ensemble, a);
            Ok((to_value(&p), efc(&p, seed)?))
        }
        Command::Decompose(a) => {
            let mut p: DecomposeParams = load(cfg, DecomposeParams::default)?;
            if let Some(l) = a.radius {
                p.radius = l;
            }
            if let Some(g) = a.g {
                p.g = g;
            }
            if let Some(d) = a.delta {
                p.delta = d;
            }
            Ok((to_value(&p), decompose(&p, seed)?))
        }
        Command::Wegner => {
            let p: WegnerConfig = load(cfg, default_wegner)?;
            Ok((to_value(&p), wegner(&p, seed)?))
        }
        Command::IlsThin => {
            let p: ThinTailParams = load(cfg, default_thin_tail)?;
            Ok((to_value(&p), ils_thin(&p, seed)?))
        }
        Command::IlsStrong => {
            let p: StrongDisorderConfig = load(cfg, default_strong_disorder)?;
            Ok((to_value(&p), ils_strong(&p, seed)?))
        }
        Command::Msa => {
            let p: MsaConfig = load(cfg, default_msa)?;
            Ok((to_value(&p), msa(&p, seed)?))
        }
        Command::Selftest => Ok((Value::Null, selftest(seed)?)),
    }
}

fn patch_ensemble(e: &mut EnsembleConfig, a: &EnsembleArgs) {
    if let Some(d) = a.dist {
        e.distribution = d;
    }
    if let Some(d) = a.dim {
        e.dim = d;
    }
    if let Some(l) = a.radius {
        e.radius = l;
    }
    if let Some(g) = a.g {
        e.g = g;
    }
    if let Some(n) = a.samples {
        e.samples = n;
    }
}

/// Columns `t,log_inv_modulus`.
pub fn charfun(p: &CharfunParams) -> Result<Output> {
    p.distribution.validate()?;
    if !(p.t_min > 0.0 && p.t_max > p.t_min) || p.points < 2 {
        return Err(invalid("need 0 < t_min < t_max and at least two points"));
    }
    let n = p.last_shell();
    let weights = ShellWeights::shells(&p.potential, p.dim, 0, n)?.with_tail();
    let (fit, ts, logs) = decay_exponent_fit(&p.distribution, &weights, p.t_min, p.t_max, p.points)?;
    let rows = ts.iter().zip(&logs).map(|(t, l)| vec![num(*t), num(*l)]).collect();
    Ok(Output {
        columns: vec!["t", "log_inv_modulus"],
        rows,
        result: json!({
            "last_shell": n,
            "slope": fit.slope,
            "intercept": fit.intercept,
            "target": p.dim as f64 / p.potential.exponent,
            "fit": fit,
            "t": ts,
            "log_inv_modulus": logs,
        }),
    })
}

/// One row with the pieces of the bound.
pub fn concentration(p: &ConcentrationParams) -> Result<Output> {
    p.distribution.validate()?;
    let weights = ShellWeights::shells(&p.potential, p.dim, p.m, p.n)?;
    let b = concentration_bound(&p.distribution, &weights, p.center, p.eps, p.theta, p.t0)?;
    Ok(Output {
        columns: vec!["center", "eps", "threshold", "cal_t", "j1", "j2", "bound", "quadrature_error", "fitted_c"],
        rows: vec![vec![
            num(b.center),
            num(b.eps),
            num(b.threshold),
            num(b.cal_t),
            num(b.j1),
            num(b.j2),
            num(b.bound),
            num(b.quadrature_error),
            num(b.fitted_c),
        ]],
        result: to_value(&b),
    })
}

/// Columns `lo,hi,density`.
pub fn dos(p: &DosParams, seed: u64) -> Result<Output> {
    let h = dos_histogram(&p.ensemble, seed, p.bins, p.range)?;
    let rows = h
        .edges
        .windows(2)
        .zip(&h.density)
        .map(|(w, d)| vec![num(w[0]), num(w[1]), num(*d)])
        .collect();
    Ok(Output {
        columns: vec!["lo", "hi", "density"],
        rows,
        result: to_value(&h),
    })
}

/// Columns `r,mean,std_error`.
pub fn efc(p: &EfcParams, seed: u64) -> Result<Output> {
    let window = p.window.unwrap_or((f64::MIN, f64::MAX));
    let prof = efc_profile(&p.ensemble, seed, &p.distances, window)?;
    let rows = prof
        .distances
        .iter()
        .zip(prof.mean.iter().zip(&prof.std_error))
        .map(|(r, (m, s))| vec![r.to_string(), num(*m), num(*s)])
        .collect();
    Ok(Output {
        columns: vec!["r", "mean", "std_error"],
        rows,
        result: to_value(&prof),
    })
}

/// Columns `site,weight,omega`; the result adds the eigenvalue shift check.
pub fn decompose(p: &DecomposeParams, seed: u64) -> Result<Output> {
    p.potential.validate(p.dim)?;
    let dom = Ball::centered(p.dim, p.radius);
    let region = Ball::centered(p.dim, p.radius + p.r_max);
    let field = sample_field(
        &p.distribution,
        &region,
        StreamId::new(seed, "decompose", 0),
        Background::FrozenZero,
    );
    let exterior: Vec<Site> = region.sites().into_iter().filter(|y| !dom.contains(y)).collect();
    let dec = plateau_decompose(&dom, &p.potential, &field, p.g, &exterior, p.r_max)?;
    let rows = dec
        .plateau_sites
        .iter()
        .zip(&dec.plateau_weights)
        .map(|(y, w)| vec![site(y), num(*w), num(field.get(y).unwrap_or(f64::NAN))])
        .collect();
    let shift = match dec.plateau_sites.first() {
        None => Value::Null,
        Some(y) => {
            let mut moved = field.clone();
            moved.set(y, field.get(y).unwrap_or(0.0) + p.delta)?;
            let before = eigensystem(&dec.h.matrix)?;
            let after = eigensystem(&assemble_hamiltonian(&dom, &p.potential, &moved, p.g, Some(p.r_max))?.matrix)?;
            let expected = p.g * dec.plateau_weights[0] * p.delta;
            let defect = before
                .eigenvalues
                .iter()
                .zip(&after.eigenvalues)
                .map(|(a, b)| (b - a - expected).abs())
                .fold(0.0, f64::max);
            json!({ "site": y, "expected_shift": expected, "max_shift_defect": defect })
        }
    };
    Ok(Output {
        columns: vec!["site", "weight", "omega"],
        rows,
        result: json!({ "decomposition": dec.summary(), "shift_check": shift }),
    })
}

/// Frozen amplitudes on `B_{L + r_max}` drawn from the master seed.
pub fn wegner_frozen(cfg: &WegnerConfig, seed: u64) -> FieldSample {
    sample_field(
        &cfg.distribution,
        &Ball::centered(cfg.dim, cfg.radius + cfg.r_max),
        StreamId::new(seed, "wegner-frozen", 0),
        Background::FrozenZero,
    )
}

/// Columns `energy,successes,trials,estimate,lower,upper,exact,exact_in_ci,pass`.
pub fn wegner(cfg: &WegnerConfig, seed: u64) -> Result<Output> {
    let frozen = wegner_frozen(cfg, seed);
    let rep = wegner_experiment(cfg, &frozen, seed)?;
    let rows = rep
        .points
        .iter()
        .map(|pt| {
            vec![
                num(pt.energy),
                pt.empirical.successes.to_string(),
                pt.empirical.trials.to_string(),
                num(pt.empirical.estimate),
                num(pt.empirical.lower),
                num(pt.empirical.upper),
                opt(pt.exact),
                pt.exact_in_ci.map(|b| b.to_string()).unwrap_or_default(),
                pt.pass.to_string(),
            ]
        })
        .collect();
    Ok(Output {
        columns: vec!["energy", "successes", "trials", "estimate", "lower", "upper", "exact", "exact_in_ci", "pass"],
        rows,
        result: to_value(&rep),
    })
}

/// Columns `event,successes,trials,estimate,lower,upper,exact`.
pub fn ils_thin(p: &ThinTailParams, seed: u64) -> Result<Output> {
    let rep = ils_thin_tail(&p.config, seed)?;
    let exact = if p.exact { Some(thin_tail_exact(&p.config)?) } else { None };
    let events = [
        ("ground", &rep.ground, exact.as_ref().map(|e| e.ground)),
        ("low_potential", &rep.low_potential, exact.as_ref().map(|e| e.low_potential)),
        ("thin_cluster", &rep.thin_cluster, exact.as_ref().map(|e| e.thin_cluster)),
    ];
    let rows = events
        .iter()
        .map(|(name, pr, ex)| {
            vec![
                name.to_string(),
                pr.successes.to_string(),
                pr.trials.to_string(),
                num(pr.estimate),
                num(pr.lower),
                num(pr.upper),
                opt(*ex),
            ]
        })
        .collect();
    Ok(Output {
        columns: vec!["event", "successes", "trials", "estimate", "lower", "upper", "exact"],
        rows,
        result: json!({ "report": rep, "exact": exact }),
    })
}

/// One row: coupling, worst energy, its probability and the target.
pub fn ils_strong(cfg: &StrongDisorderConfig, seed: u64) -> Result<Output> {
    let rep = ils_strong_disorder(cfg, seed)?;
    let pr = &rep.sup_probability;
    Ok(Output {
        columns: vec![
            "g", "delta", "grid_points", "sup_energy", "successes", "trials", "estimate", "upper", "target",
            "below_target",
        ],
        rows: vec![vec![
            num(rep.g),
            num(rep.delta),
            rep.grid_points.to_string(),
            num(rep.sup_energy),
            pr.successes.to_string(),
            pr.trials.to_string(),
            num(pr.estimate),
            num(pr.upper),
            num(rep.target),
            rep.below_target.to_string(),
        ]],
        result: to_value(&rep),
    })
}

/// One row per scale: `k,l_k,failures,trials,estimate,lower,upper,target,below_target`.
pub fn msa(cfg: &MsaConfig, seed: u64) -> Result<Output> {
    let rep = msa_run(cfg, seed)?;
    let rows = rep
        .scales
        .iter()
        .map(|s| {
            vec![
                s.k.to_string(),
                s.l_k.to_string(),
                s.p_k.successes.to_string(),
                s.p_k.trials.to_string(),
                num(s.p_k.estimate),
                num(s.p_k.lower),
                num(s.p_k.upper),
                num(s.target),
                s.below_target.to_string(),
            ]
        })
        .collect();
    Ok(Output {
        columns: vec!["k", "l_k", "failures", "trials", "estimate", "lower", "upper", "target", "below_target"],
        rows,
        result: to_value(&rep),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Small brute-force oracles against the library paths.
pub fn selftest(seed: u64) -> Result<Output> {
    let checks = vec![
        check_cumulative(seed)?,
        check_wegner_enumeration(seed)?,
        check_thin_tail_chain()?,
        check_bernstein()?,
        check_taylor(seed),
        check_quadratic()?,
    ];
    let passed = checks.iter().all(|c| c.passed);
    let rows = checks
        .iter()
        .map(|c| vec![c.name.clone(), c.passed.to_string(), c.detail.clone()])
        .collect();
    Ok(Output {
        columns: vec!["check", "passed", "detail"],
        rows,
        result: json!({ "passed": passed, "checks": checks }),
    })
}

fn check_cumulative(seed: u64) -> Result<Check> {
    let pot = InteractionPotential::piecewise(2.5, 2.0)?;
    let dom = Ball::centered(2, 2);
    let region = Ball::centered(2, 6);
    let field = sample_field(
        &AmplitudeDistribution::Uniform01,
        &region,
        StreamId::new(seed, "selftest-cumulative", 0),
        Background::FrozenZero,
    );
    let h = assemble_hamiltonian(&dom, &pot, &field, 1.0, Some(4))?;
    let mut worst: f64 = 0.0;
    for (i, x) in dom.sites().iter().enumerate() {
        let mut v = 0.0;
        for (j, y) in region.sites().iter().enumerate() {
            let r = crate::lattice::distance(x, y);
            if r <= 4 {
                v += pot.value_at(r) * field.values[j];
            }
        }
        worst = worst.max((h.matrix[(i, i)] - 4.0 - v).abs());
    }
    Ok(Check {
        name: "cumulative_potential".into(),
        passed: worst < 1e-12,
        detail: format!("max diagonal defect {worst:e}"),
    })
}

fn check_wegner_enumeration(seed: u64) -> Result<Check> {
    let mut cfg = default_wegner();
    cfg.tau = 2.0;
    cfg.theta = 0.5;
    cfg.r_max = 8;
    cfg.trials = 100;
    let frozen = wegner_frozen(&cfg, seed);
    let n = cfg.annulus().len();
    let sites = cfg.annulus().sites();
    let probe = crate::spectral::spectrum(&assemble_hamiltonian(&cfg.domain(), &cfg.potential, &frozen, cfg.g, Some(cfg.r_max))?.matrix)?;
    cfg.energies = vec![probe[0], probe[probe.len() / 2]];
    let exact = wegner_exact(&cfg, &frozen)?;
    let mut direct = vec![0.0; cfg.energies.len()];
    for mask in 0..(1u64 << n) {
        let mut f = frozen.clone();
        for (k, y) in sites.iter().enumerate() {
            f.set(y, if mask >> k & 1 == 1 { 1.0 } else { -1.0 })?;
        }
        let spec = crate::spectral::spectrum(&assemble_hamiltonian(&cfg.domain(), &cfg.potential, &f, cfg.g, Some(cfg.r_max))?.matrix)?;
        for (k, &e) in cfg.energies.iter().enumerate() {
            if crate::spectral::spectral_distance(&spec, e) <= cfg.eps() {
                direct[k] += 0.5f64.powi(n as i32);
            }
        }
    }
    let worst = exact.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(Check {
        name: "wegner_enumeration".into(),
        passed: worst < 1e-12,
        detail: format!("{n} annulus sites, max defect {worst:e}"),
    })
}

fn check_thin_tail_chain() -> Result<Check> {
    let mut p = default_thin_tail().config;
    p.distribution = AmplitudeDistribution::BernoulliP { p: 0.5 };
    let e = thin_tail_exact(&p)?;
    let tol = 1e-12;
    let ordered = e.ground <= e.low_potential + tol
        && e.low_potential <= e.thin_cluster + tol
        && e.thin_cluster <= e.chain_bound + tol;
    Ok(Check {
        name: "thin_tail_chain".into(),
        passed: ordered && e.implication_violations == 0 && e.rayleigh_violations == 0,
        detail: format!(
            "{} <= {} <= {} <= {}",
            e.ground, e.low_potential, e.thin_cluster, e.chain_bound
        ),
    })
}

fn check_bernstein() -> Result<Check> {
    let mut worst: f64 = 0.0;
    for flip in [0.2, 0.5, 0.7] {
        let chain = SignChain::new(10, flip)?;
        for k in 0..=20 {
            let s = -2.0 + 0.2 * k as f64;
            worst = worst.max((chain.char_fn_transfer(s) - chain.char_fn_enumerated(s)?).norm());
        }
    }
    let rep = bernstein_approximation(SignChain::new(10, 0.5)?, 1.0, 101, PsiForm::Literal, true)?;
    Ok(Check {
        name: "bernstein_transfer".into(),
        passed: worst < 1e-12 && rep.holds,
        detail: format!("transfer vs enumeration {worst:e}, gap {} <= {}", rep.sup_gap, rep.eta_sum),
    })
}

fn check_taylor(seed: u64) -> Check {
    use rand::Rng;
    let mut rng = StreamId::new(seed, "selftest-taylor", 0).rng();
    let mut bad = 0;
    for _ in 0..1000 {
        let n = rng.random_range(0..=8);
        let s = rng.random_range(-20.0..=20.0);
        if !taylor_remainder_check(n, s).holds {
            bad += 1;
        }
    }
    Check {
        name: "taylor_remainder".into(),
        passed: bad == 0,
        detail: format!("{bad} violations in 1000 draws"),
    }
}

fn check_quadratic() -> Result<Check> {
    let mut bad = 0;
    for dist in [
        AmplitudeDistribution::BernoulliSym,
        AmplitudeDistribution::BernoulliP { p: 0.3 },
        AmplitudeDistribution::Uniform01,
    ] {
        let t0 = dist.quadratic_regime()?;
        for k in 0..=200 {
            let q = quadratic_log_bound(&dist, t0 * k as f64 / 200.0)?;
            if !(q.applies && q.holds) {
                bad += 1;
            }
        }
    }
    Ok(Check {
        name: "quadratic_log_bound".into(),
        passed: bad == 0,
        detail: format!("{bad} violations"),
    })
}
