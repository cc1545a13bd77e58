//! `mfa`: command-line front end for the mixed feedback amplifier analyses.
//!
//! Exit codes: 0 success, 2 invalid parameters, 3 file or parse error,
//! 4 numerical failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mfa_core::equilibria::{dominance_map, find_lure_equilibria, MapSpec};
use mfa_core::freq_analysis::{check_p_passivity, nyquist_locus, FrequencyGrid};
use mfa_core::interconnect::{
    assemble_closed_loop_with, check_load_passivity, compose_certificates, load_tf, LoadConfig,
    LoadDrive,
};
use mfa_core::multichannel::BankConfig;
use mfa_core::report::{analyze, analyze_bank, write_map_csv, write_nyquist_csv, VERSION};
use mfa_core::sim::{
    default_dt, detect_oscillation, detect_oscillation_series, integrate, integrate_amplifier,
    InputSchedule, Trajectory, DEFAULT_AMP_THRESHOLD, DEFAULT_TRANSIENT_FRACTION,
};
use mfa_core::tf_core::{AmplifierParams, Nonlinearity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{0}")]
    File(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::File(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<mfa_core::Error> for CliError {
    fn from(e: mfa_core::Error) -> Self {
        if e.is_invalid_input() {
            CliError::Invalid(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "mfa",
    version,
    about = "Dominance, passivity and oscillation analysis of the mixed feedback amplifier"
)]
struct Cli {
    /// Seed for randomized utilities (e.g. `simulate --random-ic`).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for `map` (0 = one per core).
    #[arg(long, global = true, env = "MFA_JOBS", default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full dominance and equilibrium report for one parameter set (JSON).
    Analyze(AnalyzeArgs),
    /// Regime map over a (k, beta) grid (CSV).
    Map(MapArgs),
    /// Integrate the amplifier under an input schedule (CSV).
    Simulate(SimulateArgs),
    /// Shifted Nyquist locus of the amplifier, a bank or a load (CSV).
    Nyquist(NyquistArgs),
    /// Report for a multichannel bank configuration (JSON).
    Multichannel(MultichannelArgs),
    /// Amplifier driving a passive load: certificates and simulation (JSON).
    Interconnect(InterconnectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Phi {
    Tanh,
    HardClip,
}

impl From<Phi> for Nonlinearity {
    fn from(p: Phi) -> Self {
        match p {
            Phi::Tanh => Nonlinearity::Tanh,
            Phi::HardClip => Nonlinearity::HardClip,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Drive {
    Inverted,
    Direct,
}

#[derive(Args)]
struct AmpArgs {
    #[arg(long)]
    tau_l: f64,
    #[arg(long)]
    tau_p: f64,
    #[arg(long)]
    tau_n: f64,
    #[arg(long)]
    k: f64,
    #[arg(long)]
    beta: f64,
    #[arg(long, value_enum, default_value_t = Phi::Tanh)]
    nonlinearity: Phi,
}

impl AmpArgs {
    fn params(&self) -> CliResult<AmplifierParams> {
        Ok(
            AmplifierParams::new(self.tau_l, self.tau_p, self.tau_n, self.k, self.beta)?
                .with_nonlinearity(self.nonlinearity.into()),
        )
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    amp: AmpArgs,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    r: f64,
    /// Rate for the 2-dominance test; defaults to the midpoint of the two fastest poles.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
}

#[derive(Args)]
struct MapArgs {
    #[arg(long, default_value_t = 0.01)]
    tau_l: f64,
    #[arg(long, default_value_t = 0.1)]
    tau_p: f64,
    #[arg(long, default_value_t = 1.0)]
    tau_n: f64,
    #[arg(long, default_value_t = 0.1)]
    k_min: f64,
    #[arg(long, default_value_t = 1000.0)]
    k_max: f64,
    #[arg(long, default_value_t = 0.0)]
    beta_min: f64,
    #[arg(long, default_value_t = 1.0)]
    beta_max: f64,
    #[arg(long, default_value_t = 60)]
    rows: usize,
    #[arg(long, default_value_t = 60)]
    cols: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    r: f64,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long, value_enum, default_value_t = Phi::Tanh)]
    nonlinearity: Phi,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// Run oscillation detection and print its JSON report.
    #[arg(long)]
    detect: bool,
    /// Fraction of the horizon discarded as transient.
    #[arg(long, default_value_t = DEFAULT_TRANSIENT_FRACTION)]
    transient: f64,
    #[arg(long, default_value_t = DEFAULT_AMP_THRESHOLD)]
    amp_threshold: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    amp: AmpArgs,
    /// JSON schedule `[{"t":0,"r":..},..]`.
    #[arg(long, conflicts_with = "r")]
    schedule: Option<PathBuf>,
    /// Constant input.
    #[arg(long, allow_negative_numbers = true)]
    r: Option<f64>,
    /// Initial state `x,xp,xn`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [0.1, 0.0, 0.0])]
    ic: Vec<f64>,
    /// Draw the initial state uniformly from [-1, 1]^3 using `--seed`.
    #[arg(long, conflicts_with = "ic")]
    random_ic: bool,
    /// Step size; defaults to a twentieth of the fastest time constant.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 60.0)]
    t_end: f64,
    /// Write the trajectory CSV here; without it the CSV goes to stdout
    /// unless `--detect` is given.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    detect: DetectArgs,
}

#[derive(Args)]
struct NyquistArgs {
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
    /// Load JSON `{"a","b","kv","kp","ki","ko"}`.
    #[arg(long, conflicts_with = "bank")]
    load: Option<PathBuf>,
    /// Bank JSON.
    #[arg(long)]
    bank: Option<PathBuf>,
    #[arg(long)]
    tau_l: Option<f64>,
    #[arg(long)]
    tau_p: Option<f64>,
    #[arg(long)]
    tau_n: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MultichannelArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    r: f64,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
}

#[derive(Args)]
struct InterconnectArgs {
    #[command(flatten)]
    amp: AmpArgs,
    #[arg(long)]
    load: PathBuf,
    /// Common rate for the amplifier and load certificates.
    #[arg(long, default_value_t = 15.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    r: f64,
    /// Initial state `x,xp,xn,q,qdot`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [0.1, 0.0, 0.0, 0.0, 0.0])]
    ic: Vec<f64>,
    #[arg(long, default_value_t = 5e-4)]
    dt: f64,
    #[arg(long, default_value_t = 50.0)]
    t_end: f64,
    /// Sign convention of the load force.
    #[arg(long, value_enum, default_value_t = Drive::Inverted)]
    drive: Drive,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    detect: DetectArgs,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::File(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::File(format!("{}: {e}", path.display())))
}

fn io_err(path: Option<&Path>) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| match path {
        Some(p) => CliError::File(format!("{}: {e}", p.display())),
        None => CliError::File(format!("stdout: {e}")),
    }
}

/// Runs `write` against `path`, or stdout when `path` is `None`.
fn emit(
    path: Option<&Path>,
    write: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> CliResult<()> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(io_err(path))?;
            let mut w = BufWriter::new(f);
            write(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            match write(&mut w).and_then(|_| w.flush()) {
                // reader went away (e.g. `| head`); nothing left to report
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
                res => res.map_err(io_err(None)),
            }
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    emit(None, |w| writeln!(w, "{text}"))
}

fn check_len(ic: &[f64], n: usize) -> CliResult<()> {
    if ic.len() == n {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("--ic needs {n} comma-separated values, got {}", ic.len())))
    }
}

fn run_analyze(a: &AnalyzeArgs) -> CliResult<()> {
    print_json(&analyze(&a.amp.params()?, a.r, a.lambda, a.grid_points)?)
}

fn run_map(a: &MapArgs, jobs: usize) -> CliResult<()> {
    let spec = MapSpec {
        tau_l: a.tau_l,
        tau_p: a.tau_p,
        tau_n: a.tau_n,
        k_min: a.k_min,
        k_max: a.k_max,
        beta_min: a.beta_min,
        beta_max: a.beta_max,
        rows: a.rows,
        cols: a.cols,
        r: a.r,
        lambda: a.lambda,
        nonlinearity: a.nonlinearity.into(),
        grid_points: a.grid_points,
    };
    let cells = dominance_map(&spec, jobs)?;
    emit(a.out.as_deref(), |mut w| write_map_csv(&mut w, &cells))
}

fn detect_json(
    traj: &Trajectory,
    d: &DetectArgs,
    aux: Option<&str>,
) -> CliResult<serde_json::Value> {
    let rep = match aux {
        None => detect_oscillation(traj, d.transient, d.amp_threshold)?,
        Some(name) => {
            let series = traj.aux_series(name).expect("auxiliary output exists");
            detect_oscillation_series(series, traj.dt(), d.transient, d.amp_threshold)?
        }
    };
    Ok(serde_json::to_value(rep).expect("report serializes"))
}

fn run_simulate(a: &SimulateArgs, seed: u64) -> CliResult<()> {
    let params = a.amp.params()?;
    let schedule = match (&a.schedule, a.r) {
        (Some(path), _) => read_json::<InputSchedule>(path)?,
        (None, r) => InputSchedule::constant(r.unwrap_or(0.0)),
    };
    let ic = if a.random_ic {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        [
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
        ]
    } else {
        check_len(&a.ic, 3)?;
        [a.ic[0], a.ic[1], a.ic[2]]
    };
    let dt = a.dt.unwrap_or_else(|| default_dt(&params));
    let traj = integrate_amplifier(&params, ic, &schedule, dt, a.t_end)?;
    if a.out.is_some() || !a.detect.detect {
        emit(a.out.as_deref(), |mut w| traj.write_csv(&mut w))?;
    }
    if a.detect.detect {
        let y = detect_json(&traj, &a.detect, None)?;
        print_json(&json!({ "version": VERSION, "ic": ic, "dt": dt, "t_end": a.t_end, "y": y }))?;
    }
    Ok(())
}

fn run_nyquist(a: &NyquistArgs) -> CliResult<()> {
    let (g, grid) = if let Some(path) = &a.load {
        let (load, _) = read_json::<LoadConfig>(path)?.split()?;
        let g = load_tf(&load);
        let grid = FrequencyGrid::for_tf(&g, a.lambda)?;
        (g, grid)
    } else if let Some(path) = &a.bank {
        let cfg: BankConfig = read_json(path)?;
        (
            cfg.open_loop()?,
            FrequencyGrid::for_time_constants(&cfg.taus()),
        )
    } else {
        let missing =
            |name: &str| CliError::Invalid(format!("nyquist needs --load, --bank or --{name}"));
        let params = AmplifierParams::new(
            a.tau_l.ok_or_else(|| missing("tau-l"))?,
            a.tau_p.ok_or_else(|| missing("tau-p"))?,
            a.tau_n.ok_or_else(|| missing("tau-n"))?,
            a.k.ok_or_else(|| missing("k"))?,
            a.beta.ok_or_else(|| missing("beta"))?,
        )?;
        (params.open_loop(), FrequencyGrid::for_amplifier(&params))
    };
    let grid = a.grid_points.map_or(grid, |n| grid.with_points(n));
    let points = nyquist_locus(&g, a.lambda, &grid);
    emit(a.out.as_deref(), |mut w| {
        write_nyquist_csv(&mut w, a.lambda, &points)
    })
}

fn run_multichannel(a: &MultichannelArgs) -> CliResult<()> {
    let cfg: BankConfig = read_json(&a.bank)?;
    print_json(&analyze_bank(&cfg, a.r, a.lambda, a.grid_points)?)
}

fn run_interconnect(a: &InterconnectArgs) -> CliResult<()> {
    let amp = a.amp.params()?;
    let cfg: LoadConfig = read_json(&a.load)?;
    let (load, iface) = cfg.split()?;
    let drive = match a.drive {
        Drive::Inverted => LoadDrive::Inverted,
        Drive::Direct => LoadDrive::Direct,
    };

    let c_amp = check_p_passivity(
        &amp.open_loop(),
        a.lambda,
        2,
        &FrequencyGrid::for_amplifier(&amp),
    )?;
    let c_load = check_load_passivity(&load, a.lambda)?;
    let composition = compose_certificates(&c_amp, &c_load);
    let sys = assemble_closed_loop_with(&amp, &load, &iface, drive);
    let equilibria = find_lure_equilibria(&sys, a.r)?;

    check_len(&a.ic, 5)?;
    let traj = integrate(&sys, &a.ic, &InputSchedule::constant(a.r), a.dt, a.t_end)?;
    if let Some(path) = &a.out {
        emit(Some(path), |mut w| traj.write_csv(&mut w))?;
    }
    let mut report = json!({
        "version": VERSION,
        "params": amp,
        "load": cfg,
        "drive": drive,
        "r": a.r,
        "amplifier_certificate": c_amp,
        "load_certificate": c_load,
        "composition": composition,
        "equilibria": equilibria,
    });
    if a.detect.detect {
        report["oscillation_y"] = detect_json(&traj, &a.detect, None)?;
        report["oscillation_ye"] = detect_json(&traj, &a.detect, Some("ye"))?;
    }
    print_json(&report)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => run_analyze(a),
        Command::Map(a) => run_map(a, cli.jobs),
        Command::Simulate(a) => run_simulate(a, cli.seed),
        Command::Nyquist(a) => run_nyquist(a),
        Command::Multichannel(a) => run_multichannel(a),
        Command::Interconnect(a) => run_interconnect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mfa: {e}");
            ExitCode::from(e.code())
        }
    }
}
