//! Batch front end: run configurations, output files and exit codes.
//!
//! Configurations are TOML, or JSON when the file extension is `.json`.
//! Every command validates its whole configuration and finishes all of its
//! numerical work before anything is written to the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::graph::GraphSpec;
use crate::master_eq::{
    evolve_with_reference, steady_state, InvariantSummary, NoiseChannel, SimConfig, Tolerances,
    DEFAULT_DT, DEFAULT_SAMPLE_INTERVAL,
};
use crate::observables::{fit_stretched_exponential, fmt_f64, l1_coherence, KwwFit, Trajectory};
use crate::spin::{
    concurrence_record, evolve_spin, spin_steady_state, EdgeOrientation, SpinConfig,
    SpinTrajectory, DEFAULT_GAMMA,
};
use crate::steady::{constraint_residual, hs_constraint_report, ConstraintReport};
use crate::VERSION;

/// Largest constraint residual accepted by `verify`.
pub const VERIFY_TOLERANCE: f64 = 1e-6;
pub const TIME_UNIT: &str = "inverse hopping rate (J = 1)";

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "postwalk", version, about = "Quantum walks under the postselected master equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fixed-time evolution of a node walk, one run per eta.
    Simulate(RunArgs),
    /// Steady states and relaxation fits across eta or p.
    Sweep(SweepArgs),
    /// Compare a converged steady state with the analytic condition.
    Verify(RunArgs),
    /// Single-excitation spin network evolution.
    Spin(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads for independent runs (defaults to one per core).
    #[arg(long, env = "POSTWALK_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Overrides `sweep.axis` in the configuration.
    #[arg(long, value_enum)]
    pub axis: Option<SweepAxis>,
    /// Comma-separated values; overrides `sweep.values`.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Eta,
    P,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Engine(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) | CliError::Io { .. } => EXIT_USAGE,
            CliError::Engine(e) => engine_exit_code(e),
        }
    }
}

fn engine_exit_code(e: &Error) -> u8 {
    match e {
        Error::InvariantViolation { .. }
        | Error::NonFinite { .. }
        | Error::VanishingDenominator(_)
        | Error::Numerical(_)
        | Error::Fit(_) => EXIT_NUMERICAL,
        Error::NotConverged { .. } => EXIT_NOT_CONVERGED,
        Error::InvalidGraph(_)
        | Error::Disconnected(_)
        | Error::DimensionMismatch { .. }
        | Error::InvalidParameter(_) => EXIT_USAGE,
    }
}

/// Postselection efficiency: a single run or one run per value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaValues {
    One(f64),
    Many(Vec<f64>),
}

impl EtaValues {
    pub fn values(&self) -> Vec<f64> {
        match self {
            EtaValues::One(v) => vec![*v],
            EtaValues::Many(v) => v.clone(),
        }
    }

    pub fn single(&self) -> Option<f64> {
        match self {
            EtaValues::One(v) => Some(*v),
            EtaValues::Many(v) if v.len() == 1 => Some(v[0]),
            EtaValues::Many(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ChannelConfig {
    #[serde(rename = "haken_strobl")]
    HakenStrobl { gamma: f64, eta: EtaValues },
    #[serde(rename = "qsw")]
    Qsw { p: f64, eta: EtaValues },
}

impl ChannelConfig {
    pub fn etas(&self) -> &EtaValues {
        match self {
            ChannelConfig::HakenStrobl { eta, .. } | ChannelConfig::Qsw { eta, .. } => eta,
        }
    }

    pub fn channel(&self, eta: f64) -> NoiseChannel {
        match *self {
            ChannelConfig::HakenStrobl { gamma, .. } => NoiseChannel::HakenStrobl { gamma, eta },
            ChannelConfig::Qsw { p, .. } => NoiseChannel::Qsw { p, eta },
        }
    }
}

/// Adds a trace-distance column measured against the converged steady
/// state, which is searched for up to `t_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub t_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// Node-walk configuration shared by `simulate`, `sweep` and `verify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkConfig {
    pub graph: GraphSpec,
    pub channel: ChannelConfig,
    pub initial_node: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Run length for `simulate`; steady-state search horizon otherwise.
    pub t_max: f64,
    #[serde(default = "default_sample_interval")]
    pub sample_interval: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
    /// Also write the graph as `edges.csv`.
    #[serde(default)]
    pub export_edges: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_sample_interval() -> f64 {
    DEFAULT_SAMPLE_INTERVAL
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

impl WalkConfig {
    pub fn sim_config(&self, channel: NoiseChannel) -> SimConfig {
        SimConfig {
            graph: self.graph.clone(),
            channel,
            initial_node: self.initial_node,
            dt: self.dt,
            t_max: self.t_max,
            sample_interval: self.sample_interval,
            tolerances: self.tolerances,
        }
    }

    fn runs(&self) -> Vec<SimConfig> {
        self.channel
            .etas()
            .values()
            .into_iter()
            .map(|eta| self.sim_config(self.channel.channel(eta)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopMode {
    /// Integrate to `t_max`.
    #[default]
    Fixed,
    /// Stop at the steady state; reaching `t_max` first is an error.
    Steady,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinRunConfig {
    pub graph: GraphSpec,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub eta: EtaValues,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_spin: Option<usize>,
    #[serde(default)]
    pub orientation: EdgeOrientation,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_max: f64,
    #[serde(default = "default_sample_interval")]
    pub sample_interval: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub stop: StopMode,
    /// Also write every pairwise concurrence of the final state.
    #[serde(default)]
    pub concurrence_dump: bool,
}

impl SpinRunConfig {
    fn runs(&self) -> Vec<SpinConfig> {
        self.eta
            .values()
            .into_iter()
            .map(|eta| SpinConfig {
                graph: self.graph.clone(),
                gamma: self.gamma,
                eta,
                initial_spin: self.initial_spin,
                orientation: self.orientation,
                dt: self.dt,
                t_max: self.t_max,
                sample_interval: self.sample_interval,
                tolerances: self.tolerances,
            })
            .collect()
    }
}

/// Metadata written next to every set of outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub engine_version: String,
    pub config: serde_json::Value,
    pub wall_clock_seconds: f64,
    pub invariants: InvariantSummary,
    pub time_unit: String,
    pub outputs: Vec<PathBuf>,
    /// Manifests of the individual runs of a multi-eta invocation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<serde_json::Value>,
}

impl RunManifest {
    fn new<C: Serialize>(command: &str, config: &C, started: Instant) -> Self {
        RunManifest {
            command: command.to_string(),
            engine_version: VERSION.to_string(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            invariants: InvariantSummary::default(),
            time_unit: TIME_UNIT.to_string(),
            outputs: Vec::new(),
            runs: Vec::new(),
            diagnostics: None,
        }
    }
}

/// Run one parsed command line; `Ok` carries the exit code.
pub fn run(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Spin(args) => cmd_spin(args),
    }
}

pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let config_error = |message: String| CliError::Config {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("cannot read: {e}")))?;
    let is_json = path
        .extension()
        .is_some_and(|ext| ext.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| config_error(e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| config_error(e.to_string()))
    }
}

fn invalid(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn check_walk(path: &Path, config: &SimConfig) -> Result<(), CliError> {
    config.validate().map_err(|e| invalid(path, e))?;
    let built = config.graph.build().map_err(|e| invalid(path, e))?;
    if built.node(config.initial_node).is_none() {
        return Err(invalid(
            path,
            format!(
                "initial_node {} is out of range or was removed",
                config.initial_node
            ),
        ));
    }
    Ok(())
}

fn worker_pool(workers: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}

fn write_file(path: &Path, contents: &str) -> Result<PathBuf, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(path.to_path_buf())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Usage(format!("cannot serialize {}: {e}", path.display())))?;
    write_file(path, &text)
}

fn eta_dir(out: &Path, eta: f64) -> PathBuf {
    out.join(format!("eta_{eta}"))
}

fn cmd_simulate(args: &RunArgs) -> Result<u8, CliError> {
    let started = Instant::now();
    let config: WalkConfig = load_config(&args.config)?;
    let runs = config.runs();
    if runs.is_empty() {
        return Err(invalid(&args.config, "channel.eta lists no values"));
    }
    for run in &runs {
        check_walk(&args.config, run)?;
    }
    if let Some(r) = &config.reference {
        if !(r.t_max > 0.0) || runs.iter().any(|c| !c.channel.is_dissipative()) {
            return Err(invalid(
                &args.config,
                "reference needs t_max > 0 and a dissipative channel",
            ));
        }
    }

    let pool = worker_pool(args.workers)?;
    let reference = config.reference.clone();
    let results: Vec<Result<Trajectory, Error>> = pool.install(|| {
        runs.par_iter()
            .map(|run| simulate_one(run, reference.as_ref()))
            .collect()
    });
    let trajectories = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let edges = if config.export_edges {
        Some(config.graph.build()?.graph.edge_list_csv())
    } else {
        None
    };
    if runs.len() == 1 {
        let mut manifest = RunManifest::new("simulate", &runs[0], started);
        write_walk_outputs(&args.out, &trajectories[0], edges.as_deref(), &mut manifest)?;
        write_json(&args.out.join("manifest.json"), &manifest)?;
        return Ok(EXIT_OK);
    }

    let mut top = RunManifest::new("simulate", &config, started);
    for (run, traj) in runs.iter().zip(&trajectories) {
        let dir = eta_dir(&args.out, run.channel.eta());
        let mut manifest = RunManifest::new("simulate", run, started);
        write_walk_outputs(&dir, traj, None, &mut manifest)?;
        top.runs.push(write_json(&dir.join("manifest.json"), &manifest)?);
        top.invariants = top.invariants.merge(&traj.invariants);
    }
    if let Some(csv) = &edges {
        top.outputs.push(write_file(&args.out.join("edges.csv"), csv)?);
    }
    top.wall_clock_seconds = started.elapsed().as_secs_f64();
    write_json(&args.out.join("manifest.json"), &top)?;
    Ok(EXIT_OK)
}

fn simulate_one(run: &SimConfig, reference: Option<&ReferenceConfig>) -> Result<Trajectory, Error> {
    let steady = match reference {
        Some(r) => {
            let mut search = run.clone();
            search.t_max = r.t_max;
            Some(steady_state(&search)?.state)
        }
        None => None,
    };
    evolve_with_reference(run, steady.as_ref())
}

fn write_walk_outputs(
    dir: &Path,
    traj: &Trajectory,
    edges: Option<&str>,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    manifest
        .outputs
        .push(write_file(&dir.join("trajectory.csv"), &traj.to_csv())?);
    if let Some(state) = &traj.final_state {
        manifest
            .outputs
            .push(write_json(&dir.join("final_state.json"), &state.to_json())?);
    }
    if let Some(csv) = edges {
        manifest.outputs.push(write_file(&dir.join("edges.csv"), csv)?);
    }
    manifest.invariants = traj.invariants;
    Ok(())
}

/// One row of `sweep.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub populations: Vec<f64>,
    pub coherence_l1: f64,
    pub fit: Option<KwwFit>,
    pub status: SweepStatus,
    pub invariants: Option<InvariantSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStatus {
    Converged,
    /// Converged, but the trace-distance decay could not be fitted.
    FitFailed,
    NotConverged,
    NumericalFailure,
}

impl SweepStatus {
    fn as_str(self) -> &'static str {
        match self {
            SweepStatus::Converged => "converged",
            SweepStatus::FitFailed => "fit_failed",
            SweepStatus::NotConverged => "not_converged",
            SweepStatus::NumericalFailure => "numerical_failure",
        }
    }
}

/// Steady state of one sweep point plus a stretched-exponential fit of the
/// trace distance to it over `[0, t_ss]`.
pub fn sweep_point(value: f64, config: &SimConfig, n: usize) -> SweepRow {
    let failed = |status| SweepRow {
        value,
        populations: vec![f64::NAN; n],
        coherence_l1: f64::NAN,
        fit: None,
        status,
        invariants: None,
    };
    let steady = match steady_state(config) {
        Ok(s) => s,
        Err(Error::NotConverged { .. }) => return failed(SweepStatus::NotConverged),
        Err(_) => return failed(SweepStatus::NumericalFailure),
    };
    let mut decay = config.clone();
    decay.t_max = steady.time.max(config.sample_interval);
    let fit = evolve_with_reference(&decay, Some(&steady.state)).and_then(|traj| {
        let distance = traj.trace_distance.unwrap_or_default();
        fit_stretched_exponential(&traj.times, &distance)
    });
    SweepRow {
        value,
        populations: steady.state.populations(),
        coherence_l1: l1_coherence(steady.state.matrix()),
        status: if fit.is_ok() {
            SweepStatus::Converged
        } else {
            SweepStatus::FitFailed
        },
        fit: fit.ok(),
        invariants: Some(steady.invariants),
    }
}

/// `value,p_0..p_{n-1},coherence_l1,tau,beta,k,r2,status`.
pub fn sweep_csv(rows: &[SweepRow], n: usize) -> String {
    let mut out = String::from("value");
    for k in 0..n {
        out.push_str(&format!(",p_{k}"));
    }
    out.push_str(",coherence_l1,tau,beta,k,r2,status\n");
    for row in rows {
        let mut fields = vec![fmt_f64(row.value)];
        fields.extend(row.populations.iter().map(|p| fmt_f64(*p)));
        fields.push(fmt_f64(row.coherence_l1));
        let fit = row
            .fit
            .as_ref()
            .map_or([f64::NAN; 4], |f| [f.tau, f.beta, f.k, f.r2]);
        fields.extend(fit.iter().map(|x| fmt_f64(*x)));
        fields.push(row.status.as_str().to_string());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn cmd_sweep(args: &SweepArgs) -> Result<u8, CliError> {
    let started = Instant::now();
    let path = &args.run.config;
    let mut config: WalkConfig = load_config(path)?;
    let mut sweep = config.sweep.clone().unwrap_or(SweepConfig {
        axis: SweepAxis::Eta,
        values: Vec::new(),
    });
    if let Some(axis) = args.axis {
        sweep.axis = axis;
    }
    if let Some(values) = &args.values {
        sweep.values = values.clone();
    }
    if config.sweep.is_none() && (args.axis.is_none() || args.values.is_none()) {
        return Err(CliError::Usage(
            "sweep needs [sweep] in the config or both --axis and --values".into(),
        ));
    }
    if sweep.values.is_empty() {
        return Err(invalid(path, "sweep.values is empty"));
    }
    if let Some(v) = sweep.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(invalid(path, format!("sweep value {v} outside [0, 1]")));
    }
    let base_eta = config.channel.etas().single().ok_or_else(|| {
        invalid(path, "a sweep takes a single channel.eta; list values under [sweep]")
    })?;
    let runs: Vec<SimConfig> = sweep
        .values
        .iter()
        .map(|&v| match (sweep.axis, &config.channel) {
            (SweepAxis::Eta, c) => Ok(config.sim_config(c.channel(v))),
            (SweepAxis::P, ChannelConfig::Qsw { .. }) => {
                Ok(config.sim_config(NoiseChannel::Qsw { p: v, eta: base_eta }))
            }
            (SweepAxis::P, ChannelConfig::HakenStrobl { .. }) => Err(invalid(
                path,
                "axis p needs a qsw channel",
            )),
        })
        .collect::<Result<_, _>>()?;
    for run in &runs {
        check_walk(path, run)?;
        if !run.channel.is_dissipative() {
            return Err(invalid(
                path,
                "steady-state detection needs a dissipative channel (p > 0 or gamma > 0)",
            ));
        }
    }
    let n = config.graph.build()?.graph.n();

    let pool = worker_pool(args.run.workers)?;
    let rows: Vec<SweepRow> = pool.install(|| {
        sweep
            .values
            .par_iter()
            .zip(runs.par_iter())
            .map(|(&v, run)| sweep_point(v, run, n))
            .collect()
    });

    config.sweep = Some(sweep);
    let mut manifest = RunManifest::new("sweep", &config, started);
    for row in &rows {
        if let Some(inv) = &row.invariants {
            manifest.invariants = manifest.invariants.merge(inv);
        }
    }
    let count = |s: SweepStatus| rows.iter().filter(|r| r.status == s).count();
    let not_converged = count(SweepStatus::NotConverged);
    let numerical = count(SweepStatus::NumericalFailure);
    manifest.diagnostics = Some(serde_json::json!({
        "converged": count(SweepStatus::Converged),
        "fit_failed": count(SweepStatus::FitFailed),
        "not_converged": not_converged,
        "numerical_failure": numerical,
    }));
    manifest
        .outputs
        .push(write_file(&args.run.out.join("sweep.csv"), &sweep_csv(&rows, n))?);
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    write_json(&args.run.out.join("manifest.json"), &manifest)?;
    Ok(if numerical > 0 {
        EXIT_NUMERICAL
    } else if not_converged > 0 {
        EXIT_NOT_CONVERGED
    } else {
        EXIT_OK
    })
}

fn cmd_verify(args: &RunArgs) -> Result<u8, CliError> {
    let started = Instant::now();
    let config: WalkConfig = load_config(&args.config)?;
    let eta = config
        .channel
        .etas()
        .single()
        .ok_or_else(|| invalid(&args.config, "verify takes a single channel.eta"))?;
    let run = config.sim_config(config.channel.channel(eta));
    check_walk(&args.config, &run)?;
    if let NoiseChannel::Qsw { p, .. } = run.channel {
        if !(p > 0.0) {
            return Err(CliError::Usage(
                "QSW verification needs p > 0; the condition divides by p".into(),
            ));
        }
    }
    if !run.channel.is_dissipative() {
        return Err(invalid(&args.config, "verify needs gamma > 0"));
    }

    let steady = steady_state(&run)?;
    let report: ConstraintReport = match run.channel {
        NoiseChannel::Qsw { p, eta } => {
            let graph = run.graph.build()?.graph;
            constraint_residual(&steady.state, &graph, p, eta)?
        }
        _ => hs_constraint_report(&steady.state),
    };

    let mut manifest = RunManifest::new("verify", &run, started);
    manifest.invariants = steady.invariants;
    manifest.diagnostics = Some(serde_json::json!({
        "steady_state_time": steady.time,
        "residual": steady.residual,
        "tolerance": VERIFY_TOLERANCE,
        "passed": report.max_residual < VERIFY_TOLERANCE,
    }));
    manifest
        .outputs
        .push(write_json(&args.out.join("constraint_report.json"), &report)?);
    manifest
        .outputs
        .push(write_json(&args.out.join("final_state.json"), &steady.state.to_json())?);
    write_json(&args.out.join("manifest.json"), &manifest)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).unwrap_or_default()
    );
    Ok(if report.max_residual < VERIFY_TOLERANCE {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    })
}

fn cmd_spin(args: &RunArgs) -> Result<u8, CliError> {
    let started = Instant::now();
    let config: SpinRunConfig = load_config(&args.config)?;
    let runs = config.runs();
    if runs.is_empty() {
        return Err(invalid(&args.config, "eta lists no values"));
    }
    for run in &runs {
        run.validate().map_err(|e| invalid(&args.config, e))?;
        let sys = run.system().map_err(|e| invalid(&args.config, e))?;
        if run.resolved_initial_spin() >= sys.n_spins() {
            return Err(invalid(
                &args.config,
                format!("initial_spin {} out of range", run.resolved_initial_spin()),
            ));
        }
        if config.stop == StopMode::Steady && !(run.gamma > 0.0) {
            return Err(invalid(&args.config, "stop = \"steady\" needs gamma > 0"));
        }
    }

    let pool = worker_pool(args.workers)?;
    let stop = config.stop;
    let results: Vec<Result<SpinTrajectory, Error>> = pool.install(|| {
        runs.par_iter()
            .map(|run| match stop {
                StopMode::Fixed => evolve_spin(run),
                StopMode::Steady => spin_steady_state(run),
            })
            .collect()
    });
    let trajectories = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    if runs.len() == 1 {
        let mut manifest = RunManifest::new("spin", &runs[0], started);
        write_spin_outputs(&args.out, &runs[0], &trajectories[0], config.concurrence_dump, &mut manifest)?;
        write_json(&args.out.join("manifest.json"), &manifest)?;
        return Ok(EXIT_OK);
    }
    let mut top = RunManifest::new("spin", &config, started);
    for (run, traj) in runs.iter().zip(&trajectories) {
        let dir = eta_dir(&args.out, run.eta);
        let mut manifest = RunManifest::new("spin", run, started);
        write_spin_outputs(&dir, run, traj, config.concurrence_dump, &mut manifest)?;
        top.runs.push(write_json(&dir.join("manifest.json"), &manifest)?);
        top.invariants = top.invariants.merge(&traj.invariants);
    }
    top.wall_clock_seconds = started.elapsed().as_secs_f64();
    write_json(&args.out.join("manifest.json"), &top)?;
    Ok(EXIT_OK)
}

fn write_spin_outputs(
    dir: &Path,
    run: &SpinConfig,
    traj: &SpinTrajectory,
    concurrence_dump: bool,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    manifest
        .outputs
        .push(write_file(&dir.join("spin_trajectory.csv"), &traj.to_csv())?);
    if let Some(state) = &traj.final_state {
        manifest
            .outputs
            .push(write_json(&dir.join("final_state.json"), &state.to_json())?);
        if concurrence_dump {
            let record = concurrence_record(state.matrix(), &run.system()?)?;
            manifest
                .outputs
                .push(write_json(&dir.join("concurrence.json"), &record)?);
        }
    }
    manifest.invariants = traj.invariants;
    manifest.diagnostics = Some(serde_json::json!({
        "max_excitation_drift": traj.max_excitation_drift,
        "max_leakage": traj.max_leakage,
        "converged": traj.converged,
        "final_time": traj.times.last(),
    }));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_values_accept_number_or_list() {
        let one: ChannelConfig = toml::from_str("kind = \"qsw\"\np = 0.5\neta = 0.2").unwrap();
        assert_eq!(one.etas().values(), vec![0.2]);
        let many: ChannelConfig =
            toml::from_str("kind = \"qsw\"\np = 0.5\neta = [0.0, 0.2, 0.8]").unwrap();
        assert_eq!(many.etas().values(), vec![0.0, 0.2, 0.8]);
        assert_eq!(many.etas().single(), None);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = "kind = \"qsw\"\np = 0.5\neta = 0.2\nbogus = 1";
        assert!(toml::from_str::<ChannelConfig>(text).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_USAGE);
        let e = CliError::Engine(Error::NotConverged {
            t_max: 1.0,
            residual: 1.0,
        });
        assert_eq!(e.exit_code(), EXIT_NOT_CONVERGED);
        let e = CliError::Engine(Error::NonFinite { step: 1, time: 0.1 });
        assert_eq!(e.exit_code(), EXIT_NUMERICAL);
    }

    #[test]
    fn sweep_csv_marks_failed_rows() {
        let rows = vec![SweepRow {
            value: 0.5,
            populations: vec![f64::NAN; 2],
            coherence_l1: f64::NAN,
            fit: None,
            status: SweepStatus::NotConverged,
            invariants: None,
        }];
        let csv = sweep_csv(&rows, 2);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "value,p_0,p_1,coherence_l1,tau,beta,k,r2,status"
        );
        assert!(lines.next().unwrap().ends_with(",NaN,not_converged"));
    }
}
