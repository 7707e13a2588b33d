//! `graspshare` command-line harness.
//!
//! Every failure surfaces as a [`CliError`]; the binary prints it as one JSON
//! line on standard error and exits nonzero.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use graspshare::divergence::{kl_table, AlignmentTable, ArbitrationWeights};
use graspshare::em::{fit_em, Dataset};
use graspshare::intent::{Combination, TaskSet};
use graspshare::replay::{replay, FrameContext, Trajectory};
use graspshare::{load_model, Features, GraspModel, IntentVector, Mode, SolverConfig, WorkspaceBounds};
use graspshare_service::{AppState, Registry, ServiceConfig, ServiceError};
use serde::Serialize;

mod config;

pub use config::{FileConfig, ServiceSection};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] graspshare::Error),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Core(e) => e.kind(),
            Self::Service(e) => e.kind(),
            Self::Config(_) => "config",
            Self::InvalidInput(_) => "invalid_input",
            Self::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }

    /// The single line printed on standard error.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({"error": self.kind(), "message": self.to_string()}).to_string()
    }

    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "graspshare", version, about = "Shared-control grasp planning harness")]
pub struct Cli {
    /// TOML settings file; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a grasp model from JSON-Lines demonstrations.
    Fit(FitArgs),
    /// Divergence table between two or more models (CSV + JSON).
    Kl(KlArgs),
    /// Solve a single operator frame and print the solution as JSON.
    Solve(SolveArgs),
    /// Run a recorded trajectory through one or more controllers.
    Replay(ReplayArgs),
    /// Start the HTTP/WebSocket service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Demonstrations file (JSON-Lines).
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Task ordering; defaults to first appearance in the file.
    #[arg(long = "task", value_name = "NAME", num_args = 1..)]
    pub tasks: Vec<String>,
    /// Embodiment to fit when the file mixes several.
    #[arg(long)]
    pub embodiment: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[arg(long)]
    pub eps_cov: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct KlArgs {
    #[arg(long = "model", value_name = "PATH", required = true)]
    pub models: Vec<PathBuf>,
    /// Task combination whose classes are compared; pooled models when omitted.
    #[arg(long = "task", value_name = "NAME", num_args = 1..)]
    pub tasks: Vec<String>,
    /// Aperture correspondences for models with different finger counts.
    #[arg(long, value_name = "PATH")]
    pub alignment: Option<PathBuf>,
    /// Writes `<PATH>.csv` and `<PATH>.json`.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

/// Options shared by `solve` and `replay`.
#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Robot model file.
    #[arg(long = "model", value_name = "PATH", required = true)]
    pub models: Vec<PathBuf>,
    /// Human model for intent estimation and arbitration weights.
    #[arg(long, value_name = "PATH")]
    pub human_model: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub bounds: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub weights_override: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub alignment: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record solve wall time (makes output nondeterministic).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: SolverArgs,
    #[arg(long)]
    pub mode: Mode,
    /// Operator frame: JSON array or {position, orientation, apertures}.
    #[arg(long, value_name = "JSON")]
    pub features: String,
    /// Per-task probabilities as a JSON array.
    #[arg(long, value_name = "JSON", conflicts_with = "tasks")]
    pub intent: Option<String>,
    /// Tasks the operator certainly wants (all others certainly not).
    #[arg(long = "task", value_name = "NAME", num_args = 1..)]
    pub tasks: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub common: SolverArgs,
    #[arg(long, value_name = "PATH")]
    pub trajectory: PathBuf,
    /// Controllers to run; all three when omitted.
    #[arg(long = "mode")]
    pub modes: Vec<Mode>,
    /// Directory receiving one `replay-<mode>.json` per mode; reports go to
    /// standard output (one per line) when omitted.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, value_name = "DIR")]
    pub models_dir: Option<PathBuf>,
    /// Bounds file or directory of bounds files.
    #[arg(long, value_name = "PATH")]
    pub bounds: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub alignment: Option<PathBuf>,
    /// Model id (file stem) of the operator's model.
    #[arg(long, value_name = "ID")]
    pub human_model: Option<String>,
    /// Solves per second per session; 0 disables coalescing.
    #[arg(long)]
    pub rate_limit: Option<u32>,
    #[arg(long)]
    pub history: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses arguments without exiting; help and version come back as `Ok(None)`
/// after being printed.
pub fn parse<I, T>(args: I) -> Result<Option<Cli>, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => Ok(Some(cli)),
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            Ok(None)
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            Err(CliError::Usage(first.to_string()))
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Fit(args) => cmd_fit(args, &file),
        Command::Kl(args) => cmd_kl(args, &file),
        Command::Solve(args) => cmd_solve(args, &file),
        Command::Replay(args) => cmd_replay(args, &file),
        Command::Serve(args) => cmd_serve(args, &file),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn print_line(value: &impl Serialize) -> Result<(), CliError> {
    let line = serde_json::to_string(value).map_err(graspshare::Error::from)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn load_alignment(path: Option<&PathBuf>) -> Result<Option<AlignmentTable>, CliError> {
    path.map(|p| serde_json::from_str(&read(p)?).map_err(|e| CliError::InvalidInput(format!("{}: {e}", p.display()))))
        .transpose()
}

fn combination_of(tasks: &TaskSet, names: &[String]) -> Result<Option<Combination>, CliError> {
    if names.is_empty() {
        return Ok(None);
    }
    Ok(Some(tasks.combination(names)?))
}

pub fn cmd_fit(args: FitArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut config = file.fit;
    if let Some(v) = args.eps_cov {
        config.eps_cov = v;
    }
    if let Some(v) = args.tol {
        config.tol = v;
    }
    if let Some(v) = args.max_iters {
        config.max_iters = v;
    }
    let tasks = if args.tasks.is_empty() {
        None
    } else {
        Some(TaskSet::new(args.tasks.clone())?)
    };
    let text = read(&args.data)?;
    let data = Dataset::from_jsonl(&text, tasks.as_ref(), args.embodiment.as_deref())?;
    let model = fit_em(&data.tasks, &data.demonstrations, &config)?;
    model.save(&args.out)?;
    print_line(&serde_json::json!({
        "model": args.out.display().to_string(),
        "embodiment": model.embodiment(),
        "d": model.dim(),
        "tasks": model.tasks().names(),
        "priors": model.classes().iter().map(|c| c.prior()).collect::<Vec<_>>(),
        "fit_meta": model.fit_meta(),
    }))
}

#[derive(Serialize)]
struct KlOutput<'a> {
    combination: Option<String>,
    ids: &'a [String],
    values: &'a [Vec<f64>],
}

pub fn cmd_kl(args: KlArgs, file: &FileConfig) -> Result<(), CliError> {
    if args.models.len() < 2 {
        return Err(CliError::Usage("kl needs at least two --model files".into()));
    }
    let models: Vec<GraspModel> = args.models.iter().map(load_model).collect::<Result<_, _>>()?;
    let combination = combination_of(models[0].tasks(), &args.tasks)?;
    let alignment = load_alignment(args.alignment.as_ref())?;
    let refs: Vec<&GraspModel> = models.iter().collect();
    let table = kl_table(&refs, combination, alignment.as_ref(), &file.solver.divergence)?;
    let output = KlOutput {
        combination: combination.map(|c| models[0].tasks().label(c)),
        ids: &table.ids,
        values: &table.values,
    };
    if let Some(prefix) = &args.out {
        let json = serde_json::to_string_pretty(&output).map_err(graspshare::Error::from)?;
        write(&prefix.with_extension("csv"), &table.to_csv())?;
        write(&prefix.with_extension("json"), &(json + "\n"))?;
    }
    print_line(&output)
}

struct Loaded {
    robot: GraspModel,
    human: Option<GraspModel>,
    bounds: WorkspaceBounds,
    weights: Option<ArbitrationWeights>,
    alignment: Option<AlignmentTable>,
    config: SolverConfig,
}

fn load_common(args: &SolverArgs, file: &FileConfig) -> Result<Loaded, CliError> {
    let [robot] = args.models.as_slice() else {
        return Err(CliError::Usage(
            "give exactly one robot --model (use --human-model for the operator's)".into(),
        ));
    };
    let robot = load_model(robot)?;
    let human = args.human_model.as_ref().map(load_model).transpose()?;
    let bounds = match &args.bounds {
        Some(p) => WorkspaceBounds::load(p)?,
        None => WorkspaceBounds::hand_default(robot.dim()),
    };
    let weights = match &args.weights_override {
        Some(p) => {
            Some(serde_json::from_str(&read(p)?).map_err(|e| CliError::InvalidInput(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let mut config = file.solver;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.record_timing |= args.timing;
    Ok(Loaded {
        robot,
        human,
        bounds,
        weights,
        alignment: load_alignment(args.alignment.as_ref())?,
        config,
    })
}

impl Loaded {
    fn context(&self) -> Result<FrameContext<'_>, CliError> {
        let mut ctx = FrameContext::new(
            &self.robot,
            self.human.as_ref(),
            &self.bounds,
            self.alignment.as_ref(),
            self.config,
        )?;
        ctx.weights_override = self.weights.clone();
        Ok(ctx)
    }
}

pub fn cmd_solve(args: SolveArgs, file: &FileConfig) -> Result<(), CliError> {
    let loaded = load_common(&args.common, file)?;
    let features: Features =
        serde_json::from_str(&args.features).map_err(|e| CliError::InvalidInput(format!("--features: {e}")))?;
    let intent = match (&args.intent, args.tasks.is_empty()) {
        (Some(text), _) => Some(
            serde_json::from_str::<IntentVector>(text).map_err(|e| CliError::InvalidInput(format!("--intent: {e}")))?,
        ),
        (None, false) => {
            let tasks = loaded.robot.tasks();
            let wanted = tasks.combination(&args.tasks)?;
            Some(IntentVector::new(
                (0..tasks.len())
                    .map(|i| if wanted.contains(i) { 1.0 } else { 0.0 })
                    .collect(),
            )?)
        }
        (None, true) => None,
    };
    let ctx = loaded.context()?;
    let solution = ctx.solve_frame(args.mode, &features.to_vec(), intent.as_ref())?;
    print_line(&solution)
}

pub fn cmd_replay(args: ReplayArgs, file: &FileConfig) -> Result<(), CliError> {
    let loaded = load_common(&args.common, file)?;
    let traj = Trajectory::load(&args.trajectory)?;
    let ctx = loaded.context()?;
    let modes = if args.modes.is_empty() {
        Mode::ALL.to_vec()
    } else {
        args.modes.clone()
    };
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    for mode in modes {
        let report = replay(&traj, &ctx, mode)?;
        match &args.out {
            Some(dir) => {
                let path = dir.join(format!("replay-{mode}.json"));
                let json = serde_json::to_string_pretty(&report).map_err(graspshare::Error::from)?;
                write(&path, &(json + "\n"))?;
                print_line(&serde_json::json!({
                    "mode": mode,
                    "report": path.display().to_string(),
                    "summary": report.summary,
                }))?;
            }
            None => print_line(&report)?,
        }
    }
    Ok(())
}

pub fn cmd_serve(args: ServeArgs, file: &FileConfig) -> Result<(), CliError> {
    let section = &file.service;
    let models_dir = args
        .models_dir
        .or_else(|| section.models_dir.clone())
        .ok_or_else(|| CliError::Usage("serve needs --models-dir".into()))?;
    let bounds = args.bounds.or_else(|| section.bounds.clone());
    let alignment = args.alignment.or_else(|| section.alignment.clone());
    let human = args.human_model.or_else(|| section.human_model.clone());
    let registry = Registry::load(&models_dir, bounds.as_deref(), human.as_deref(), alignment.as_deref())?;

    let defaults = ServiceConfig::default();
    let mut solver = file.solver;
    if let Some(seed) = args.seed {
        solver.seed = seed;
    }
    let config = ServiceConfig {
        rate_limit: args.rate_limit.or(section.rate_limit).unwrap_or(defaults.rate_limit),
        history: args.history.or(section.history).unwrap_or(defaults.history),
        solver,
    };
    let host = args
        .host
        .or_else(|| section.host.clone())
        .unwrap_or_else(|| "127.0.0.1".into());
    let port = args.port.or(section.port).unwrap_or(8080);
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| CliError::Usage(format!("invalid address {host}:{port}: {e}")))?;

    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io(Path::new("<runtime>"), e))?;
    let state = AppState::new(registry, config);
    runtime.block_on(graspshare_service::serve(addr, state, |bound| {
        let _ = print_line(&serde_json::json!({ "listening": bound.to_string() }));
    }))?;
    Ok(())
}
