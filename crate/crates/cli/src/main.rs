mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit codes: 0 ok, 1 input error, 2 not found, 3 transport failure.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] nlmap::Error),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(nlmap::Error::Transport { .. }) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nlmap", version, about = "Build, query and plan over natural-language scene maps")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// TOML config file; `NLMAP_SECTION__KEY` variables override it.
    #[arg(long, global = true, env = "NLMAP_CONFIG")]
    pub config: Option<PathBuf>,
    /// Indented JSON output.
    #[arg(long, global = true)]
    pub pretty: bool,
    /// Omit wall-clock stamps so repeated runs are byte-identical.
    #[arg(long, global = true)]
    pub stable: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a map from a JSONL frames file.
    Build {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the frames file stem.
        #[arg(long)]
        scene_id: Option<String>,
    },
    /// Look up an object by name; exits 2 when absent.
    Query {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        name: String,
        /// Write a PGM heatmap here and a CSV beside it.
        #[arg(long)]
        heatmap: Option<PathBuf>,
        /// Heatmap cell size in meters.
        #[arg(long, default_value_t = 0.1)]
        cell: f64,
    },
    /// Plan an instruction against a map.
    Plan {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        instruction: String,
        /// Execute in the simulator, grounded in `--scene`.
        #[arg(long, requires = "scene")]
        execute: bool,
        /// Ground-truth scene JSON for execution.
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Run a benchmark suite and print the report.
    Simulate {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trials per task; defaults to `sim.trials`.
        #[arg(long)]
        trials: Option<usize>,
        /// Also write per-trial CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Simulate exploring a scene and write the frames JSONL.
    Explore {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `ring8`, `ring16`, or a JSON file of camera poses.
        #[arg(long, default_value = "ring8")]
        waypoints: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Disable all detection and embedding noise.
        #[arg(long)]
        noiseless: bool,
    },
    /// Compare scoring variants on seeded synthetic scenes.
    Ablation {
        #[arg(long)]
        scenes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the effective config as TOML.
    Config,
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let env: Vec<(String, String)> = std::env::vars().collect();
    let config = config::Config::load(cli.global.config.as_deref(), env)?;
    let g = &cli.global;
    match cli.command {
        Command::Build { frames, out, scene_id } => commands::build(&config, g, &frames, &out, scene_id),
        Command::Query { map, name, heatmap, cell } => {
            commands::query(&config, g, &map, &name, heatmap.as_deref(), cell)
        }
        Command::Plan { map, instruction, execute, scene } => {
            let world = if execute { scene.as_deref() } else { None };
            commands::plan(&config, g, &map, &instruction, world)
        }
        Command::Simulate { suite, seed, trials, csv } => {
            commands::simulate(&config, g, &suite, seed, trials.unwrap_or(config.sim.trials), csv.as_deref())
        }
        Command::Explore { scene, out, waypoints, seed, noiseless } => {
            commands::explore(&config, g, &scene, &out, &waypoints, seed, noiseless)
        }
        Command::Ablation { scenes, seed } => commands::ablation(g, scenes, seed),
        Command::Config => {
            print!("{}", config.dump());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NLMAP_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
