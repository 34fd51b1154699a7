use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tactloc::filter::{ActionDir, GridState};
use tactloc_cli::commands::{self, RunArgs, RunModel, Which};
use tactloc_cli::{CliError, RunConfig};

/// Tactile localization with a learned histogram filter.
#[derive(Parser)]
#[command(name = "tactloc", version)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores for gen and eval, 1 otherwise).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overwrite existing output.
    #[arg(long, global = true)]
    force: bool,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenes, scans, and motion transitions.
    Gen,
    /// Train a model: obs (full), naive, or motion.
    Train {
        which: String,
        /// Continue from the saved training checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Success rates of the uniform, naive, and full models on the test scenes.
    Eval,
    /// Run one episode on a scene file and write belief heatmaps.
    Run {
        scene: PathBuf,
        /// Start cell as X,Y.
        #[arg(long)]
        start: String,
        /// north, south, east, or west.
        #[arg(long)]
        action: Option<String>,
        /// full, naive, uniform, or oracle.
        #[arg(long, default_value = "full")]
        model: String,
        /// Pixels per cell in the heatmaps.
        #[arg(long, default_value_t = 1)]
        scale: usize,
    },
    /// Print a dataset manifest or checkpoint header.
    Inspect { path: PathBuf },
}

fn parse_start(s: &str) -> Result<GridState, CliError> {
    let bad = || CliError::Usage(format!("--start expects X,Y, got {s:?}"));
    let (x, y) = s.split_once(',').ok_or_else(bad)?;
    Ok(GridState::new(
        x.trim().parse().map_err(|_| bad())?,
        y.trim().parse().map_err(|_| bad())?,
    ))
}

fn parse_action(s: &str) -> Result<ActionDir, CliError> {
    ActionDir::ALL
        .into_iter()
        .find(|a| a.name().eq_ignore_ascii_case(s))
        .ok_or_else(|| CliError::Usage(format!("unknown action {s:?}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let parallel = matches!(cli.command, Command::Gen | Command::Eval);
    let threads = cli.threads.unwrap_or(if parallel { 0 } else { 1 });
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let mut err = std::io::stderr();
    let mut stdout = std::io::stdout();
    match cli.command {
        Command::Gen => {
            let out = cli.out.unwrap_or_else(|| cfg.data.dir.clone());
            commands::cmd_gen(&cfg, &out, cli.force, &mut stdout)?;
        }
        Command::Train { which, resume } => {
            let which = Which::parse(&which)
                .ok_or_else(|| CliError::Usage(format!("train expects obs, naive, or motion, got {which:?}")))?;
            let out = cli.out.unwrap_or_else(|| cfg.models.dir.clone());
            commands::cmd_train(&cfg, which, &cfg.data.dir, &out, resume, &mut err)?;
        }
        Command::Eval => {
            let out = cli.out.unwrap_or_else(|| cfg.models.dir.clone());
            commands::cmd_eval(&cfg, &cfg.data.dir, &cfg.models.dir, &out, &mut stdout)?;
        }
        Command::Run {
            scene,
            start,
            action,
            model,
            scale,
        } => {
            let args = RunArgs {
                scene,
                start: parse_start(&start)?,
                action: action.as_deref().map(parse_action).transpose()?,
                model: RunModel::parse(&model)
                    .ok_or_else(|| CliError::Usage(format!("unknown model {model:?}")))?,
                scale,
            };
            let out = cli.out.unwrap_or_else(|| PathBuf::from("frames"));
            commands::cmd_run(&cfg, &args, &cfg.models.dir, &out, &mut stdout)?;
        }
        Command::Inspect { path } => commands::cmd_inspect(&path, &mut stdout)?,
    }
    Ok(())
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
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
