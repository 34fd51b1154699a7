//! Subcommands. Each takes the validated config plus its own arguments and
//! writes human-readable progress to `log`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use tactloc::datagen::{generate_dataset, scan_scene, write_dataset, Dataset, DatasetManifest, ScanRecord, Split};
use tactloc::evalharness::{
    evaluate, exact_kernels, kernels_from, run_episode, simulate_episode, EpisodeTrace, EvalReport, EvalScene,
    NetModel, ObservationModel, OracleModel, Traversal, UniformModel,
};
use tactloc::filter::{ActionDir, Belief, GridState, MotionKernel};
use tactloc::models::{
    load_motion_net, load_observation_net, read_entries, save_motion_net, save_observation_net,
    ObservationNetConfig,
};
use tactloc::seeds::{self, stream};
use tactloc::simworld::{self, parse_scene, ObjectFamily, SceneConfig};
use tactloc::training::{
    load_training_checkpoint, save_training_checkpoint, train_motion_model, train_observation_model,
};

use crate::heatmap;
use crate::{CliError, RunConfig};

pub const FULL_MODEL: &str = "full.tloc";
pub const NAIVE_MODEL: &str = "naive.tloc";
pub const MOTION_MODEL: &str = "motion.tloc";
pub const REPORT_FILE: &str = "eval_report.txt";
pub const TRACE_FILE: &str = "trace.txt";
pub const BELIEFS_FILE: &str = "beliefs.bin";

type CliResult<T> = Result<T, CliError>;

/// Which network `train` fits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Full,
    Naive,
    Motion,
}

impl Which {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "obs" | "full" => Some(Which::Full),
            "naive" => Some(Which::Naive),
            "motion" => Some(Which::Motion),
            _ => None,
        }
    }

    fn stem(self) -> &'static str {
        match self {
            Which::Full => "full",
            Which::Naive => "naive",
            Which::Motion => "motion",
        }
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn open_dataset(dir: &Path) -> CliResult<Dataset> {
    Ok(Dataset::open(dir)?)
}

/// CRC32 over every scene checksum and the transitions checksum.
pub fn dataset_digest(m: &DatasetManifest) -> u32 {
    let mut h = crc32fast::Hasher::new();
    for s in &m.scenes {
        h.update(&s.crc32.to_le_bytes());
    }
    h.update(&m.transitions_crc32.to_le_bytes());
    h.finalize()
}

fn summarize(m: &DatasetManifest, log: &mut dyn Write) -> CliResult<()> {
    writeln!(
        log,
        "dataset v{}: {} scenes, {} samples, {} transitions, grid {}x{}, K={}, classes={}, seed={}",
        m.format_version, m.num_scenes, m.num_samples, m.num_transitions, m.height, m.width, m.k, m.classes, m.seed
    )?;
    for split in [Split::Train, Split::Val, Split::Test] {
        for family in [ObjectFamily::Primitive, ObjectFamily::Composite] {
            let n = m.split_family(split, family).len();
            if n > 0 {
                writeln!(log, "  {:<5} {:<9} {n}", split.name(), family.name())?;
            }
        }
    }
    writeln!(log, "digest {:08x}", dataset_digest(m))?;
    Ok(())
}

pub fn cmd_gen(cfg: &RunConfig, out: &Path, force: bool, log: &mut dyn Write) -> CliResult<DatasetManifest> {
    if out.join("manifest.toml").exists() && !force {
        return Err(CliError::Usage(format!(
            "dataset already exists at {} (pass --force to overwrite)",
            out.display()
        )));
    }
    let start = Instant::now();
    let (scenes, transitions) = generate_dataset(&cfg.plan()).map_err(tactloc::Error::from)?;
    let manifest = write_dataset(out, &scenes, &transitions, cfg.seed, force)?;
    summarize(&manifest, log)?;
    writeln!(log, "wrote {} in {:.1}s", out.display(), start.elapsed().as_secs_f64())?;
    Ok(manifest)
}

fn load_split(ds: &Dataset, split: Split, family: ObjectFamily) -> CliResult<Vec<(SceneConfig, ScanRecord)>> {
    ds.manifest()
        .split_family(split, family)
        .into_iter()
        .map(|i| {
            let s = ds.load_scene(i)?;
            Ok((s.config, s.record))
        })
        .collect()
}

/// Prints a kernel as a 3×3 block, north row first.
fn print_kernel(k: &MotionKernel, log: &mut dyn Write) -> CliResult<()> {
    for row in k.weights().chunks(3) {
        writeln!(log, "    {:.4} {:.4} {:.4}", row[0], row[1], row[2])?;
    }
    Ok(())
}

pub fn cmd_train(
    cfg: &RunConfig,
    which: Which,
    data: &Path,
    out: &Path,
    resume: bool,
    log: &mut dyn Write,
) -> CliResult<()> {
    let ds = open_dataset(data)?;
    let hyper = cfg.hyper();
    create_dir(out)?;
    let m = ds.manifest();
    if (m.height, m.width, m.k) != (cfg.grid.height, cfg.grid.width, cfg.grid.footprint) {
        return Err(CliError::Config(format!(
            "dataset is {}x{} with K={}, config asks for {}x{} with K={}",
            m.height, m.width, m.k, cfg.grid.height, cfg.grid.width, cfg.grid.footprint
        )));
    }
    if which == Which::Motion {
        let transitions = ds.load_transitions()?;
        let start = Instant::now();
        let trained = train_motion_model(&transitions, m.height, m.width, &hyper)?;
        for a in &trained.missing_actions {
            writeln!(log, "warning: no transitions for action {}; its kernel stays uniform", a.name())?;
        }
        for (e, loss) in trained.losses.iter().enumerate() {
            writeln!(log, "epoch={} split=train loss={loss:.6}", e + 1)?;
        }
        for a in ActionDir::ALL {
            writeln!(log, "  {}:", a.name())?;
            print_kernel(&trained.net.kernel(a), log)?;
        }
        save_motion_net(&trained.net, &out.join(MOTION_MODEL))?;
        writeln!(log, "trained motion model in {:.1}s", start.elapsed().as_secs_f64())?;
        return Ok(());
    }

    let net_cfg = match which {
        Which::Full => ObservationNetConfig::desk(m.height, m.width, m.k),
        _ => ObservationNetConfig::naive(m.height, m.width, m.k),
    };
    let records = |split| -> CliResult<Vec<ScanRecord>> {
        Ok(load_split(&ds, split, ObjectFamily::Primitive)?
            .into_iter()
            .map(|(_, r)| r)
            .collect())
    };
    let train = records(Split::Train)?;
    let val = records(Split::Val)?;
    let ckpt_path = out.join(format!("{}.ckpt", which.stem()));
    let resume_from = if resume {
        if !ckpt_path.exists() {
            return Err(CliError::Missing(format!("no checkpoint to resume at {}", ckpt_path.display())));
        }
        Some(load_training_checkpoint(&ckpt_path, hyper.obs_lr)?)
    } else {
        None
    };
    let log_path = out.join(format!("{}.log", which.stem()));
    let log_file = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(resume)
        .truncate(!resume)
        .open(&log_path)
        .map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", log_path.display())))?;
    let mut log_file = BufWriter::new(log_file);
    let mut io_err = None;
    let mut on_log = |r: &tactloc::training::LogRecord| {
        let res = writeln!(log_file, "{r}").and_then(|_| log_file.flush()).and_then(|_| writeln!(log, "{r}"));
        if let Err(e) = res {
            io_err.get_or_insert(e);
        }
    };
    let mut trained = train_observation_model(&net_cfg, &train, &val, &hyper, resume_from, &mut on_log)?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    save_observation_net(&mut trained.best, &out.join(format!("{}.tloc", which.stem())))?;
    save_training_checkpoint(&mut trained.checkpoint, &ckpt_path)?;
    writeln!(
        log,
        "best validation epoch {} of {}; saved {}",
        trained.best_epoch,
        trained.checkpoint.epoch,
        out.join(format!("{}.tloc", which.stem())).display()
    )?;
    Ok(())
}

/// Loads the motion, naive, and full models, naming every missing file.
fn load_models(dir: &Path) -> CliResult<([MotionKernel; 4], NetModel, NetModel)> {
    let missing: Vec<String> = [MOTION_MODEL, NAIVE_MODEL, FULL_MODEL]
        .iter()
        .filter(|f| !dir.join(f).exists())
        .map(|f| dir.join(f).display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Missing(format!("missing checkpoints: {}", missing.join(", "))));
    }
    let motion = load_motion_net(&dir.join(MOTION_MODEL))?;
    let naive = NetModel::new(load_observation_net(&dir.join(NAIVE_MODEL))?);
    let full = NetModel::new(load_observation_net(&dir.join(FULL_MODEL))?);
    Ok((kernels_from(&motion), naive, full))
}

pub fn cmd_eval(cfg: &RunConfig, data: &Path, models: &Path, out: &Path, log: &mut dyn Write) -> CliResult<EvalReport> {
    let (kernels, mut naive, mut full) = load_models(models)?;
    let decoding = cfg.decoding()?;
    naive.decoding = decoding;
    full.decoding = decoding;
    let ds = open_dataset(data)?;
    let options = cfg.eval_options();
    let start = Instant::now();
    let mut report = EvalReport::default();
    for family in [ObjectFamily::Primitive, ObjectFamily::Composite] {
        let scenes = load_split(&ds, Split::Test, family)?;
        if scenes.is_empty() {
            continue;
        }
        let indices = ds.manifest().split_family(Split::Test, family);
        let eval_scenes: Vec<EvalScene> = scenes
            .iter()
            .zip(indices)
            .map(|((config, record), index)| EvalScene { index, config, record })
            .collect();
        let mut uniform = UniformModel;
        let mut set: Vec<(&str, &mut dyn ObservationModel)> =
            vec![("uniform", &mut uniform), ("naive", &mut naive), ("full", &mut full)];
        let result = evaluate(&mut set, &kernels, &eval_scenes, family, &options, false)?;
        if result.report.skipped_scenes > 0 {
            writeln!(
                log,
                "{}: skipped {} scenes with no traversal touching an object",
                family.name(),
                result.report.skipped_scenes
            )?;
        }
        report.families.push(result.report);
    }
    if report.families.is_empty() {
        return Err(CliError::Missing(format!("dataset {} has no test scenes", data.display())));
    }
    create_dir(out)?;
    let text = format!("{}\n{report}", report.table());
    write_file(&out.join(REPORT_FILE), text.as_bytes())?;
    write!(log, "{}", report.table())?;
    writeln!(
        log,
        "evaluated in {:.1}s; report at {}",
        start.elapsed().as_secs_f64(),
        out.join(REPORT_FILE).display()
    )?;
    Ok(report)
}

/// Observation model used by `run`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunModel {
    Full,
    Naive,
    Uniform,
    Oracle,
}

impl RunModel {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(RunModel::Full),
            "naive" => Some(RunModel::Naive),
            "uniform" => Some(RunModel::Uniform),
            "oracle" => Some(RunModel::Oracle),
            _ => None,
        }
    }
}

pub struct RunArgs {
    pub scene: PathBuf,
    pub start: GridState,
    /// Defaults to moving away from the edge the start lies on.
    pub action: Option<ActionDir>,
    pub model: RunModel,
    pub scale: usize,
}

/// Direction away from the nearest table edge the start touches, east for
/// interior starts.
pub fn default_action(start: GridState, height: usize, width: usize) -> ActionDir {
    if start.x == 0 {
        ActionDir::East
    } else if start.x == width - 1 {
        ActionDir::West
    } else if start.y == 0 {
        ActionDir::South
    } else if start.y == height - 1 {
        ActionDir::North
    } else {
        ActionDir::East
    }
}

/// Moves until the far edge in direction `action`.
fn moves_to_edge(start: GridState, action: ActionDir, height: usize, width: usize) -> usize {
    match action {
        ActionDir::East => width - 1 - start.x,
        ActionDir::West => start.x,
        ActionDir::South => height - 1 - start.y,
        ActionDir::North => start.y,
    }
}

pub fn cmd_run(cfg: &RunConfig, args: &RunArgs, models: &Path, out: &Path, log: &mut dyn Write) -> CliResult<EpisodeTrace> {
    let text = fs::read_to_string(&args.scene)
        .map_err(|e| CliError::Missing(format!("cannot read scene {}: {e}", args.scene.display())))?;
    let scene = parse_scene(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.scene.display())))?;
    let (h, w) = (scene.height, scene.width);
    if !args.start.in_bounds(h, w) {
        return Err(CliError::Usage(format!(
            "start ({}, {}) is outside the {h}x{w} table",
            args.start.x, args.start.y
        )));
    }
    let motion_path = models.join(MOTION_MODEL);
    let kernels = if motion_path.exists() {
        kernels_from(&load_motion_net(&motion_path)?)
    } else if matches!(args.model, RunModel::Oracle | RunModel::Uniform) {
        exact_kernels(scene.motion_noise)
    } else {
        return Err(CliError::Missing(format!("missing checkpoint {}", motion_path.display())));
    };
    let mut model: Box<dyn ObservationModel> = match args.model {
        RunModel::Uniform => Box::new(UniformModel),
        RunModel::Oracle => Box::new(OracleModel),
        RunModel::Full | RunModel::Naive => {
            let file = if args.model == RunModel::Full { FULL_MODEL } else { NAIVE_MODEL };
            let path = models.join(file);
            if !path.exists() {
                return Err(CliError::Missing(format!("missing checkpoint {}", path.display())));
            }
            let mut m = NetModel::new(load_observation_net(&path)?);
            m.decoding = cfg.decoding()?;
            Box::new(m)
        }
    };

    let record = scan_scene(0, &scene, cfg.grid.footprint);
    let map = simworld::rasterize(&scene);
    let action = args.action.unwrap_or_else(|| default_action(args.start, h, w));
    let traversal = Traversal {
        start: args.start,
        action,
        moves: moves_to_edge(args.start, action, h, w),
    };
    let mut rng = seeds::rng(cfg.seed, &[stream::EPISODE]);
    let episode = simulate_episode(
        0,
        &map,
        cfg.grid.footprint,
        &traversal,
        scene.motion_noise,
        scene.sensor_noise,
        &mut rng,
    );
    let trace = run_episode(&record, model.as_mut(), &kernels, &episode, cfg.eval.threshold, true)?;

    create_dir(out)?;
    let prior = Belief::uniform(h, w).map_err(tactloc::Error::from)?;
    let beliefs = trace.beliefs.as_deref().unwrap_or_default();
    let mut frames = vec![(&prior, trace.start)];
    frames.extend(beliefs.iter().zip(&trace.steps).map(|(b, s)| (b, s.state)));
    let mut all = Vec::new();
    for (i, (b, truth)) in frames.iter().enumerate() {
        let mut img = Vec::new();
        heatmap::write_pgm(&mut img, &heatmap::render(b, Some(*truth)), h, w, args.scale)?;
        write_file(&out.join(format!("frame_{i:03}.pgm")), &img)?;
        b.write_to(&mut all)?;
    }
    write_file(&out.join(BELIEFS_FILE), &all)?;
    let mut text = Vec::new();
    trace.write_text(&mut text)?;
    write_file(&out.join(TRACE_FILE), &text)?;
    writeln!(
        log,
        "{} steps, final error {}, {}; {} frames in {}",
        trace.steps.len() - 1,
        trace.final_error(),
        if trace.success { "success" } else { "failure" },
        frames.len(),
        out.display()
    )?;
    Ok(trace)
}

pub fn cmd_inspect(path: &Path, log: &mut dyn Write) -> CliResult<()> {
    if path.is_dir() {
        let ds = open_dataset(path)?;
        return summarize(ds.manifest(), log);
    }
    if !path.exists() {
        return Err(CliError::Missing(format!("{} does not exist", path.display())));
    }
    let entries = read_entries(path)?;
    writeln!(log, "{}: {} tensors", path.display(), entries.len())?;
    for e in &entries {
        let params: usize = e.dims.iter().product();
        if e.name.starts_with("meta.") && params <= 4 {
            writeln!(log, "  {:<32} {:?} = {:?}", e.name, e.dims, e.values)?;
        } else {
            writeln!(log, "  {:<32} {:?}", e.name, e.dims)?;
        }
    }
    Ok(())
}
