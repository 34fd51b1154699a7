//! Online filtering episodes against simulated scenes and the success-rate
//! protocol used to compare observation models.
//!
//! An episode is a straight edge-to-edge traversal along a random row or
//! column that contacts at least one object. The belief starts uniform, the
//! first observation is applied before any motion, and each later step runs
//! `predict` with the learned kernel of the action followed by `correct`
//! with the model's likelihood map. The episode succeeds when the l1
//! distance between the final argmax and the true state is below the
//! threshold.

use std::fmt::{self, Write as _};
use std::io::{self, Write};

use rand::Rng;

use crate::datagen::{oracle_likelihood, ScanRecord};
use crate::error::{Error, Result};
use crate::filter::{l1_error, ActionDir, Belief, GridState, LikelihoodMap, MotionKernel};
use crate::models::{predict_maps, uniform_likelihood, Decoding, MotionNet, ObservationNet};
use crate::seeds::{self, stream};
use crate::simworld::{self, HeightMap, ObjectFamily, SceneConfig, DEFAULT_MOTION_NOISE};

pub const DEFAULT_THRESHOLD: usize = 4;
pub const DEFAULT_EPISODES_PER_SCENE: usize = 10;
/// Traversal lines drawn per episode before the scene is given up.
pub const START_RETRIES: usize = 50;

/// Produces one likelihood map per observation of an episode.
pub trait ObservationModel {
    fn likelihoods(&mut self, record: &ScanRecord, observations: &[Vec<f32>]) -> Result<Vec<LikelihoodMap>>;
}

/// `p(o|s)` constant; correction leaves the belief unchanged.
pub struct UniformModel;

impl ObservationModel for UniformModel {
    fn likelihoods(&mut self, record: &ScanRecord, observations: &[Vec<f32>]) -> Result<Vec<LikelihoodMap>> {
        Ok(vec![uniform_likelihood(record.height, record.width); observations.len()])
    }
}

/// Ground-truth similarity against the scene's own scan.
pub struct OracleModel;

impl ObservationModel for OracleModel {
    fn likelihoods(&mut self, record: &ScanRecord, observations: &[Vec<f32>]) -> Result<Vec<LikelihoodMap>> {
        Ok(observations.iter().map(|o| oracle_likelihood(record, o)).collect())
    }
}

/// A trained observation network. Only the depth image and observations
/// are read from the record.
pub struct NetModel {
    pub net: ObservationNet<f32>,
    pub decoding: Decoding,
}

impl NetModel {
    pub fn new(net: ObservationNet<f32>) -> Self {
        NetModel {
            net,
            decoding: Decoding::default(),
        }
    }
}

impl ObservationModel for NetModel {
    fn likelihoods(&mut self, record: &ScanRecord, observations: &[Vec<f32>]) -> Result<Vec<LikelihoodMap>> {
        let obs: Vec<&[f32]> = observations.iter().map(|o| o.as_slice()).collect();
        Ok(predict_maps(&mut self.net, &record.depth, &obs, self.decoding)?)
    }
}

/// The four motion kernels indexed by [`ActionDir::index`].
pub fn kernels_from(net: &MotionNet) -> [MotionKernel; 4] {
    ActionDir::ALL.map(|a| net.kernel(a))
}

/// The generating kernels of a simulator with failure probability `eps`.
pub fn exact_kernels(eps: f64) -> [MotionKernel; 4] {
    ActionDir::ALL.map(|a| MotionKernel::shift(a.delta(), eps))
}

/// A straight move from one table edge toward the opposite edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Traversal {
    pub start: GridState,
    pub action: ActionDir,
    pub moves: usize,
}

impl Traversal {
    /// States visited when every move succeeds.
    pub fn planned_states(&self) -> Vec<GridState> {
        let (dx, dy) = self.action.delta();
        (0..=self.moves as isize)
            .map(|t| {
                GridState::new(
                    (self.start.x as isize + dx * t) as usize,
                    (self.start.y as isize + dy * t) as usize,
                )
            })
            .collect()
    }
}

/// Random axis, random direction along it, random line.
pub fn sample_traversal<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> Traversal {
    let along_rows = rng.random_bool(0.5);
    let forward = rng.random_bool(0.5);
    if along_rows {
        let y = rng.random_range(0..height);
        let (x, action) = if forward { (0, ActionDir::East) } else { (width - 1, ActionDir::West) };
        Traversal {
            start: GridState::new(x, y),
            action,
            moves: width - 1,
        }
    } else {
        let x = rng.random_range(0..width);
        let (y, action) = if forward { (0, ActionDir::South) } else { (height - 1, ActionDir::North) };
        Traversal {
            start: GridState::new(x, y),
            action,
            moves: height - 1,
        }
    }
}

/// Whether the noise-free traversal senses an object at some state.
pub fn traversal_touches(record: &ScanRecord, traversal: &Traversal) -> bool {
    traversal.planned_states().into_iter().any(|s| record.is_contact(s))
}

/// Ground truth of one episode, shared by every model evaluated on it.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub scene_id: u32,
    /// `length + 1` true states, starting with the start state.
    pub states: Vec<GridState>,
    /// `actions[t]` moves from `states[t]` to `states[t + 1]`.
    pub actions: Vec<ActionDir>,
    /// One observation per state.
    pub observations: Vec<Vec<f32>>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Drives the simulator along `traversal` with motion noise `eps` and
/// sensor noise `sigma`.
pub fn simulate_episode<R: Rng + ?Sized>(
    scene_id: u32,
    map: &HeightMap,
    k: usize,
    traversal: &Traversal,
    eps: f64,
    sigma: f64,
    rng: &mut R,
) -> Episode {
    let (h, w) = map.dims();
    let mut s = traversal.start;
    let mut states = vec![s];
    let mut observations = vec![to_f32(simworld::sense(map, s, k, sigma, rng))];
    for _ in 0..traversal.moves {
        s = simworld::step(s, traversal.action, h, w, eps, rng);
        states.push(s);
        observations.push(to_f32(simworld::sense(map, s, k, sigma, rng)));
    }
    Episode {
        scene_id,
        states,
        actions: vec![traversal.action; traversal.moves],
        observations,
    }
}

fn to_f32(v: Vec<f64>) -> Vec<f32> {
    v.into_iter().map(|x| x as f32).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub state: GridState,
    /// `None` at `t = 0`.
    pub action: Option<ActionDir>,
    pub observation: Vec<f32>,
    pub inferred: GridState,
    pub error: usize,
    pub entropy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace {
    pub scene_id: u32,
    pub start: GridState,
    /// `length + 1` records, including `t = 0`.
    pub steps: Vec<StepRecord>,
    pub success: bool,
    pub resets: usize,
    pub final_belief: Belief,
    /// Beliefs after every step, kept only on request.
    pub beliefs: Option<Vec<Belief>>,
}

impl EpisodeTrace {
    pub fn final_error(&self) -> usize {
        self.steps.last().map_or(0, |s| s.error)
    }

    /// One whitespace-separated row per step.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# scene {} start {} {} success {} resets {}",
            self.scene_id, self.start.x, self.start.y, self.success, self.resets
        )?;
        writeln!(w, "t x y action obs_sum inferred_x inferred_y error entropy")?;
        for (t, s) in self.steps.iter().enumerate() {
            let obs_sum: f32 = s.observation.iter().sum();
            writeln!(
                w,
                "{t} {} {} {} {obs_sum:.4} {} {} {} {:.6}",
                s.state.x,
                s.state.y,
                s.action.map_or("-", |a| a.name()),
                s.inferred.x,
                s.inferred.y,
                s.error,
                s.entropy
            )?;
        }
        Ok(())
    }
}

/// Runs the filter over an episode given precomputed likelihood maps.
pub fn run_filter(
    episode: &Episode,
    likelihoods: &[LikelihoodMap],
    kernels: &[MotionKernel; 4],
    threshold: usize,
    keep_beliefs: bool,
) -> Result<EpisodeTrace> {
    if likelihoods.len() != episode.states.len() {
        return Err(Error::Config(format!(
            "{} likelihood maps for {} episode states",
            likelihoods.len(),
            episode.states.len()
        )));
    }
    let (h, w) = likelihoods[0].dims();
    let mut beliefs = keep_beliefs.then(Vec::new);
    let mut belief = Belief::uniform(h, w)?;
    let mut resets = 0;
    let mut steps = Vec::with_capacity(episode.states.len());
    for (t, (&state, lik)) in episode.states.iter().zip(likelihoods).enumerate() {
        let action = (t > 0).then(|| episode.actions[t - 1]);
        if let Some(a) = action {
            belief = belief.predict(&kernels[a.index()]);
        }
        let (next, reset) = belief.correct_or_reset(lik)?;
        belief = next;
        resets += reset as usize;
        let inferred = belief.infer_state();
        steps.push(StepRecord {
            state,
            action,
            observation: episode.observations[t].clone(),
            inferred,
            error: l1_error(state, inferred),
            entropy: belief.entropy(),
        });
        if let Some(b) = beliefs.as_mut() {
            b.push(belief.clone());
        }
    }
    let success = steps.last().is_some_and(|s| s.error < threshold);
    Ok(EpisodeTrace {
        scene_id: episode.scene_id,
        start: episode.states[0],
        steps,
        success,
        resets,
        final_belief: belief,
        beliefs,
    })
}

/// Computes the model's likelihoods for the episode and filters it.
pub fn run_episode(
    record: &ScanRecord,
    model: &mut dyn ObservationModel,
    kernels: &[MotionKernel; 4],
    episode: &Episode,
    threshold: usize,
    keep_beliefs: bool,
) -> Result<EpisodeTrace> {
    let maps = model.likelihoods(record, &episode.observations)?;
    run_filter(episode, &maps, kernels, threshold, keep_beliefs)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub episodes_per_scene: usize,
    pub threshold: usize,
    pub motion_noise: f64,
    pub sensor_noise: f64,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            episodes_per_scene: DEFAULT_EPISODES_PER_SCENE,
            threshold: DEFAULT_THRESHOLD,
            motion_noise: DEFAULT_MOTION_NOISE,
            sensor_noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ModelStats {
    pub successes: usize,
    pub episodes: usize,
    pub total_final_error: usize,
}

impl ModelStats {
    /// Success rate in percent.
    pub fn rate(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            100.0 * self.successes as f64 / self.episodes as f64
        }
    }

    pub fn mean_final_error(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.total_final_error as f64 / self.episodes as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilyReport {
    pub family: ObjectFamily,
    pub scenes: usize,
    /// Scenes where no traversal touching an object was found.
    pub skipped_scenes: usize,
    /// `(model name, stats)` in the order the models were given.
    pub models: Vec<(String, ModelStats)>,
}

impl FamilyReport {
    pub fn stats(&self, model: &str) -> Option<&ModelStats> {
        self.models.iter().find(|(n, _)| n == model).map(|(_, s)| s)
    }
}

/// Results of [`evaluate`]; `traces[m]` holds model `m`'s traces when kept.
pub struct FamilyEval {
    pub report: FamilyReport,
    pub traces: Vec<Vec<EpisodeTrace>>,
}

/// A scene to evaluate on, with its scan.
pub struct EvalScene<'a> {
    pub index: usize,
    pub config: &'a SceneConfig,
    pub record: &'a ScanRecord,
}

/// Runs `episodes_per_scene` episodes per scene for every model. Episode
/// `(scene, e)` uses the same seed, start, and noise for every model.
pub fn evaluate(
    models: &mut [(&str, &mut dyn ObservationModel)],
    kernels: &[MotionKernel; 4],
    scenes: &[EvalScene<'_>],
    family: ObjectFamily,
    options: &EvalOptions,
    keep_traces: bool,
) -> Result<FamilyEval> {
    let mut stats = vec![ModelStats::default(); models.len()];
    let mut traces = vec![Vec::new(); models.len()];
    let mut skipped = 0;
    for scene in scenes {
        let map = simworld::rasterize(scene.config);
        let (h, w) = (scene.record.height, scene.record.width);
        let mut episodes = Vec::with_capacity(options.episodes_per_scene);
        for e in 0..options.episodes_per_scene {
            let mut rng = seeds::rng(
                options.seed,
                &[stream::EPISODE, family as u64, scene.index as u64, e as u64],
            );
            let Some(traversal) =
                (0..START_RETRIES).map(|_| sample_traversal(h, w, &mut rng)).find(|t| traversal_touches(scene.record, t))
            else {
                break;
            };
            episodes.push(simulate_episode(
                scene.record.scene_id,
                &map,
                scene.record.k,
                &traversal,
                options.motion_noise,
                options.sensor_noise,
                &mut rng,
            ));
        }
        if episodes.len() < options.episodes_per_scene {
            skipped += 1;
            continue;
        }
        for (m, (_, model)) in models.iter_mut().enumerate() {
            for ep in &episodes {
                let trace = run_episode(scene.record, &mut **model, kernels, ep, options.threshold, false)?;
                stats[m].episodes += 1;
                stats[m].successes += trace.success as usize;
                stats[m].total_final_error += trace.final_error();
                if keep_traces {
                    traces[m].push(trace);
                }
            }
        }
    }
    Ok(FamilyEval {
        report: FamilyReport {
            family,
            scenes: scenes.len(),
            skipped_scenes: skipped,
            models: models.iter().map(|(n, _)| n.to_string()).zip(stats).collect(),
        },
        traces,
    })
}

/// Reports for every evaluated family.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub families: Vec<FamilyReport>,
}

impl EvalReport {
    /// Success-rate table: one row per family, one column per model.
    pub fn table(&self) -> String {
        let mut names: Vec<&str> = Vec::new();
        for f in &self.families {
            for (n, _) in &f.models {
                if !names.contains(&n.as_str()) {
                    names.push(n);
                }
            }
        }
        let mut out = format!("{:<12}", "family");
        for n in &names {
            let _ = write!(out, "{n:>10}");
        }
        out.push('\n');
        for f in &self.families {
            let _ = write!(out, "{:<12}", capitalize(f.family.name()));
            for n in &names {
                match f.stats(n) {
                    Some(s) => {
                        let _ = write!(out, "{:>9.1}%", s.rate());
                    }
                    None => {
                        let _ = write!(out, "{:>10}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for EvalReport {
    /// Structured rows: one per family and model.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "family model successes episodes rate mean_final_error skipped_scenes")?;
        for fam in &self.families {
            for (name, s) in &fam.models {
                writeln!(
                    f,
                    "{} {name} {} {} {:.2} {:.4} {}",
                    fam.family.name(),
                    s.successes,
                    s.episodes,
                    s.rate(),
                    s.mean_final_error(),
                    fam.skipped_scenes
                )?;
            }
        }
        Ok(())
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|first| first.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureMode {
    /// The belief was localized at some step but lost it by the end.
    Drift,
    /// The final belief has separated high-probability regions.
    Ambiguity,
    Other,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Taxonomy {
    pub drift: usize,
    pub ambiguity: usize,
    pub other: usize,
}

impl Taxonomy {
    pub fn failures(&self) -> usize {
        self.drift + self.ambiguity + self.other
    }

    pub fn is_empty(&self) -> bool {
        self.failures() == 0
    }
}

impl fmt::Display for Taxonomy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "drift={} ambiguity={} other={}", self.drift, self.ambiguity, self.other)
    }
}

/// Number of 8-connected regions where the belief is at least half its
/// maximum.
pub fn peak_regions(belief: &Belief) -> usize {
    let (h, w) = belief.dims();
    let v = belief.values();
    let max = v.iter().copied().fold(0.0, f64::max);
    let mut seen: Vec<bool> = v.iter().map(|&p| p < 0.5 * max).collect();
    let mut regions = 0;
    let mut stack = Vec::new();
    for i in 0..v.len() {
        if seen[i] {
            continue;
        }
        regions += 1;
        seen[i] = true;
        stack.push(i);
        while let Some(j) = stack.pop() {
            let (x, y) = ((j % w) as isize, (j / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let n = ny as usize * w + nx as usize;
                    if !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
    }
    regions
}

/// `None` for a successful trace. Ambiguity is checked first, so a twin
/// scene whose belief flips between the twins counts as ambiguous.
pub fn classify_failure(trace: &EpisodeTrace, threshold: usize) -> Option<FailureMode> {
    if trace.final_error() < threshold {
        return None;
    }
    if peak_regions(&trace.final_belief) >= 2 {
        Some(FailureMode::Ambiguity)
    } else if trace.steps.iter().any(|s| s.error < threshold) {
        Some(FailureMode::Drift)
    } else {
        Some(FailureMode::Other)
    }
}

pub fn failure_taxonomy(traces: &[EpisodeTrace], threshold: usize) -> Taxonomy {
    let mut t = Taxonomy::default();
    for trace in traces {
        match classify_failure(trace, threshold) {
            Some(FailureMode::Drift) => t.drift += 1,
            Some(FailureMode::Ambiguity) => t.ambiguity += 1,
            Some(FailureMode::Other) => t.other += 1,
            None => {}
        }
    }
    t
}
