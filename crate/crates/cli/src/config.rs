//! Run configuration: one TOML file, every key optional, unknown keys
//! rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tactloc::datagen::{GenPlan, NUM_CLASSES};
use tactloc::evalharness::EvalOptions;
use tactloc::models::Decoding;
use tactloc::training::HyperParams;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridSection,
    pub sim: SimSection,
    pub data: DataSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub models: ModelSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub height: usize,
    pub width: usize,
    /// Side of the square tactile footprint.
    pub footprint: usize,
    /// Likelihood levels; only 16 is supported.
    pub classes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub motion_noise: f64,
    pub sensor_noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub dir: PathBuf,
    pub train: usize,
    pub val: usize,
    pub test_primitive: usize,
    pub test_composite: usize,
    pub transition_episodes: usize,
    pub transition_length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub obs_lr: f64,
    pub motion_lr: f64,
    pub scenes_per_batch: usize,
    pub queries_per_scene: usize,
    pub queries_per_epoch: usize,
    pub motion_batch: usize,
    pub obs_epochs: usize,
    pub motion_epochs: usize,
    pub contact_fraction: f64,
    pub class_balance: f64,
    pub val_queries: usize,
    pub val_interval: usize,
    pub label_cache: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub episodes_per_scene: usize,
    pub threshold: usize,
    /// `expected` or `argmax`.
    pub decoding: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Checkpoints, logs, and reports live here.
    pub dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            grid: GridSection::default(),
            sim: SimSection::default(),
            data: DataSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            models: ModelSection::default(),
        }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        let p = GenPlan::default();
        GridSection {
            height: p.height,
            width: p.width,
            footprint: p.k,
            classes: NUM_CLASSES,
        }
    }
}

impl Default for SimSection {
    fn default() -> Self {
        let e = EvalOptions::default();
        SimSection {
            motion_noise: e.motion_noise,
            sensor_noise: e.sensor_noise,
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        let p = GenPlan::default();
        DataSection {
            dir: PathBuf::from("data"),
            train: p.train,
            val: p.val,
            test_primitive: p.test_primitive,
            test_composite: p.test_composite,
            transition_episodes: p.transition_episodes,
            transition_length: p.transition_length,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let h = HyperParams::default();
        TrainSection {
            obs_lr: h.obs_lr,
            motion_lr: h.motion_lr,
            scenes_per_batch: h.scenes_per_batch,
            queries_per_scene: h.queries_per_scene,
            queries_per_epoch: h.queries_per_epoch,
            motion_batch: h.motion_batch,
            obs_epochs: h.obs_epochs,
            motion_epochs: h.motion_epochs,
            contact_fraction: h.contact_fraction,
            class_balance: h.class_balance,
            val_queries: h.val_queries,
            val_interval: h.val_interval,
            label_cache: h.label_cache,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        let e = EvalOptions::default();
        EvalSection {
            episodes_per_scene: e.episodes_per_scene,
            threshold: e.threshold,
            decoding: "expected".into(),
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    /// Parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Missing(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = Self::parse(&text)?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let g = &self.grid;
        if g.height < 16 || g.width < 16 || g.height % 4 != 0 || g.width % 4 != 0 {
            return bad(format!("grid {}x{} must be at least 16x16 and divisible by 4", g.height, g.width));
        }
        if g.footprint == 0 || g.footprint % 2 == 0 {
            return bad(format!("footprint {} must be odd", g.footprint));
        }
        if g.classes != NUM_CLASSES {
            return bad(format!("classes must be {NUM_CLASSES}, got {}", g.classes));
        }
        if !(0.0..=1.0).contains(&self.sim.motion_noise) {
            return bad("sim.motion_noise must lie in [0, 1]".into());
        }
        if !(self.sim.sensor_noise >= 0.0 && self.sim.sensor_noise.is_finite()) {
            return bad("sim.sensor_noise must be finite and non-negative".into());
        }
        let d = &self.data;
        if d.train == 0 || d.val == 0 {
            return bad("data.train and data.val must be at least 1".into());
        }
        if d.transition_episodes == 0 || d.transition_length == 0 {
            return bad("data.transition_episodes and data.transition_length must be at least 1".into());
        }
        if self.eval.episodes_per_scene == 0 || self.eval.threshold == 0 {
            return bad("eval.episodes_per_scene and eval.threshold must be at least 1".into());
        }
        self.decoding()?;
        self.hyper()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn plan(&self) -> GenPlan {
        GenPlan {
            height: self.grid.height,
            width: self.grid.width,
            k: self.grid.footprint,
            motion_noise: self.sim.motion_noise,
            seed: self.seed,
            train: self.data.train,
            val: self.data.val,
            test_primitive: self.data.test_primitive,
            test_composite: self.data.test_composite,
            transition_episodes: self.data.transition_episodes,
            transition_length: self.data.transition_length,
        }
    }

    pub fn hyper(&self) -> HyperParams {
        let t = &self.train;
        HyperParams {
            obs_lr: t.obs_lr,
            motion_lr: t.motion_lr,
            scenes_per_batch: t.scenes_per_batch,
            queries_per_scene: t.queries_per_scene,
            queries_per_epoch: t.queries_per_epoch,
            motion_batch: t.motion_batch,
            obs_epochs: t.obs_epochs,
            motion_epochs: t.motion_epochs,
            contact_fraction: t.contact_fraction,
            class_balance: t.class_balance,
            val_queries: t.val_queries,
            val_interval: t.val_interval,
            label_cache: t.label_cache,
            seed: self.seed,
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            episodes_per_scene: self.eval.episodes_per_scene,
            threshold: self.eval.threshold,
            motion_noise: self.sim.motion_noise,
            sensor_noise: self.sim.sensor_noise,
            seed: self.seed,
        }
    }

    pub fn decoding(&self) -> Result<Decoding, CliError> {
        match self.eval.decoding.as_str() {
            "expected" => Ok(Decoding::Expected),
            "argmax" => Ok(Decoding::Argmax),
            other => Err(CliError::Config(format!(
                "eval.decoding must be \"expected\" or \"argmax\", got {other:?}"
            ))),
        }
    }
}
