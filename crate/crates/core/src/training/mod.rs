//! Training loops for the observation and motion networks.

mod checkpoint;
mod labels;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use tactloc_numerics::{categorical_cross_entropy, weighted_categorical_cross_entropy, AdamState, Mode};

pub use checkpoint::{config_hash, load_training_checkpoint, save_training_checkpoint, TrainingCheckpoint};
pub use labels::LabelCache;

use crate::datagen::{class_value, ScanRecord, Transition, NUM_CLASSES};
use crate::error::Error;
use crate::filter::{ActionDir, GridState};
use crate::models::{depth_input, obs_input, MotionNet, ObservationNet, ObservationNetConfig};
use crate::seeds::{self, stream};

#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    pub obs_lr: f64,
    pub motion_lr: f64,
    /// Scenes per observation batch; their images are encoded once.
    pub scenes_per_batch: usize,
    /// Queries drawn from each scene of a batch.
    pub queries_per_scene: usize,
    /// Queries per training scene and epoch.
    pub queries_per_epoch: usize,
    pub motion_batch: usize,
    pub obs_epochs: usize,
    pub motion_epochs: usize,
    /// Minimum share of contact states among the queries of a scene.
    pub contact_fraction: f64,
    /// Exponent of the per-map inverse class-frequency pixel weights in the
    /// training loss; 0 gives plain cross-entropy.
    pub class_balance: f64,
    /// Validation queries per validation scene.
    pub val_queries: usize,
    pub val_interval: usize,
    pub label_cache: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            obs_lr: 3e-4,
            motion_lr: 1e-3,
            scenes_per_batch: 4,
            queries_per_scene: 16,
            queries_per_epoch: 32,
            motion_batch: 64,
            obs_epochs: 30,
            motion_epochs: 8,
            contact_fraction: 0.75,
            class_balance: 0.5,
            val_queries: 32,
            val_interval: 1,
            label_cache: 4096,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.obs_lr > 0.0 && self.motion_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.scenes_per_batch == 0 || self.queries_per_scene == 0 || self.motion_batch == 0 {
            return bad("batch sizes must be at least 1");
        }
        if self.queries_per_epoch == 0 || self.val_interval == 0 {
            return bad("queries per epoch and validation interval must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.contact_fraction) {
            return bad("contact fraction must lie in [0, 1]");
        }
        if !(0.0..=2.0).contains(&self.class_balance) {
            return bad("class balance exponent must lie in [0, 2]");
        }
        Ok(())
    }
}

/// Validation metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: f64,
    /// Mean absolute error of the expected-value decoding against the label
    /// value.
    pub mae: f64,
}

/// Per-pixel metrics of predicted class probabilities against labels.
/// Returns the number of pixels whose argmax class equals the label and the
/// summed absolute error of the expected-value decoding.
pub fn metrics_from_probs(probs: &[f32], labels: &[u8], classes: usize, cells: usize) -> (usize, f64) {
    let samples = labels.len() / cells;
    let (mut correct, mut abs_err) = (0usize, 0.0f64);
    for n in 0..samples {
        let p = &probs[n * classes * cells..(n + 1) * classes * cells];
        for i in 0..cells {
            let mut best = 0;
            let mut expected = 0.0;
            for c in 0..classes {
                let v = p[c * cells + i];
                if v > p[best * cells + i] {
                    best = c;
                }
                expected += v as f64 * class_value(c as u8);
            }
            let label = labels[n * cells + i];
            correct += (best == label as usize) as usize;
            abs_err += (expected - class_value(label)).abs();
        }
    }
    (correct, abs_err)
}

/// Fixed validation queries: a seeded mix of contact and free states.
pub fn validation_queries(records: &[ScanRecord], hyper: &HyperParams) -> Vec<Vec<GridState>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut rng = seeds::rng(hyper.seed, &[stream::OBS_BATCH, u64::MAX, i as u64]);
            sample_queries(r, hyper.val_queries, hyper.contact_fraction, &mut rng)
        })
        .collect()
}

/// Mean cross-entropy, pixel accuracy and decoded-value error over the given
/// queries, in inference mode.
pub fn validate(
    net: &mut ObservationNet<f32>,
    records: &[ScanRecord],
    queries: &[Vec<GridState>],
    cache: &mut LabelCache,
) -> Result<Metrics, Error> {
    let cfg = net.config().clone();
    let cells = cfg.height * cfg.width;
    let (mut loss_sum, mut correct, mut abs_err, mut count) = (0.0, 0usize, 0.0, 0usize);
    for (si, (r, qs)) in records.iter().zip(queries).enumerate() {
        if qs.is_empty() {
            continue;
        }
        let depth = depth_input::<f32>(&[&r.depth], r.height, r.width);
        for chunk in qs.chunks(32) {
            let obs: Vec<&[f32]> = chunk.iter().map(|&q| r.observation(q)).collect();
            let labels: Vec<u8> = chunk
                .iter()
                .flat_map(|&q| cache.get(si, r, q).to_vec())
                .collect();
            let probs = net.forward(Some(&depth), &vec![0; chunk.len()], &obs_input(&obs), Mode::Eval)?;
            let ce = categorical_cross_entropy(&probs, &labels)?;
            loss_sum += ce.value as f64 * chunk.len() as f64;
            let (c, e) = metrics_from_probs(probs.values(), &labels, cfg.classes, cells);
            correct += c;
            abs_err += e;
            count += chunk.len();
        }
    }
    let pixels = (count * cells).max(1) as f64;
    Ok(Metrics {
        loss: loss_sum / count.max(1) as f64,
        accuracy: correct as f64 / pixels,
        mae: abs_err / pixels,
    })
}

/// Draws `n` query states: at least `contact_fraction·n` contact states when
/// the scene has any, the rest uniform over all states.
pub fn sample_queries<R: Rng + ?Sized>(record: &ScanRecord, n: usize, contact_fraction: f64, rng: &mut R) -> Vec<GridState> {
    let contact = record.contact_states();
    let n_contact = if contact.is_empty() {
        0
    } else {
        (contact_fraction * n as f64).ceil() as usize
    };
    let states = record.num_states();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let s = if i < n_contact {
            contact[rng.random_range(0..contact.len())]
        } else {
            GridState::from_index(rng.random_range(0..states), record.width)
        };
        out.push(s);
    }
    out
}

/// Pixel weights `(cells / count(class))^power`, rescaled so every map's
/// weights average to one.
pub fn class_weights(labels: &[u8], cells: usize, power: f64) -> Vec<f32> {
    let mut out = Vec::with_capacity(labels.len());
    for map in labels.chunks(cells) {
        let mut counts = [0usize; 256];
        for &c in map {
            counts[c as usize] += 1;
        }
        let raw: Vec<f64> = map
            .iter()
            .map(|&c| (map.len() as f64 / counts[c as usize] as f64).powf(power))
            .collect();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        out.extend(raw.iter().map(|w| (w / mean) as f32));
    }
    out
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub epoch: usize,
    pub split: &'static str,
    pub loss: f64,
    pub accuracy: f64,
    pub wall: f64,
}

impl std::fmt::Display for LogRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "epoch={} split={} loss={:.6} acc={:.4} wall={:.1}",
            self.epoch, self.split, self.loss, self.accuracy, self.wall
        )
    }
}

/// Result of observation-model training.
pub struct ObsTraining {
    /// Parameters with the lowest validation loss seen.
    pub best: ObservationNet<f32>,
    pub best_epoch: usize,
    /// Final training state, for resuming.
    pub checkpoint: TrainingCheckpoint,
    pub log: Vec<LogRecord>,
}

fn check_shapes(cfg: &ObservationNetConfig, records: &[ScanRecord]) -> Result<(), Error> {
    for r in records {
        if (r.height, r.width, r.k) != (cfg.height, cfg.width, cfg.k) {
            return Err(Error::Training(format!(
                "scene {} is {}x{} with K={}, model expects {}x{} with K={}",
                r.scene_id, r.height, r.width, r.k, cfg.height, cfg.width, cfg.k
            )));
        }
    }
    Ok(())
}

/// Trains (or resumes training of) the observation network. The returned
/// best network is the one with the lowest validation cross-entropy.
pub fn train_observation_model(
    config: &ObservationNetConfig,
    train: &[ScanRecord],
    val: &[ScanRecord],
    hyper: &HyperParams,
    resume: Option<TrainingCheckpoint>,
    on_log: &mut dyn FnMut(&LogRecord),
) -> Result<ObsTraining, Error> {
    hyper.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Training("training needs nonempty train and validation splits".into()));
    }
    check_shapes(config, train)?;
    check_shapes(config, val)?;
    let hash = config_hash(config, hyper);

    let (mut net, mut adam, start_epoch, mut history, mut best) = match resume {
        Some(ck) => {
            if ck.config_hash != hash {
                return Err(Error::Training("checkpoint was produced with a different configuration".into()));
            }
            let best = ObservationNet::from_entries(&ck.best_entries)?;
            (ck.net, ck.adam, ck.epoch, ck.val_history, Some((ck.best_epoch, best)))
        }
        None => {
            let mut rng = seeds::rng(hyper.seed, &[stream::OBS_INIT]);
            (
                ObservationNet::<f32>::new(config.clone(), &mut rng)?,
                AdamState::new(hyper.obs_lr),
                0,
                Vec::new(),
                None,
            )
        }
    };

    let cells = config.height * config.width;
    let mut train_cache = LabelCache::new(hyper.label_cache);
    let mut val_cache = LabelCache::new(usize::MAX);
    let val_queries = validation_queries(val, hyper);
    let started = Instant::now();
    let mut log = Vec::new();
    let mut emit = |r: LogRecord, log: &mut Vec<LogRecord>| {
        on_log(&r);
        log.push(r);
    };

    for epoch in start_epoch + 1..=hyper.obs_epochs {
        let mut rng = seeds::rng(hyper.seed, &[stream::OBS_BATCH, epoch as u64]);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut queries: Vec<Vec<GridState>> = Vec::with_capacity(train.len());
        for r in train {
            let mut q = sample_queries(r, hyper.queries_per_epoch, hyper.contact_fraction, &mut rng);
            q.shuffle(&mut rng);
            queries.push(q);
        }

        let (mut loss_sum, mut correct, mut samples) = (0.0, 0usize, 0usize);
        for group in order.chunks(hyper.scenes_per_batch) {
            let depths: Vec<&[f32]> = group.iter().map(|&s| train[s].depth.as_slice()).collect();
            let depth = depth_input::<f32>(&depths, config.height, config.width);
            for part in 0..hyper.queries_per_epoch.div_ceil(hyper.queries_per_scene) {
                let mut scene_of = Vec::new();
                let mut obs = Vec::new();
                let mut labels = Vec::new();
                for (slot, &s) in group.iter().enumerate() {
                    let qs = queries[s].chunks(hyper.queries_per_scene).nth(part).unwrap_or(&[]);
                    for &q in qs {
                        scene_of.push(slot);
                        obs.push(train[s].observation(q));
                        labels.extend_from_slice(train_cache.get(s, &train[s], q));
                    }
                }
                if obs.is_empty() {
                    continue;
                }
                net.zero_grads();
                let probs = net.forward(Some(&depth), &scene_of, &obs_input(&obs), Mode::Train)?;
                let ce = if hyper.class_balance > 0.0 {
                    let weights = class_weights(&labels, cells, hyper.class_balance);
                    weighted_categorical_cross_entropy(&probs, &labels, &weights)?
                } else {
                    categorical_cross_entropy(&probs, &labels)?
                };
                net.backward(&ce.grad)?;
                let mut params: Vec<_> = net.params_mut().into_iter().map(|(_, p)| p).collect();
                adam.step(&mut params)?;
                loss_sum += ce.value as f64 * obs.len() as f64;
                correct += metrics_from_probs(probs.values(), &labels, config.classes, cells).0;
                samples += obs.len();
            }
        }
        let wall = started.elapsed().as_secs_f64();
        emit(
            LogRecord {
                epoch,
                split: "train",
                loss: loss_sum / samples.max(1) as f64,
                accuracy: correct as f64 / (samples * cells).max(1) as f64,
                wall,
            },
            &mut log,
        );

        if epoch % hyper.val_interval == 0 || epoch == hyper.obs_epochs {
            let m = validate(&mut net, val, &val_queries, &mut val_cache)?;
            emit(
                LogRecord {
                    epoch,
                    split: "val",
                    loss: m.loss,
                    accuracy: m.accuracy,
                    wall: started.elapsed().as_secs_f64(),
                },
                &mut log,
            );
            let improved = history.iter().all(|&(_, l)| m.loss < l);
            history.push((epoch, m.loss));
            if improved {
                best = Some((epoch, ObservationNet::from_entries(&net.to_entries())?));
            }
        }
    }

    let (best_epoch, mut best) = match best {
        Some(b) => b,
        None => (start_epoch, ObservationNet::from_entries(&net.to_entries())?),
    };
    let checkpoint = TrainingCheckpoint {
        best_entries: best.to_entries(),
        best_epoch,
        net,
        adam,
        epoch: hyper.obs_epochs.max(start_epoch),
        val_history: history,
        config_hash: hash,
    };
    Ok(ObsTraining {
        best,
        best_epoch,
        checkpoint,
        log,
    })
}

/// Result of motion-model training.
pub struct MotionTraining {
    pub net: MotionNet,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
    /// Actions with no transitions; their kernels stay at initialization.
    pub missing_actions: Vec<ActionDir>,
}

pub fn train_motion_model(
    transitions: &[Transition],
    height: usize,
    width: usize,
    hyper: &HyperParams,
) -> Result<MotionTraining, Error> {
    hyper.validate()?;
    if transitions.is_empty() {
        return Err(Error::Training("no transitions to train on".into()));
    }
    let missing_actions: Vec<ActionDir> = ActionDir::ALL
        .into_iter()
        .filter(|a| !transitions.iter().any(|t| t.action == *a))
        .collect();
    let mut net = MotionNet::uniform();
    let mut adam = AdamState::<f64>::new(hyper.motion_lr);
    let mut losses = Vec::with_capacity(hyper.motion_epochs);
    let mut order: Vec<usize> = (0..transitions.len()).collect();
    for epoch in 1..=hyper.motion_epochs {
        let mut rng = seeds::rng(hyper.seed, &[stream::MOTION_BATCH, epoch as u64]);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(hyper.motion_batch) {
            let batch: Vec<Transition> = chunk.iter().map(|&i| transitions[i]).collect();
            net.logits_mut().zero_grad();
            total += net.accumulate_batch(&batch, height, width)?;
            adam.step(&mut [net.logits_mut()])?;
            batches += 1;
        }
        losses.push(total / batches as f64);
    }
    Ok(MotionTraining {
        net,
        losses,
        missing_actions,
    })
}

/// Cross-entropy of the uniform class distribution, `ln 16`.
pub fn uniform_cross_entropy() -> f64 {
    (NUM_CLASSES as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{collect_transitions, scan_scene};
    use crate::simworld::{generate_scene, ObjectFamily};

    #[test]
    fn class_weights_balance_each_map() {
        let labels = [3, 3, 3, 7, 1, 1, 1, 1];
        let w = class_weights(&labels, 4, 1.0);
        // classes 3 and 7 carry equal total weight in the first map
        assert!((3.0 * w[0] - w[3]).abs() < 1e-6);
        assert!((w[..4].iter().sum::<f32>() - 4.0).abs() < 1e-5);
        assert!(w[4..].iter().all(|&x| (x - 1.0).abs() < 1e-6));
        assert!(class_weights(&labels, 4, 0.0).iter().all(|&x| x == 1.0));
    }

    #[test]
    fn query_sampling_respects_contact_share() {
        let scene = generate_scene(&mut seeds::rng(1, &[]), ObjectFamily::Primitive, 32, 32).unwrap();
        let r = scan_scene(0, &scene, 5);
        let mut rng = seeds::rng(2, &[]);
        let q = sample_queries(&r, 32, 0.25, &mut rng);
        assert_eq!(q.len(), 32);
        assert!(q.iter().filter(|&&s| r.is_contact(s)).count() >= 8);
        let empty = scan_scene(0, &crate::simworld::SceneConfig::empty(16, 16), 5);
        assert_eq!(sample_queries(&empty, 10, 0.25, &mut rng).len(), 10);
    }

    #[test]
    fn metrics_on_perfect_and_uniform_predictions() {
        let labels = vec![3u8, 15, 0, 7];
        let mut perfect = vec![0.0f32; 16 * 4];
        for (i, &l) in labels.iter().enumerate() {
            perfect[l as usize * 4 + i] = 1.0;
        }
        let (correct, err) = metrics_from_probs(&perfect, &labels, 16, 4);
        assert_eq!(correct, 4);
        assert!(err < 1e-6);
        let p = tactloc_numerics::DiffArray::from_vec(&[1, 16, 4], perfect).unwrap();
        assert!(categorical_cross_entropy(&p, &labels).unwrap().value < 1e-6);

        let uniform = tactloc_numerics::DiffArray::from_vec(&[1, 16, 4], vec![1.0f32 / 16.0; 64]).unwrap();
        let ce = categorical_cross_entropy(&uniform, &labels).unwrap().value as f64;
        assert!((ce - uniform_cross_entropy()).abs() < 1e-5);
    }

    #[test]
    fn motion_recovers_deterministic_shift() {
        let mut rng = seeds::rng(5, &[]);
        let t = collect_transitions(16, 16, 0.0, 200, 20, &mut rng);
        let hyper = HyperParams {
            motion_epochs: 40,
            motion_lr: 1e-2,
            ..HyperParams::default()
        };
        let out = train_motion_model(&t, 16, 16, &hyper).unwrap();
        assert!(out.missing_actions.is_empty());
        let east = out.net.kernel(ActionDir::East).at(1, 0);
        assert!(east > 0.99, "east mass {east}, losses {:?}", out.losses);
        assert!(out.losses.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn motion_loss_decreases_from_uniform_start() {
        let mut rng = seeds::rng(6, &[]);
        let t = collect_transitions(16, 16, 0.0, 20, 32, &mut rng);
        let mut net = MotionNet::uniform();
        let mut adam = AdamState::<f64>::new(1e-2);
        let mut prev = f64::INFINITY;
        for _ in 0..10 {
            net.logits_mut().zero_grad();
            let l = net.accumulate_batch(&t, 16, 16).unwrap();
            assert!(l < prev);
            prev = l;
            adam.step(&mut [net.logits_mut()]).unwrap();
        }
    }

    #[test]
    fn missing_action_is_reported() {
        let t = vec![Transition {
            from: GridState::new(2, 2),
            action: ActionDir::East,
            to: GridState::new(3, 2),
        }];
        let out = train_motion_model(&t, 8, 8, &HyperParams { motion_epochs: 1, ..HyperParams::default() }).unwrap();
        assert_eq!(out.missing_actions, vec![ActionDir::North, ActionDir::South, ActionDir::West]);
        assert_eq!(out.net.kernel(ActionDir::North), MotionNet::uniform().kernel(ActionDir::North));
    }
}
