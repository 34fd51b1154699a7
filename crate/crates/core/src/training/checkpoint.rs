use std::path::Path;

use tactloc_numerics::checkpoint::TlocEntry;
use tactloc_numerics::AdamState;

use super::HyperParams;
use crate::error::Error;
use crate::models::{read_entries, ObservationNet, ObservationNetConfig};

/// Resumable observation-model training state.
pub struct TrainingCheckpoint {
    pub net: ObservationNet<f32>,
    pub adam: AdamState<f32>,
    /// Last completed epoch.
    pub epoch: usize,
    /// `(epoch, validation loss)` pairs.
    pub val_history: Vec<(usize, f64)>,
    pub best_entries: Vec<TlocEntry>,
    pub best_epoch: usize,
    pub config_hash: u64,
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes.into_iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Hash of everything that must stay fixed across a resumed run. Epoch
/// counts and the validation interval may change.
pub fn config_hash(config: &ObservationNetConfig, hyper: &HyperParams) -> u64 {
    let mut bytes = Vec::new();
    for v in config.to_header() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for v in [hyper.obs_lr, hyper.contact_fraction, hyper.class_balance] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for v in [
        hyper.scenes_per_batch,
        hyper.queries_per_scene,
        hyper.queries_per_epoch,
        hyper.val_queries,
    ] {
        bytes.extend_from_slice(&(v as u64).to_le_bytes());
    }
    bytes.extend_from_slice(&hyper.seed.to_le_bytes());
    fnv1a(bytes)
}

fn scalar(name: &str, v: f32) -> TlocEntry {
    TlocEntry::new(name, &[1], vec![v])
}

fn meta<'a>(entries: &'a [TlocEntry], name: &str) -> Result<&'a TlocEntry, Error> {
    entries
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::Training(format!("checkpoint lacks {name}")))
}

pub fn save_training_checkpoint(ck: &mut TrainingCheckpoint, path: &Path) -> Result<(), Error> {
    let mut entries = ck.net.to_entries();
    entries.extend(ck.best_entries.iter().map(|e| TlocEntry {
        name: format!("best.{}", e.name),
        ..e.clone()
    }));
    let (first, second) = ck.adam.moments();
    for (i, (m, v)) in first.iter().zip(second).enumerate() {
        entries.push(TlocEntry::new(format!("adam.m.{i}"), &[m.len()], m.clone()));
        entries.push(TlocEntry::new(format!("adam.v.{i}"), &[v.len()], v.clone()));
    }
    entries.push(scalar("meta.adam_step", ck.adam.step_count() as f32));
    entries.push(scalar("meta.epoch", ck.epoch as f32));
    entries.push(scalar("meta.best_epoch", ck.best_epoch as f32));
    let hash: Vec<f32> = (0..4).map(|i| ((ck.config_hash >> (16 * i)) & 0xffff) as f32).collect();
    entries.push(TlocEntry::new("meta.config_hash", &[4], hash));
    let hist: Vec<f32> = ck
        .val_history
        .iter()
        .flat_map(|&(e, l)| [e as f32, l as f32])
        .collect();
    entries.push(TlocEntry::new("meta.val_history", &[ck.val_history.len(), 2], hist));
    let f = std::fs::File::create(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    tactloc_numerics::checkpoint::write_tloc(std::io::BufWriter::new(f), &entries)?;
    Ok(())
}

pub fn load_training_checkpoint(path: &Path, lr: f64) -> Result<TrainingCheckpoint, Error> {
    let entries = read_entries(path)?;
    let (best, rest): (Vec<TlocEntry>, Vec<TlocEntry>) = entries.into_iter().partition(|e| e.name.starts_with("best."));
    let best_entries: Vec<TlocEntry> = best
        .into_iter()
        .map(|e| TlocEntry {
            name: e.name["best.".len()..].to_string(),
            ..e
        })
        .collect();
    let mut net = ObservationNet::<f32>::from_entries(&rest)?;
    let n_params = net.params_mut().len();
    let mut first = Vec::new();
    let mut second = Vec::new();
    if rest.iter().any(|e| e.name == "adam.m.0") {
        for i in 0..n_params {
            first.push(meta(&rest, &format!("adam.m.{i}"))?.values.clone());
            second.push(meta(&rest, &format!("adam.v.{i}"))?.values.clone());
        }
    }
    let mut adam = AdamState::new(lr);
    adam.restore(meta(&rest, "meta.adam_step")?.values[0] as u64, first, second);
    let hash = meta(&rest, "meta.config_hash")?
        .values
        .iter()
        .enumerate()
        .fold(0u64, |h, (i, &v)| h | ((v as u64) << (16 * i)));
    let hist = &meta(&rest, "meta.val_history")?.values;
    Ok(TrainingCheckpoint {
        net,
        adam,
        epoch: meta(&rest, "meta.epoch")?.values[0] as usize,
        val_history: hist.chunks_exact(2).map(|c| (c[0] as usize, c[1] as f64)).collect(),
        best_entries,
        best_epoch: meta(&rest, "meta.best_epoch")?.values[0] as usize,
        config_hash: hash,
    })
}
