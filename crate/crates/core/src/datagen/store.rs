//! On-disk dataset layout.
//!
//! A dataset directory holds `manifest.toml`, one `scene_NNNN.bin` blob and
//! one `scene_NNNN.scene` text file per scene, and `transitions.bin`.
//!
//! Scene blob, little-endian: magic `TLDS`, `u32` format version, `u32` H,
//! `u32` W, `u32` K, `H·W` depth `f32`s, `H·W·K²` observation `f32`s, then a
//! CRC32 of every preceding byte.
//!
//! Transition file: magic `TLTR`, `u32` version, `u64` count, then per
//! transition five `u32`s (from x, from y, action, to x, to y), then CRC32.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ScanRecord, Transition, NUM_CLASSES};
use crate::error::DatasetError;
use crate::filter::{ActionDir, GridState};
use crate::simworld::{parse_scene, write_scene, ObjectFamily, SceneConfig};

pub const FORMAT_VERSION: u32 = 1;
const SCENE_MAGIC: &[u8; 4] = b"TLDS";
const TRANSITION_MAGIC: &[u8; 4] = b"TLTR";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TRANSITIONS_FILE: &str = "transitions.bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntry {
    pub index: usize,
    pub split: Split,
    pub family: String,
    pub blob: String,
    pub scene: String,
    pub bytes: u64,
    pub crc32: u32,
}

impl SceneEntry {
    pub fn family(&self) -> Option<ObjectFamily> {
        ObjectFamily::parse(&self.family)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub height: usize,
    pub width: usize,
    pub k: usize,
    pub classes: usize,
    pub seed: u64,
    pub motion_noise: f64,
    pub num_scenes: usize,
    /// One sample per (scene, state).
    pub num_samples: usize,
    pub num_transitions: usize,
    pub transitions_crc32: u32,
    pub scenes: Vec<SceneEntry>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SceneEntry> {
        self.scenes.iter().filter(move |e| e.split == split)
    }

    pub fn split_family(&self, split: Split, family: ObjectFamily) -> Vec<usize> {
        self.scenes
            .iter()
            .filter(|e| e.split == split && e.family() == Some(family))
            .map(|e| e.index)
            .collect()
    }
}

/// One scene as stored: its configuration and its scan.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredScene {
    pub split: Split,
    pub config: SceneConfig,
    pub record: ScanRecord,
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io(std::io::Error::new(source.kind(), format!("{}: {source}", path.display())))
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn encode_scene(record: &ScanRecord) -> Vec<u8> {
    let mut buf = Vec::with_capacity(20 + 4 * (record.depth.len() + record.observations.len()) + 4);
    buf.extend_from_slice(SCENE_MAGIC);
    put_u32(&mut buf, FORMAT_VERSION);
    put_u32(&mut buf, record.height as u32);
    put_u32(&mut buf, record.width as u32);
    put_u32(&mut buf, record.k as u32);
    for v in record.depth.iter().chain(&record.observations) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    put_u32(&mut buf, crc);
    buf
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn decode_scene(index: usize, bytes: &[u8]) -> Result<ScanRecord, DatasetError> {
    let what = format!("scene {index}");
    if bytes.len() < 24 {
        return Err(DatasetError::Truncated {
            what,
            expected: 24,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != SCENE_MAGIC {
        return Err(DatasetError::Manifest(format!("scene {index}: bad magic")));
    }
    let version = read_u32(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(DatasetError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (h, w, k) = (read_u32(bytes, 8) as usize, read_u32(bytes, 12) as usize, read_u32(bytes, 16) as usize);
    let floats = h * w + h * w * k * k;
    let expected = 20 + 4 * floats + 4;
    if bytes.len() != expected {
        return Err(DatasetError::Truncated {
            what,
            expected,
            found: bytes.len(),
        });
    }
    let body = &bytes[..expected - 4];
    if crc32fast::hash(body) != read_u32(bytes, expected - 4) {
        return Err(DatasetError::Checksum { index });
    }
    let vals: Vec<f32> = body[20..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let (depth, observations) = vals.split_at(h * w);
    Ok(ScanRecord {
        scene_id: index as u32,
        height: h,
        width: w,
        k,
        depth: depth.to_vec(),
        observations: observations.to_vec(),
    })
}

fn encode_transitions(ts: &[Transition]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + 20 * ts.len() + 4);
    buf.extend_from_slice(TRANSITION_MAGIC);
    put_u32(&mut buf, FORMAT_VERSION);
    buf.extend_from_slice(&(ts.len() as u64).to_le_bytes());
    for t in ts {
        for v in [t.from.x, t.from.y, t.action.index(), t.to.x, t.to.y] {
            put_u32(&mut buf, v as u32);
        }
    }
    let crc = crc32fast::hash(&buf);
    put_u32(&mut buf, crc);
    buf
}

fn decode_transitions(bytes: &[u8]) -> Result<Vec<Transition>, DatasetError> {
    let what = "transitions".to_string();
    if bytes.len() < 20 {
        return Err(DatasetError::Truncated {
            what,
            expected: 20,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != TRANSITION_MAGIC {
        return Err(DatasetError::Manifest("transitions: bad magic".into()));
    }
    let version = read_u32(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(DatasetError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let expected = 16 + 20 * count + 4;
    if bytes.len() != expected {
        return Err(DatasetError::Truncated {
            what,
            expected,
            found: bytes.len(),
        });
    }
    if crc32fast::hash(&bytes[..expected - 4]) != read_u32(bytes, expected - 4) {
        return Err(DatasetError::TransitionsChecksum);
    }
    bytes[16..expected - 4]
        .chunks_exact(20)
        .map(|c| {
            let f = |i: usize| read_u32(c, 4 * i) as usize;
            let action = ActionDir::from_index(f(2))
                .ok_or_else(|| DatasetError::Manifest(format!("bad action index {}", f(2))))?;
            Ok(Transition {
                from: GridState::new(f(0), f(1)),
                action,
                to: GridState::new(f(3), f(4)),
            })
        })
        .collect()
}

/// Writes a complete dataset. An existing manifest is only replaced when
/// `force` is set.
pub fn write_dataset(
    dir: &Path,
    scenes: &[StoredScene],
    transitions: &[Transition],
    seed: u64,
    force: bool,
) -> Result<DatasetManifest, DatasetError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() && !force {
        return Err(DatasetError::Exists(dir.to_path_buf()));
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let first = scenes
        .first()
        .ok_or_else(|| DatasetError::Manifest("dataset has no scenes".into()))?;
    let (height, width, k) = (first.record.height, first.record.width, first.record.k);
    let mut entries = Vec::with_capacity(scenes.len());
    for (index, s) in scenes.iter().enumerate() {
        if (s.record.height, s.record.width, s.record.k) != (height, width, k) {
            return Err(DatasetError::Manifest(format!("scene {index} has different dimensions")));
        }
        let blob = encode_scene(&s.record);
        let blob_name = format!("scene_{index:04}.bin");
        let scene_name = format!("scene_{index:04}.scene");
        let p = dir.join(&blob_name);
        fs::write(&p, &blob).map_err(|e| io_err(&p, e))?;
        let p = dir.join(&scene_name);
        fs::write(&p, write_scene(&s.config)).map_err(|e| io_err(&p, e))?;
        entries.push(SceneEntry {
            index,
            split: s.split,
            family: s.config.family.name().to_string(),
            blob: blob_name,
            scene: scene_name,
            bytes: blob.len() as u64,
            crc32: read_u32(&blob, blob.len() - 4),
        });
    }
    let tbytes = encode_transitions(transitions);
    let p = dir.join(TRANSITIONS_FILE);
    fs::write(&p, &tbytes).map_err(|e| io_err(&p, e))?;
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        height,
        width,
        k,
        classes: NUM_CLASSES,
        seed,
        motion_noise: first.config.motion_noise,
        num_scenes: scenes.len(),
        num_samples: scenes.len() * height * width,
        num_transitions: transitions.len(),
        transitions_crc32: read_u32(&tbytes, tbytes.len() - 4),
        scenes: entries,
    };
    let text = toml::to_string(&manifest).map_err(|e| DatasetError::Manifest(e.to_string()))?;
    fs::write(&manifest_path, text).map_err(|e| io_err(&manifest_path, e))?;
    Ok(manifest)
}

/// Open dataset; scenes are read on demand.
#[derive(Clone, Debug)]
pub struct Dataset {
    dir: PathBuf,
    manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self, DatasetError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(DatasetError::Missing(dir.to_path_buf()));
        }
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let manifest: DatasetManifest = toml::from_str(&text).map_err(|e| DatasetError::Manifest(e.to_string()))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(DatasetError::VersionMismatch {
                found: manifest.format_version,
                expected: FORMAT_VERSION,
            });
        }
        if manifest.scenes.len() != manifest.num_scenes
            || manifest.num_samples != manifest.num_scenes * manifest.height * manifest.width
        {
            return Err(DatasetError::Manifest("counts do not match the scene list".into()));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.manifest.num_scenes
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.num_scenes == 0
    }

    fn entry(&self, index: usize) -> Result<&SceneEntry, DatasetError> {
        self.manifest.scenes.get(index).ok_or(DatasetError::IndexOutOfRange {
            index,
            count: self.manifest.num_scenes,
        })
    }

    pub fn load_record(&self, index: usize) -> Result<ScanRecord, DatasetError> {
        let entry = self.entry(index)?;
        let p = self.dir.join(&entry.blob);
        let bytes = fs::read(&p).map_err(|e| io_err(&p, e))?;
        let rec = decode_scene(index, &bytes)?;
        if (rec.height, rec.width, rec.k) != (self.manifest.height, self.manifest.width, self.manifest.k) {
            return Err(DatasetError::Manifest(format!("scene {index} dimensions disagree with the manifest")));
        }
        Ok(rec)
    }

    pub fn load_config(&self, index: usize) -> Result<SceneConfig, DatasetError> {
        let entry = self.entry(index)?;
        let p = self.dir.join(&entry.scene);
        let text = fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        parse_scene(&text).map_err(|e| DatasetError::Manifest(format!("scene {index}: {e}")))
    }

    pub fn load_scene(&self, index: usize) -> Result<StoredScene, DatasetError> {
        Ok(StoredScene {
            split: self.entry(index)?.split,
            config: self.load_config(index)?,
            record: self.load_record(index)?,
        })
    }

    pub fn load_transitions(&self) -> Result<Vec<Transition>, DatasetError> {
        let p = self.dir.join(TRANSITIONS_FILE);
        let bytes = fs::read(&p).map_err(|e| io_err(&p, e))?;
        let ts = decode_transitions(&bytes)?;
        if ts.len() != self.manifest.num_transitions {
            return Err(DatasetError::Manifest("transition count disagrees with the manifest".into()));
        }
        Ok(ts)
    }
}

/// Loads every scene and the transitions.
pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<StoredScene>, Vec<Transition>), DatasetError> {
    let ds = Dataset::open(dir)?;
    let scenes = (0..ds.len()).map(|i| ds.load_scene(i)).collect::<Result<Vec<_>, _>>()?;
    let ts = ds.load_transitions()?;
    Ok((ds.manifest, scenes, ts))
}
