//! Self-supervised data: exhaustive per-state observation scans, likelihood
//! labels derived from observation distances, and random-walk transitions
//! for the motion model.

mod generate;
mod store;

use rand::Rng;

pub use generate::{generate_dataset, generate_scene_seeded, GenPlan, SCENE_RETRIES};
pub use store::{
    load_dataset, write_dataset, Dataset, DatasetManifest, SceneEntry, Split, StoredScene, FORMAT_VERSION,
};

use crate::filter::{ActionDir, GridState, LikelihoodMap};
use crate::simworld::{self, render_depth, CameraModel, SceneConfig};

/// Number of discrete likelihood levels.
pub const NUM_CLASSES: usize = 16;

/// Decoded value of a class index.
pub fn class_value(class: u8) -> f64 {
    class as f64 / (NUM_CLASSES - 1) as f64
}

/// Quantizes a value in `[0, 1]`, rounding half away from zero.
pub fn quantize(v: f64) -> u8 {
    (v * (NUM_CLASSES - 1) as f64).round() as u8
}

/// Depth image and the noise-free observation at every grid state.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanRecord {
    pub scene_id: u32,
    pub height: usize,
    pub width: usize,
    pub k: usize,
    /// `H·W` depth values, row-major.
    pub depth: Vec<f32>,
    /// `H·W` observations of length `K²`, indexed by state.
    pub observations: Vec<f32>,
}

impl ScanRecord {
    pub fn obs_len(&self) -> usize {
        self.k * self.k
    }

    pub fn num_states(&self) -> usize {
        self.height * self.width
    }

    pub fn observation(&self, s: GridState) -> &[f32] {
        let n = self.obs_len();
        let i = s.index(self.width);
        &self.observations[i * n..(i + 1) * n]
    }

    pub fn is_contact(&self, s: GridState) -> bool {
        self.observation(s).iter().any(|&v| v != 0.0)
    }

    pub fn contact_states(&self) -> Vec<GridState> {
        (0..self.num_states())
            .map(|i| GridState::from_index(i, self.width))
            .filter(|&s| self.is_contact(s))
            .collect()
    }
}

/// Renders the depth image once and reads the noise-free footprint at every
/// state.
pub fn scan_scene(scene_id: u32, scene: &SceneConfig, k: usize) -> ScanRecord {
    let map = simworld::rasterize(scene);
    let depth = render_depth(&map, &CameraModel::default()).expect("default camera is valid");
    let mut observations = Vec::with_capacity(scene.height * scene.width * k * k);
    for y in 0..scene.height {
        for x in 0..scene.width {
            let o = simworld::sense_exact(&map, GridState::new(x, y), k);
            observations.extend(o.into_iter().map(|v| v as f32));
        }
    }
    ScanRecord {
        scene_id,
        height: scene.height,
        width: scene.width,
        k,
        depth: depth.values.into_iter().map(|v| v as f32).collect(),
        observations,
    }
}

/// Scalar similarity map and its class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledMap {
    pub values: Vec<f64>,
    pub classes: Vec<u8>,
}

/// Similarity of an arbitrary observation to every scanned state:
/// `v = 1 − (d − d_min)/(d_max − d_min)` with Euclidean `d`, or `v ≡ 1` when
/// all distances coincide.
pub fn likelihood_from_observation(record: &ScanRecord, obs: &[f32]) -> LabeledMap {
    let n = record.obs_len();
    assert_eq!(obs.len(), n, "observation length");
    let d: Vec<f64> = record
        .observations
        .chunks_exact(n)
        .map(|o| {
            o.iter()
                .zip(obs)
                .map(|(&a, &b)| {
                    let t = a as f64 - b as f64;
                    t * t
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let d_min = d.iter().copied().fold(f64::INFINITY, f64::min);
    let d_max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values: Vec<f64> = if d_max == d_min {
        vec![1.0; d.len()]
    } else {
        d.iter().map(|&x| 1.0 - (x - d_min) / (d_max - d_min)).collect()
    };
    let classes = values.iter().map(|&v| quantize(v)).collect();
    LabeledMap { values, classes }
}

pub fn build_likelihood_map(record: &ScanRecord, query: GridState) -> LabeledMap {
    likelihood_from_observation(record, record.observation(query))
}

/// Likelihood model backed by the ground-truth scan instead of a network.
pub fn oracle_likelihood(record: &ScanRecord, obs: &[f32]) -> LikelihoodMap {
    let m = likelihood_from_observation(record, obs);
    LikelihoodMap::new(record.height, record.width, m.values).expect("values in [0, 1]")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub from: GridState,
    pub action: ActionDir,
    pub to: GridState,
}

/// Random walks with uniformly random actions and uniformly random starts.
pub fn collect_transitions<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    motion_noise: f64,
    episodes: usize,
    length: usize,
    rng: &mut R,
) -> Vec<Transition> {
    let mut out = Vec::with_capacity(episodes * length);
    for _ in 0..episodes {
        let mut s = GridState::new(rng.random_range(0..width), rng.random_range(0..height));
        for _ in 0..length {
            let action = ActionDir::ALL[rng.random_range(0..4)];
            let to = simworld::step(s, action, height, width, motion_noise, rng);
            out.push(Transition { from: s, action, to });
            s = to;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use crate::simworld::{ObjectSpec, Primitive, Shape};

    fn record_from(height: usize, width: usize, k: usize, obs: Vec<f32>) -> ScanRecord {
        ScanRecord {
            scene_id: 0,
            height,
            width,
            k,
            depth: vec![10.0; height * width],
            observations: obs,
        }
    }

    #[test]
    fn hand_computed_labels() {
        let r = record_from(2, 2, 1, vec![0.0, 1.0, 3.0, 5.0]);
        let m = build_likelihood_map(&r, GridState::new(0, 0));
        assert_eq!(m.classes, vec![15, 12, 6, 0]);
        let expected = [1.0, 0.8, 0.4, 0.0];
        for (a, b) in m.values.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_scan_is_all_fifteen() {
        let scene = SceneConfig::empty(8, 8);
        let r = scan_scene(0, &scene, 5);
        assert!(r.observations.iter().all(|&v| v == 0.0));
        let m = build_likelihood_map(&r, GridState::new(3, 4));
        assert!(m.classes.iter().all(|&c| c == 15));
        assert!(m.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn box_contacts_match_footprint_overlap() {
        let b = ObjectSpec::Primitive(Primitive {
            shape: Shape::Box { hx: 1, hy: 0 },
            cx: 5,
            cy: 2,
            height: 0.5,
        });
        let scene = SceneConfig::with_objects(8, 8, vec![b]);
        let r = scan_scene(3, &scene, 3);
        for y in 0..8i32 {
            for x in 0..8i32 {
                // box covers x 4..=6, y = 2; footprint covers ±1
                let overlaps = (3..=7).contains(&x) && (1..=3).contains(&y);
                assert_eq!(r.is_contact(GridState::new(x as usize, y as usize)), overlaps);
            }
        }
        assert_eq!(scan_scene(3, &scene, 3), r);
    }

    #[test]
    fn quantization_bound_and_self_class() {
        let mut rng = seeds::rng(4, &[]);
        let obs: Vec<f32> = (0..16 * 4).map(|_| rng.random_range(0.0..1.0)).collect();
        let r = record_from(4, 4, 2, obs);
        for i in 0..16 {
            let q = GridState::from_index(i, 4);
            let m = build_likelihood_map(&r, q);
            assert_eq!(m.classes[i], 15);
            assert_eq!(m.values.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
            assert_eq!(m.values.iter().copied().fold(0.0, f64::max), 1.0);
            for (v, c) in m.values.iter().zip(&m.classes) {
                assert!((v - class_value(*c)).abs() <= 1.0 / 30.0 + 1e-12);
            }
        }
    }

    #[test]
    fn quantize_rounds_half_away_from_zero() {
        assert_eq!(quantize(7.5 / 15.0), 8);
        assert_eq!(quantize(1.0), 15);
        assert_eq!(quantize(0.0), 0);
    }

    #[test]
    fn transitions_follow_step_semantics() {
        let mut rng = seeds::rng(0, &[]);
        let t = collect_transitions(8, 8, 0.0, 20, 15, &mut rng);
        assert_eq!(t.len(), 300);
        for tr in &t {
            let (dx, dy) = tr.action.delta();
            let x = (tr.from.x as isize + dx).clamp(0, 7) as usize;
            let y = (tr.from.y as isize + dy).clamp(0, 7) as usize;
            assert_eq!(tr.to, GridState::new(x, y));
        }
        for w in t.chunks(15) {
            for pair in w.windows(2) {
                assert_eq!(pair[0].to, pair[1].from);
            }
        }
    }

    #[test]
    fn transition_stay_fraction() {
        let mut rng = seeds::rng(1, &[]);
        // large grid so edge clamps are rare
        let t = collect_transitions(200, 200, 0.1, 100, 100, &mut rng);
        let moved_expected = |tr: &Transition| {
            let (dx, dy) = tr.action.delta();
            let x = tr.from.x as isize + dx;
            let y = tr.from.y as isize + dy;
            (0..200).contains(&x) && (0..200).contains(&y)
        };
        let interior: Vec<_> = t.iter().filter(|tr| moved_expected(tr)).collect();
        let stays = interior.iter().filter(|tr| tr.from == tr.to).count();
        let frac = stays as f64 / interior.len() as f64;
        assert!((frac - 0.1).abs() <= 0.02, "{frac}");
    }
}
