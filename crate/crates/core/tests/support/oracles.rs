//! Brute-force reference implementations used by the filter and label
//! suites. They share no code with the library beyond its public types.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tactloc::datagen::{build_likelihood_map, scan_scene, ScanRecord};
use tactloc::filter::{Belief, GridState, LikelihoodMap, MotionKernel};
use tactloc::simworld::{ObjectSpec, Primitive, SceneConfig, Shape};

/// Column-stochastic (up to edge loss) transition matrix of a kernel:
/// `t[to][from]`.
pub fn transition_matrix(kernel: &MotionKernel, h: usize, w: usize) -> Vec<Vec<f64>> {
    let n = h * w;
    let mut t = vec![vec![0.0; n]; n];
    for from in 0..n {
        let (fx, fy) = ((from % w) as isize, (from / w) as isize);
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let (tx, ty) = (fx + dx, fy + dy);
                if tx >= 0 && ty >= 0 && tx < w as isize && ty < h as isize {
                    t[(ty * w as isize + tx) as usize][from] += kernel.at(dx, dy);
                }
            }
        }
    }
    t
}

pub fn matrix_predict(t: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = t.iter().map(|row| row.iter().zip(b).map(|(a, x)| a * x).sum()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

pub fn random_kernel(rng: &mut ChaCha8Rng) -> MotionKernel {
    let raw: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..1.0f64).powi(3)).collect();
    let s: f64 = raw.iter().sum();
    let mut w = [0.0; 9];
    for (o, r) in w.iter_mut().zip(&raw) {
        *o = r / s;
    }
    MotionKernel::new(w).unwrap()
}

pub fn random_belief(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Belief {
    let v: Vec<f64> = (0..h * w)
        .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        Belief::uniform(h, w).unwrap()
    } else {
        Belief::from_weights(h, w, v).unwrap()
    }
}

/// Worst deviations seen by the filter suite.
#[derive(Debug, Default)]
pub struct FilterReport {
    pub cases: usize,
    pub predict_err: f64,
    pub norm_err: f64,
    pub identity_err: f64,
}

pub fn filter_suite(seeds: u64) -> FilterReport {
    let (h, w) = (8, 8);
    let mut r = FilterReport::default();
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kernel = random_kernel(&mut rng);
        let b = random_belief(&mut rng, h, w);
        let t = transition_matrix(&kernel, h, w);
        let reference = matrix_predict(&t, b.values());
        let p = b.predict(&kernel);
        for (a, e) in p.values().iter().zip(&reference) {
            r.predict_err = r.predict_err.max((a - e).abs());
        }
        let lik = LikelihoodMap::new(h, w, (0..h * w).map(|_| rng.random_range(0.05..1.0)).collect()).unwrap();
        let c = p.correct(&lik).unwrap();
        for belief in [&b, &p, &c] {
            r.norm_err = r.norm_err.max((belief.values().iter().sum::<f64>() - 1.0).abs());
        }
        let level = rng.random_range(0.01..1.0);
        let same = c.correct(&LikelihoodMap::constant(h, w, level)).unwrap();
        for (a, e) in same.values().iter().zip(c.values()) {
            r.identity_err = r.identity_err.max((a - e).abs());
        }
        r.cases += 1;
    }
    r
}

/// Random scene on a small grid; every fifth scene is empty so the
/// all-equal case is always exercised.
pub fn random_small_scene(seed: u64, h: usize, w: usize) -> SceneConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if seed % 5 == 0 {
        return SceneConfig::empty(h, w);
    }
    let count = rng.random_range(1..=3);
    let objects = (0..count)
        .map(|_| {
            let shape = if rng.random_bool(0.5) {
                Shape::Box {
                    hx: rng.random_range(1..=2),
                    hy: rng.random_range(1..=2),
                }
            } else {
                Shape::Sphere {
                    radius: rng.random_range(1.0..2.9),
                }
            };
            ObjectSpec::Primitive(Primitive {
                shape,
                cx: rng.random_range(2..w as i32 - 2),
                cy: rng.random_range(2..h as i32 - 2),
                height: rng.random_range(0.2..1.0),
            })
        })
        .collect();
    SceneConfig::with_objects(h, w, objects)
}

/// Full pairwise distance matrix in f64.
pub fn pairwise_distances(record: &ScanRecord) -> Vec<Vec<f64>> {
    let n = record.num_states();
    let k = record.obs_len();
    let obs: Vec<Vec<f64>> = (0..n)
        .map(|i| record.observations[i * k..(i + 1) * k].iter().map(|&v| v as f64).collect())
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| obs[i].iter().zip(&obs[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                .collect()
        })
        .collect()
}

#[derive(Debug, Default)]
pub struct LabelReport {
    pub scenes: usize,
    pub degenerate_scenes: usize,
    pub class_mismatches: usize,
    pub max_scalar_err: f64,
}

pub fn label_suite(scenes: u64) -> LabelReport {
    let mut r = LabelReport::default();
    for seed in 0..scenes {
        let scene = random_small_scene(seed, 8, 8);
        let record = scan_scene(seed as u32, &scene, 3);
        let d = pairwise_distances(&record);
        let n = record.num_states();
        let mut degenerate = true;
        for q in 0..n {
            let row = &d[q];
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row.iter().copied().fold(0.0, f64::max);
            if hi > lo {
                degenerate = false;
            }
            let got = build_likelihood_map(&record, GridState::from_index(q, 8));
            for s in 0..n {
                let v = if hi > lo { (hi - row[s]) / (hi - lo) } else { 1.0 };
                let class = (v * 15.0 + 0.5).floor() as u8;
                r.max_scalar_err = r.max_scalar_err.max((got.values[s] - v).abs());
                if got.classes[s] != class {
                    r.class_mismatches += 1;
                }
            }
        }
        r.degenerate_scenes += degenerate as usize;
        r.scenes += 1;
    }
    r
}
