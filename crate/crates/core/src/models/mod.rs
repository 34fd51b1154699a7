//! Learnable filter models and the two baselines.
//!
//! The observation network maps a depth image and a tactile reading to a
//! per-pixel distribution over 16 likelihood classes; the motion network is
//! a softmax-normalized 3×3 kernel per action.

mod motion;
mod observation;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

pub use motion::MotionNet;
pub use observation::{ObservationNet, ObservationNetConfig};

use tactloc_numerics::checkpoint::{read_tloc, write_tloc, TlocEntry};
use tactloc_numerics::{DiffArray, Mode, Scalar};

use crate::datagen::class_value;
use crate::error::{Error, ModelError};
use crate::filter::LikelihoodMap;

/// How class probabilities become a scalar likelihood.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Decoding {
    /// `Σ_k p_k · k/15`.
    #[default]
    Expected,
    /// Value of the most probable class.
    Argmax,
}

/// Scalar likelihood map from one sample's `classes×H×W` probabilities.
pub fn likelihood_scalar(probs: &[f32], classes: usize, height: usize, width: usize, decoding: Decoding) -> LikelihoodMap {
    let cells = height * width;
    assert_eq!(probs.len(), classes * cells, "probability grid size");
    let values = (0..cells)
        .map(|i| {
            let v = match decoding {
                Decoding::Expected => (0..classes)
                    .map(|c| probs[c * cells + i] as f64 * class_value(c as u8))
                    .sum::<f64>(),
                Decoding::Argmax => {
                    let mut best = 0;
                    for c in 1..classes {
                        if probs[c * cells + i] > probs[best * cells + i] {
                            best = c;
                        }
                    }
                    class_value(best as u8)
                }
            };
            v.clamp(0.0, 1.0)
        })
        .collect();
    LikelihoodMap::new(height, width, values).expect("clamped into [0, 1]")
}

/// The constant observation model `p(o|s) = 1/(H·W)`.
pub fn uniform_likelihood(height: usize, width: usize) -> LikelihoodMap {
    LikelihoodMap::constant(height, width, 1.0 / (height * width) as f64)
}

/// Network input: relative height `max(depth) − depth`.
pub fn depth_input<T: Scalar>(depths: &[&[f32]], height: usize, width: usize) -> DiffArray<T> {
    let mut values = Vec::with_capacity(depths.len() * height * width);
    for d in depths {
        let far = d.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        values.extend(d.iter().map(|&v| T::from_f64((far - v) as f64)));
    }
    DiffArray::from_vec(&[depths.len(), 1, height, width], values).expect("depth batch shape")
}

pub fn obs_input<T: Scalar>(observations: &[&[f32]]) -> DiffArray<T> {
    let n = observations.first().map_or(0, |o| o.len());
    let values = observations
        .iter()
        .flat_map(|o| o.iter().map(|&v| T::from_f64(v as f64)))
        .collect();
    DiffArray::from_vec(&[observations.len(), 1, n], values).expect("observation batch shape")
}

/// Likelihood maps for a sequence of observations in one scene, in
/// inference mode.
pub fn predict_maps(
    net: &mut ObservationNet<f32>,
    depth: &[f32],
    observations: &[&[f32]],
    decoding: Decoding,
) -> Result<Vec<LikelihoodMap>, ModelError> {
    let cfg = net.config().clone();
    let (h, w) = (cfg.height, cfg.width);
    let depth = depth_input::<f32>(&[depth], h, w);
    let mut out = Vec::with_capacity(observations.len());
    for chunk in observations.chunks(64) {
        let obs = obs_input::<f32>(chunk);
        let scene_of = vec![0; chunk.len()];
        let probs = net.forward(Some(&depth), &scene_of, &obs, Mode::Eval)?;
        let item = probs.item_len();
        for n in 0..chunk.len() {
            out.push(likelihood_scalar(
                &probs.values()[n * item..(n + 1) * item],
                cfg.classes,
                h,
                w,
                decoding,
            ));
        }
    }
    Ok(out)
}

fn write_entries(path: &Path, entries: &[TlocEntry]) -> Result<(), Error> {
    let f = File::create(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    write_tloc(BufWriter::new(f), entries)?;
    Ok(())
}

pub fn read_entries(path: &Path) -> Result<Vec<TlocEntry>, Error> {
    let f = File::open(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(read_tloc(BufReader::new(f))?)
}

pub fn save_observation_net(net: &mut ObservationNet<f32>, path: &Path) -> Result<(), Error> {
    write_entries(path, &net.to_entries())
}

pub fn load_observation_net(path: &Path) -> Result<ObservationNet<f32>, Error> {
    Ok(ObservationNet::from_entries(&read_entries(path)?)?)
}

pub fn save_motion_net(net: &MotionNet, path: &Path) -> Result<(), Error> {
    write_entries(path, &net.to_entries())
}

pub fn load_motion_net(path: &Path) -> Result<MotionNet, Error> {
    Ok(MotionNet::from_entries(&read_entries(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    #[test]
    fn scalar_decoding_examples() {
        let mut one_hot = vec![0.0f32; 16];
        one_hot[15] = 1.0;
        assert_eq!(likelihood_scalar(&one_hot, 16, 1, 1, Decoding::Expected).values(), &[1.0]);
        let mut zero = vec![0.0f32; 16];
        zero[0] = 1.0;
        assert_eq!(likelihood_scalar(&zero, 16, 1, 1, Decoding::Expected).values(), &[0.0]);
        let uniform = vec![1.0f32 / 16.0; 16];
        let v = likelihood_scalar(&uniform, 16, 1, 1, Decoding::Expected).values()[0];
        assert!((v - 0.5).abs() < 1e-6);
        let mut peaked = vec![0.05f32; 16];
        peaked[9] = 0.25;
        let v = likelihood_scalar(&peaked, 16, 1, 1, Decoding::Argmax).values()[0];
        assert_eq!(v, 9.0 / 15.0);
    }

    #[test]
    fn uniform_baseline() {
        let u = uniform_likelihood(32, 32);
        assert!(u.values().iter().all(|&v| v == 1.0 / 1024.0));
        let b = crate::filter::Belief::from_weights(32, 32, (0..1024).map(|i| (i % 7) as f64 + 0.5).collect()).unwrap();
        let c = b.correct(&u).unwrap();
        assert!(c.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() < 1e-15));
    }

    #[test]
    fn depth_input_is_relative_height() {
        let d = [10.0f32, 9.0, 9.5, 10.0];
        let x = depth_input::<f32>(&[&d], 2, 2);
        assert_eq!(x.values(), &[0.0, 1.0, 0.5, 0.0]);
        assert_eq!(x.shape(), &[1, 1, 2, 2]);
    }

    #[test]
    fn checkpoint_files_round_trip() {
        let mut rng = seeds::rng(0, &[]);
        let mut net = ObservationNet::<f32>::new(ObservationNetConfig::desk(16, 16, 5), &mut rng).unwrap();
        let path = std::env::temp_dir().join(format!("tactloc-obs-{}.tloc", std::process::id()));
        save_observation_net(&mut net, &path).unwrap();
        let mut back = load_observation_net(&path).unwrap();
        std::fs::remove_file(&path).unwrap();
        let depth = vec![10.0f32; 256];
        let obs: Vec<f32> = (0..25).map(|i| (i as f32 * 0.1).sin().abs()).collect();
        let a = predict_maps(&mut net, &depth, &[&obs], Decoding::Expected).unwrap();
        let b = predict_maps(&mut back, &depth, &[&obs], Decoding::Expected).unwrap();
        assert_eq!(a, b);
    }
}
