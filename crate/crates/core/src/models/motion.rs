use tactloc_numerics::checkpoint::TlocEntry;
use tactloc_numerics::{binary_cross_entropy, DiffArray};

use crate::datagen::Transition;
use crate::error::ModelError;
use crate::filter::{ActionDir, GridState, MotionKernel};

/// One 3×3 logit array per action; kernels are their softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionNet {
    logits: DiffArray<f64>,
}

impl Default for MotionNet {
    fn default() -> Self {
        Self::uniform()
    }
}

impl MotionNet {
    /// All logits zero: every kernel uniform.
    pub fn uniform() -> Self {
        Self {
            logits: DiffArray::param_filled(&[4, 9], 0.0),
        }
    }

    pub fn from_logits(logits: [[f64; 9]; 4]) -> Self {
        let mut net = Self::uniform();
        for (a, row) in logits.iter().enumerate() {
            net.logits.values_mut()[a * 9..(a + 1) * 9].copy_from_slice(row);
        }
        net
    }

    pub fn logits(&self) -> &DiffArray<f64> {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut DiffArray<f64> {
        &mut self.logits
    }

    fn softmax(&self, action: ActionDir) -> [f64; 9] {
        let z = &self.logits.values()[action.index() * 9..(action.index() + 1) * 9];
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut k = [0.0; 9];
        for (o, &v) in k.iter_mut().zip(z) {
            *o = (v - m).exp();
        }
        let s: f64 = k.iter().sum();
        k.iter_mut().for_each(|v| *v /= s);
        k
    }

    pub fn kernel(&self, action: ActionDir) -> MotionKernel {
        MotionKernel::new(self.softmax(action)).expect("softmax is a distribution")
    }

    /// Mean binary cross-entropy of `predict(one-hot(from), kernel(action))`
    /// against `one-hot(to)` over all grid cells of the batch. Accumulates
    /// the gradient into the logits.
    pub fn accumulate_batch(&mut self, batch: &[Transition], height: usize, width: usize) -> Result<f64, ModelError> {
        let cells = height * width;
        let mut pred = vec![0.0; batch.len() * cells];
        let mut target = vec![0.0; batch.len() * cells];
        let mut locals = Vec::with_capacity(batch.len());
        for (b, t) in batch.iter().enumerate() {
            if !t.from.in_bounds(height, width) || !t.to.in_bounds(height, width) {
                return Err(ModelError::Config(format!("transition {t:?} leaves the {height}x{width} grid")));
            }
            let k = self.softmax(t.action);
            let mut mask = [0.0; 9];
            let mut cell = [usize::MAX; 9];
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (x, y) = (t.from.x as isize + dx, t.from.y as isize + dy);
                    if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
                        let j = MotionKernel::offset_index(dx, dy);
                        mask[j] = 1.0;
                        cell[j] = GridState::new(x as usize, y as usize).index(width);
                    }
                }
            }
            let z: f64 = (0..9).map(|j| mask[j] * k[j]).sum();
            let mut p = [0.0; 9];
            for j in 0..9 {
                p[j] = mask[j] * k[j] / z;
                if mask[j] > 0.0 {
                    pred[b * cells + cell[j]] = p[j];
                }
            }
            target[b * cells + t.to.index(width)] = 1.0;
            locals.push((t.action, k, mask, cell, z, p));
        }
        let pred = DiffArray::from_vec(&[batch.len(), cells], pred)?;
        let loss = binary_cross_entropy(&pred, &target)?;
        let g_pred = loss.grad.values();

        let mut grad = vec![0.0; 36];
        for (b, (action, k, mask, cell, z, p)) in locals.into_iter().enumerate() {
            let mut gp = [0.0; 9];
            for j in 0..9 {
                if mask[j] > 0.0 {
                    gp[j] = g_pred[b * cells + cell[j]];
                }
            }
            // through the in-grid renormalization
            let dot: f64 = (0..9).map(|j| gp[j] * p[j]).sum();
            let gk: Vec<f64> = (0..9).map(|i| mask[i] / z * (gp[i] - dot)).collect();
            // through the softmax
            let kdot: f64 = (0..9).map(|i| k[i] * gk[i]).sum();
            for l in 0..9 {
                grad[action.index() * 9 + l] += k[l] * (gk[l] - kdot);
            }
        }
        let g = self.logits.grad_mut().expect("logits carry a gradient");
        for (d, s) in g.iter_mut().zip(&grad) {
            *d += s;
        }
        Ok(loss.value)
    }

    pub fn to_entries(&self) -> Vec<TlocEntry> {
        vec![
            TlocEntry::new("config", &[3], vec![4.0, 3.0, 3.0]),
            TlocEntry::new(
                "motion.logits",
                &[4, 3, 3],
                self.logits.values().iter().map(|&v| v as f32).collect(),
            ),
        ]
    }

    pub fn from_entries(entries: &[TlocEntry]) -> Result<Self, ModelError> {
        let e = entries
            .iter()
            .find(|e| e.name == "motion.logits")
            .ok_or_else(|| ModelError::Checkpoint("missing motion.logits".into()))?;
        if e.dims != [4, 3, 3] {
            return Err(ModelError::Checkpoint(format!("motion.logits has shape {:?}", e.dims)));
        }
        let mut net = Self::uniform();
        for (d, &s) in net.logits.values_mut().iter_mut().zip(&e.values) {
            *d = s as f64;
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::Belief;

    #[test]
    fn kernel_examples() {
        let net = MotionNet::uniform();
        for a in ActionDir::ALL {
            assert!(net.kernel(a).weights().iter().all(|&w| (w - 1.0 / 9.0).abs() < 1e-15));
        }
        let mut logits = [[0.0; 9]; 4];
        logits[2][5] = 20.0;
        let net = MotionNet::from_logits(logits);
        let k = net.kernel(ActionDir::East);
        assert!(k.at(1, 0) > 0.999);
        assert!((k.weights().iter().sum::<f64>() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn local_prediction_matches_filter_predict() {
        let mut logits = [[0.0; 9]; 4];
        for (a, row) in logits.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = ((a * 9 + j) as f64 * 0.37).sin();
            }
        }
        let net = MotionNet::from_logits(logits);
        let (h, w) = (5, 6);
        for from in [GridState::new(0, 0), GridState::new(5, 2), GridState::new(3, 4), GridState::new(2, 2)] {
            for a in ActionDir::ALL {
                let full = Belief::delta(h, w, from).unwrap().predict(&net.kernel(a));
                let mut probe = net.clone();
                let t = Transition { from, action: a, to: from };
                // the loss over the full grid matches one computed from the filter's prediction
                let loss = probe.accumulate_batch(&[t], h, w).unwrap();
                let target: Vec<f64> = (0..h * w).map(|i| (i == from.index(w)) as u8 as f64).collect();
                let pred = DiffArray::from_vec(&[1, h * w], full.values().to_vec()).unwrap();
                let expected = binary_cross_entropy(&pred, &target).unwrap().value;
                assert!((loss - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut logits = [[0.0; 9]; 4];
        for (a, row) in logits.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = ((a * 7 + j * 3) as f64 * 0.91).cos();
            }
        }
        let batch = [
            Transition { from: GridState::new(2, 2), action: ActionDir::East, to: GridState::new(3, 2) },
            Transition { from: GridState::new(0, 1), action: ActionDir::West, to: GridState::new(0, 1) },
            Transition { from: GridState::new(4, 0), action: ActionDir::North, to: GridState::new(4, 0) },
            Transition { from: GridState::new(1, 3), action: ActionDir::South, to: GridState::new(1, 3) },
        ];
        let mut net = MotionNet::from_logits(logits);
        net.accumulate_batch(&batch, 4, 5).unwrap();
        let analytic = net.logits().grad().unwrap().to_vec();
        let step = 1e-6;
        for i in 0..36 {
            let eval = |delta: f64| {
                let mut n = MotionNet::from_logits(logits);
                n.logits_mut().values_mut()[i] += delta;
                n.accumulate_batch(&batch, 4, 5).unwrap()
            };
            let numeric = (eval(step) - eval(-step)) / (2.0 * step);
            let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6);
            assert!(err < 1e-4, "logit {i}: {} vs {numeric}", analytic[i]);
        }
    }

    #[test]
    fn checkpoint_entries_round_trip() {
        let mut logits = [[0.0; 9]; 4];
        logits[1][7] = 2.5;
        let net = MotionNet::from_logits(logits);
        let back = MotionNet::from_entries(&net.to_entries()).unwrap();
        assert_eq!(back.kernel(ActionDir::South), net.kernel(ActionDir::South));
    }
}
