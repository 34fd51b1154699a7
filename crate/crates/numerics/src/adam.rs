use crate::{DiffArray, NumericsError, Result, Scalar};

/// Adam with bias correction. Moments are allocated lazily on the first
/// step and matched to parameters by position.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.first, &self.second)
    }

    /// Restore a saved state. Moment shapes are checked on the next step.
    pub fn restore(&mut self, step: u64, first: Vec<Vec<T>>, second: Vec<Vec<T>>) {
        self.step = step;
        self.first = first;
        self.second = second;
    }

    /// One update of every parameter from its gradient. Gradients are left
    /// in place.
    pub fn step(&mut self, params: &mut [&mut DiffArray<T>]) -> Result<()> {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(NumericsError::invalid(
                "adam_step",
                format!("state tracks {} parameters, got {}", self.first.len(), params.len()),
            ));
        }
        for (i, p) in params.iter().enumerate() {
            if self.first[i].len() != p.len() || self.second[i].len() != p.len() {
                return Err(NumericsError::shape("adam_step", &[self.first[i].len()], p.shape()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let step_size = T::from_f64(self.lr / c1);
        let c2_sqrt = T::from_f64(c2.sqrt());
        let eps = T::from_f64(self.epsilon);
        let (b1t, b2t) = (T::from_f64(b1), T::from_f64(b2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - b1), T::from_f64(1.0 - b2));
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let (values, grad) = p.values_and_grad_mut();
            let Some(grad) = grad else { continue };
            for (((w, &g), m), v) in values.iter_mut().zip(grad.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1t * *m + one_b1 * g;
                *v = b2t * *v + one_b2 * g * g;
                // lr·m̂/(√v̂ + ε) with m̂ = m/c1, v̂ = v/c2
                *w -= step_size * *m / (v.sqrt() / c2_sqrt + eps);
            }
        }
        Ok(())
    }
}
