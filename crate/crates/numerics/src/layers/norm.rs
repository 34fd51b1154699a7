use super::{take_cache, Mode};
use crate::{DiffArray, NumericsError, Result, Scalar};

/// Batch normalization over axis 1 of an `N×C×…` array.
///
/// Training mode normalizes with the biased batch statistics and updates
/// the running estimates (`momentum` weight on the new batch, unbiased
/// variance); evaluation mode uses the running estimates only.
#[derive(Clone, Debug)]
pub struct BatchNorm<T> {
    channels: usize,
    momentum: f64,
    eps: f64,
    gamma: DiffArray<T>,
    beta: DiffArray<T>,
    running_mean: DiffArray<T>,
    running_var: DiffArray<T>,
    cache: Option<NormCache<T>>,
}

#[derive(Clone, Debug)]
struct NormCache<T> {
    shape: Vec<usize>,
    x_hat: Vec<T>,
    inv_std: Vec<T>,
}

pub const BATCHNORM_MOMENTUM: f64 = 0.1;
pub const BATCHNORM_EPS: f64 = 1e-5;

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            channels,
            momentum: BATCHNORM_MOMENTUM,
            eps: BATCHNORM_EPS,
            gamma: DiffArray::param_filled(&[channels], T::one()),
            beta: DiffArray::param_filled(&[channels], T::zero()),
            running_mean: DiffArray::zeros(&[channels]),
            running_var: DiffArray::filled(&[channels], T::one()),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn running_mean(&self) -> &[T] {
        self.running_mean.values()
    }

    pub fn running_var(&self) -> &[T] {
        self.running_var.values()
    }

    fn split(&self, input: &DiffArray<T>) -> Result<(usize, usize)> {
        let s = input.shape();
        if s.len() < 2 || s[1] != self.channels {
            let mut expected = s.to_vec();
            if expected.len() >= 2 {
                expected[1] = self.channels;
            } else {
                expected = vec![s.first().copied().unwrap_or(1), self.channels];
            }
            return Err(NumericsError::shape("batchnorm", &expected, s));
        }
        Ok((s[0], s[2..].iter().product()))
    }

    pub fn forward(&mut self, input: &DiffArray<T>, mode: Mode) -> Result<DiffArray<T>> {
        let (batch, inner) = self.split(input)?;
        let c = self.channels;
        let x = input.values();
        let mut y = vec![T::zero(); x.len()];
        let idx = |n: usize, ch: usize| (n * c + ch) * inner;
        match mode {
            Mode::Eval => {
                for ch in 0..c {
                    let inv = T::one()
                        / (self.running_var.values()[ch] + T::from_f64(self.eps)).sqrt();
                    let (g, b, m) = (
                        self.gamma.values()[ch],
                        self.beta.values()[ch],
                        self.running_mean.values()[ch],
                    );
                    for n in 0..batch {
                        let o = idx(n, ch);
                        for i in o..o + inner {
                            y[i] = g * (x[i] - m) * inv + b;
                        }
                    }
                }
                self.cache = None;
            }
            Mode::Train => {
                let count = batch * inner;
                if count < 2 {
                    return Err(NumericsError::invalid(
                        "batchnorm",
                        "training mode needs at least two values per channel",
                    ));
                }
                let mut x_hat = vec![T::zero(); x.len()];
                let mut inv_stds = vec![T::zero(); c];
                let cnt = T::from_f64(count as f64);
                for ch in 0..c {
                    let mut mean = T::zero();
                    for n in 0..batch {
                        let o = idx(n, ch);
                        mean += x[o..o + inner].iter().copied().sum::<T>();
                    }
                    mean /= cnt;
                    let mut var = T::zero();
                    for n in 0..batch {
                        let o = idx(n, ch);
                        for &v in &x[o..o + inner] {
                            var += (v - mean) * (v - mean);
                        }
                    }
                    var /= cnt;
                    let inv = T::one() / (var + T::from_f64(self.eps)).sqrt();
                    inv_stds[ch] = inv;
                    let (g, b) = (self.gamma.values()[ch], self.beta.values()[ch]);
                    for n in 0..batch {
                        let o = idx(n, ch);
                        for i in o..o + inner {
                            let h = (x[i] - mean) * inv;
                            x_hat[i] = h;
                            y[i] = g * h + b;
                        }
                    }
                    let m = T::from_f64(self.momentum);
                    let unbiased = var * cnt / (cnt - T::one());
                    let rm = &mut self.running_mean.values_mut()[ch];
                    *rm = (T::one() - m) * *rm + m * mean;
                    let rv = &mut self.running_var.values_mut()[ch];
                    *rv = (T::one() - m) * *rv + m * unbiased;
                }
                self.cache = Some(NormCache {
                    shape: input.shape().to_vec(),
                    x_hat,
                    inv_std: inv_stds,
                });
            }
        }
        DiffArray::from_vec(input.shape(), y)
    }

    pub fn backward(&mut self, grad_out: &DiffArray<T>) -> Result<DiffArray<T>> {
        let cache = take_cache(&mut self.cache, "batchnorm")?;
        if grad_out.shape() != cache.shape.as_slice() {
            return Err(NumericsError::shape("batchnorm backward", &cache.shape, grad_out.shape()));
        }
        let c = self.channels;
        let batch = cache.shape[0];
        let inner: usize = cache.shape[2..].iter().product();
        let cnt = T::from_f64((batch * inner) as f64);
        let dy = grad_out.values();
        let mut dx = vec![T::zero(); dy.len()];
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        for ch in 0..c {
            let g = self.gamma.values()[ch];
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for n in 0..batch {
                let o = (n * c + ch) * inner;
                for i in o..o + inner {
                    sum_dy += dy[i];
                    sum_dy_xhat += dy[i] * cache.x_hat[i];
                }
            }
            dgamma[ch] = sum_dy_xhat;
            dbeta[ch] = sum_dy;
            let scale = g * cache.inv_std[ch] / cnt;
            for n in 0..batch {
                let o = (n * c + ch) * inner;
                for i in o..o + inner {
                    dx[i] = scale * (cnt * dy[i] - sum_dy - cache.x_hat[i] * sum_dy_xhat);
                }
            }
        }
        self.gamma.accumulate_grad(&dgamma);
        self.beta.accumulate_grad(&dbeta);
        DiffArray::from_vec(&cache.shape, dx)
    }

    pub(crate) fn params_mut(&mut self) -> Vec<(&'static str, &mut DiffArray<T>)> {
        vec![("gamma", &mut self.gamma), ("beta", &mut self.beta)]
    }

    pub(crate) fn state_mut(&mut self) -> Vec<(&'static str, &mut DiffArray<T>)> {
        vec![
            ("gamma", &mut self.gamma),
            ("beta", &mut self.beta),
            ("running_mean", &mut self.running_mean),
            ("running_var", &mut self.running_var),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_mode_uses_running_statistics() {
        let mut bn = BatchNorm::<f64>::new(1);
        let x = DiffArray::from_vec(&[1, 1, 2], vec![3.0, -1.0]).unwrap();
        // fresh running stats: mean 0, var 1
        let y = bn.forward(&x, Mode::Eval).unwrap();
        let s = (1.0f64 + 1e-5).sqrt();
        assert!((y.values()[0] - 3.0 / s).abs() < 1e-12);
        bn.forward(&x, Mode::Train).unwrap();
        assert!((bn.running_mean()[0] - 0.1).abs() < 1e-12);
        // unbiased variance of [3, -1] is 8
        assert!((bn.running_var()[0] - (0.9 + 0.8)).abs() < 1e-12);
    }
}
