use super::{check_rank, take_cache, Mode};
use crate::{DiffArray, NumericsError, Result, Scalar};

/// Non-overlapping max pooling (kernel = stride). Trailing rows/columns
/// that do not fill a window are dropped.
#[derive(Clone, Debug)]
pub struct MaxPool2d {
    kernel: usize,
    cache: Option<PoolCache>,
}

#[derive(Clone, Debug)]
struct PoolCache {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl MaxPool2d {
    pub fn new(kernel: usize) -> Self {
        assert!(kernel >= 1, "pool kernel must be positive");
        MaxPool2d { kernel, cache: None }
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel
    }

    pub fn forward<T: Scalar>(&mut self, input: &DiffArray<T>, mode: Mode) -> Result<DiffArray<T>> {
        check_rank("maxpool2d", input, 4)?;
        let s = input.shape();
        let k = self.kernel;
        let (oh, ow) = (s[2] / k, s[3] / k);
        if oh == 0 || ow == 0 {
            return Err(NumericsError::invalid(
                "maxpool2d",
                format!("input {}×{} smaller than kernel {k}", s[2], s[3]),
            ));
        }
        let planes = s[0] * s[1];
        let (h, w) = (s[2], s[3]);
        let x = input.values();
        let mut out = Vec::with_capacity(planes * oh * ow);
        let mut argmax = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            let base = p * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * k * w + ox * k;
                    for dy in 0..k {
                        for dx in 0..k {
                            let idx = base + (oy * k + dy) * w + ox * k + dx;
                            // first maximum wins
                            if x[idx] > x[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        self.cache = match mode {
            Mode::Train => Some(PoolCache {
                input_shape: s.to_vec(),
                argmax,
            }),
            Mode::Eval => None,
        };
        DiffArray::from_vec(&[s[0], s[1], oh, ow], out)
    }

    pub fn backward<T: Scalar>(&mut self, grad_out: &DiffArray<T>) -> Result<DiffArray<T>> {
        let cache = take_cache(&mut self.cache, "maxpool2d")?;
        if grad_out.len() != cache.argmax.len() {
            return Err(NumericsError::invalid(
                "maxpool2d backward",
                format!("gradient has {} values, expected {}", grad_out.len(), cache.argmax.len()),
            ));
        }
        let mut dx = DiffArray::zeros(&cache.input_shape);
        let d = dx.values_mut();
        for (&i, &g) in cache.argmax.iter().zip(grad_out.values()) {
            d[i] += g;
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_window_maxima() {
        let x = DiffArray::<f64>::from_vec(
            &[1, 1, 4, 4],
            vec![
                1.0, 2.0, 0.0, -1.0, //
                3.0, 0.5, -2.0, -3.0, //
                0.0, 0.0, 7.0, 7.5, //
                0.1, 0.2, 6.0, 1.0,
            ],
        )
        .unwrap();
        let mut pool = MaxPool2d::new(2);
        let y = pool.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.values(), &[3.0, 0.0, 0.2, 7.5]);
        let dx = pool.backward(&DiffArray::filled(&[1, 1, 2, 2], 1.0)).unwrap();
        assert_eq!(dx.values()[4], 1.0);
        assert_eq!(dx.values()[11], 1.0);
        assert_eq!(dx.sum(), 4.0);
    }
}
