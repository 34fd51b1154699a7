use super::{take_cache, Mode};
use crate::{DiffArray, NumericsError, Result, Scalar};

#[derive(Clone, Debug, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu { mask: None }
    }

    pub fn forward<T: Scalar>(&mut self, input: &DiffArray<T>, mode: Mode) -> Result<DiffArray<T>> {
        let out = input.map(|v| if v > T::zero() { v } else { T::zero() });
        self.mask = match mode {
            Mode::Train => Some(input.values().iter().map(|&v| v > T::zero()).collect()),
            Mode::Eval => None,
        };
        Ok(out)
    }

    pub fn backward<T: Scalar>(&mut self, grad_out: &DiffArray<T>) -> Result<DiffArray<T>> {
        let mask = take_cache(&mut self.mask, "relu")?;
        if mask.len() != grad_out.len() {
            return Err(NumericsError::invalid(
                "relu backward",
                format!("gradient has {} values, expected {}", grad_out.len(), mask.len()),
            ));
        }
        let values = grad_out
            .values()
            .iter()
            .zip(&mask)
            .map(|(&g, &m)| if m { g } else { T::zero() })
            .collect();
        DiffArray::from_vec(grad_out.shape(), values)
    }
}

/// Softmax across axis 1 at every (batch, position) pair, computed with
/// max subtraction.
pub fn softmax_channelwise<T: Scalar>(logits: &DiffArray<T>) -> Result<DiffArray<T>> {
    let s = logits.shape();
    if s.len() < 2 || s[1] == 0 {
        return Err(NumericsError::invalid(
            "softmax_channelwise",
            format!("need an N×C×… array with C ≥ 1, got {s:?}"),
        ));
    }
    let (batch, c) = (s[0], s[1]);
    let inner: usize = s[2..].iter().product();
    let x = logits.values();
    let mut y = vec![T::zero(); x.len()];
    let mut m = vec![T::neg_infinity(); inner];
    let mut z = vec![T::zero(); inner];
    for n in 0..batch {
        let base = n * c * inner;
        m.fill(T::neg_infinity());
        z.fill(T::zero());
        for ch in 0..c {
            let row = &x[base + ch * inner..base + (ch + 1) * inner];
            for (mi, &v) in m.iter_mut().zip(row) {
                if v > *mi {
                    *mi = v;
                }
            }
        }
        for ch in 0..c {
            let o = base + ch * inner;
            for i in 0..inner {
                let e = (x[o + i] - m[i]).exp();
                y[o + i] = e;
                z[i] += e;
            }
        }
        for ch in 0..c {
            let o = base + ch * inner;
            for i in 0..inner {
                y[o + i] /= z[i];
            }
        }
    }
    DiffArray::from_vec(s, y)
}

#[derive(Clone, Debug, Default)]
pub struct SoftmaxChannels<T> {
    output: Option<DiffArray<T>>,
}

impl<T: Scalar> SoftmaxChannels<T> {
    pub fn new() -> Self {
        SoftmaxChannels { output: None }
    }

    pub fn forward(&mut self, input: &DiffArray<T>, mode: Mode) -> Result<DiffArray<T>> {
        let y = softmax_channelwise(input)?;
        self.output = match mode {
            Mode::Train => Some(y.clone()),
            Mode::Eval => None,
        };
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &DiffArray<T>) -> Result<DiffArray<T>> {
        let y = take_cache(&mut self.output, "softmax_channelwise")?;
        if y.shape() != grad_out.shape() {
            return Err(NumericsError::shape("softmax_channelwise backward", y.shape(), grad_out.shape()));
        }
        let s = y.shape();
        let (batch, c) = (s[0], s[1]);
        let inner: usize = s[2..].iter().product();
        let (yv, dy) = (y.values(), grad_out.values());
        let mut dx = vec![T::zero(); yv.len()];
        let mut dot = vec![T::zero(); inner];
        for n in 0..batch {
            let base = n * c * inner;
            dot.fill(T::zero());
            for ch in 0..c {
                let o = base + ch * inner;
                for i in 0..inner {
                    dot[i] += yv[o + i] * dy[o + i];
                }
            }
            for ch in 0..c {
                let o = base + ch * inner;
                for i in 0..inner {
                    dx[o + i] = yv[o + i] * (dy[o + i] - dot[i]);
                }
            }
        }
        DiffArray::from_vec(s, dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clips_negatives_and_zero_gradient_below() {
        let x = DiffArray::<f64>::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        let mut r = Relu::new();
        assert_eq!(r.forward(&x, Mode::Train).unwrap().values(), &[0.0, 0.0, 2.0]);
        let x = DiffArray::<f64>::from_vec(&[2], vec![2.0, -3.0]).unwrap();
        r.forward(&x, Mode::Train).unwrap();
        let g = r.backward(&DiffArray::filled(&[2], 1.0)).unwrap();
        assert_eq!(g.values(), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_closed_forms() {
        let equal = DiffArray::<f64>::filled(&[1, 4, 3], 0.7);
        assert!(softmax_channelwise(&equal).unwrap().values().iter().all(|&v| (v - 0.25).abs() < 1e-15));

        let single = DiffArray::<f64>::from_vec(&[2, 1, 2], vec![-5.0, 3.0, 100.0, 0.0]).unwrap();
        assert!(softmax_channelwise(&single).unwrap().values().iter().all(|&v| v == 1.0));

        let two = DiffArray::<f64>::from_vec(&[1, 2, 1], vec![0.0, 3f64.ln()]).unwrap();
        let y = softmax_channelwise(&two).unwrap();
        assert!((y.values()[0] - 0.25).abs() < 1e-15);
        assert!((y.values()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let x = DiffArray::<f32>::from_vec(&[1, 2, 1], vec![1000.0, 999.0]).unwrap();
        let y = softmax_channelwise(&x).unwrap();
        assert!(y.values().iter().all(|v| v.is_finite()));
        assert!((y.values()[0] + y.values()[1] - 1.0).abs() < 1e-6);
    }
}
