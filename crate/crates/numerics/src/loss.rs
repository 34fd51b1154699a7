use crate::{DiffArray, NumericsError, Result, Scalar};

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before any
/// logarithm.
pub const PROB_CLAMP: f64 = 1e-7;

/// Scalar loss together with its gradient with respect to the loss input.
/// Feed `grad` to the producing layer's `backward`.
#[derive(Clone, Debug)]
pub struct Loss<T> {
    pub value: T,
    pub grad: DiffArray<T>,
}

/// Mean over all `(batch, position)` pairs of `−ln probs[label]`.
///
/// `probs` is `N×C×…` and normalized over axis 1; `labels` holds one class
/// index per `(batch, position)`, row-major.
pub fn categorical_cross_entropy<T: Scalar>(probs: &DiffArray<T>, labels: &[u8]) -> Result<Loss<T>> {
    let s = probs.shape();
    if s.len() < 2 {
        return Err(NumericsError::invalid(
            "categorical_cross_entropy",
            format!("need an N×C×… array, got {s:?}"),
        ));
    }
    let (batch, classes) = (s[0], s[1]);
    let inner: usize = s[2..].iter().product();
    if labels.len() != batch * inner {
        return Err(NumericsError::invalid(
            "categorical_cross_entropy",
            format!("{} labels for {} positions", labels.len(), batch * inner),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(NumericsError::LabelOutOfRange {
            label: bad as usize,
            classes,
        });
    }
    let eps = T::from_f64(PROB_CLAMP);
    let count = T::from_f64((batch * inner) as f64);
    let p = probs.values();
    let mut grad = vec![T::zero(); p.len()];
    let mut total = 0.0f64;
    for n in 0..batch {
        for i in 0..inner {
            let idx = (n * classes + labels[n * inner + i] as usize) * inner + i;
            let v = p[idx];
            if v > eps {
                total -= v.as_f64().ln();
                grad[idx] = -T::one() / (count * v);
            } else {
                total -= PROB_CLAMP.ln();
            }
        }
    }
    Ok(Loss {
        value: T::from_f64(total / (batch * inner) as f64),
        grad: DiffArray::from_vec(s, grad)?,
    })
}

/// Weighted mean of `−ln probs[label]` with one non-negative weight per
/// `(batch, position)`. Equal weights reproduce [`categorical_cross_entropy`].
pub fn weighted_categorical_cross_entropy<T: Scalar>(
    probs: &DiffArray<T>,
    labels: &[u8],
    weights: &[T],
) -> Result<Loss<T>> {
    if weights.len() != labels.len() {
        return Err(NumericsError::invalid(
            "weighted_categorical_cross_entropy",
            format!("{} weights for {} labels", weights.len(), labels.len()),
        ));
    }
    let total_weight: f64 = weights.iter().map(|w| w.as_f64()).sum();
    if weights.iter().any(|w| !(w.as_f64() >= 0.0)) || !(total_weight > 0.0) {
        return Err(NumericsError::invalid(
            "weighted_categorical_cross_entropy",
            "weights must be non-negative with a positive sum".to_string(),
        ));
    }
    let plain = categorical_cross_entropy(probs, labels)?;
    let s = probs.shape();
    let (batch, classes) = (s[0], s[1]);
    let inner: usize = s[2..].iter().product();
    let eps = T::from_f64(PROB_CLAMP);
    let norm = T::from_f64(total_weight);
    let p = probs.values();
    let mut grad = vec![T::zero(); p.len()];
    let mut total = 0.0f64;
    for n in 0..batch {
        for i in 0..inner {
            let j = n * inner + i;
            let idx = (n * classes + labels[j] as usize) * inner + i;
            let (v, w) = (p[idx], weights[j]);
            if v > eps {
                total -= w.as_f64() * v.as_f64().ln();
                grad[idx] = -w / (norm * v);
            } else {
                total -= w.as_f64() * PROB_CLAMP.ln();
            }
        }
    }
    Ok(Loss {
        value: T::from_f64(total / total_weight),
        grad: DiffArray::from_vec(plain.grad.shape(), grad)?,
    })
}

/// Mean over all entries of `−[t·ln p + (1−t)·ln(1−p)]`, `p` clamped.
pub fn binary_cross_entropy<T: Scalar>(pred: &DiffArray<T>, target: &[T]) -> Result<Loss<T>> {
    if pred.len() != target.len() {
        return Err(NumericsError::invalid(
            "binary_cross_entropy",
            format!("{} targets for {} predictions", target.len(), pred.len()),
        ));
    }
    if let Some(&bad) = target.iter().find(|&&t| t != T::zero() && t != T::one()) {
        return Err(NumericsError::InvalidTarget { value: bad.as_f64() });
    }
    let lo = PROB_CLAMP;
    let hi = 1.0 - PROB_CLAMP;
    let count = pred.len() as f64;
    let mut total = 0.0f64;
    let mut grad = vec![T::zero(); pred.len()];
    for ((g, &p), &t) in grad.iter_mut().zip(pred.values()).zip(target) {
        let raw = p.as_f64();
        let pc = raw.clamp(lo, hi);
        let t = t.as_f64();
        total -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
        if raw > lo && raw < hi {
            *g = T::from_f64((pc - t) / (pc * (1.0 - pc)) / count);
        }
    }
    Ok(Loss {
        value: T::from_f64(total / count),
        grad: DiffArray::from_vec(pred.shape(), grad)?,
    })
}
