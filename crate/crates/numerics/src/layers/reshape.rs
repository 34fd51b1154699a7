use super::{take_cache, Mode};
use crate::gemm::gemm;
use crate::{DiffArray, NumericsError, Result, Scalar};
use rand::Rng;

/// Per-item reshape, optionally through a learned dense projection.
///
/// Without a projection the item element count must already match the
/// target shape. With one, every batch item is flattened, mapped by
/// `W·x + b` to `prod(target)` values and then given the target shape. The
/// tiled form maps to one value per leading channel and repeats it over the
/// remaining dimensions.
#[derive(Clone, Debug)]
pub struct Reshape<T> {
    target: Vec<usize>,
    projection: Option<Projection<T>>,
    cache: Option<Vec<usize>>,
}

#[derive(Clone, Debug)]
struct Projection<T> {
    in_features: usize,
    /// Copies of each projected value; 1 for the dense form.
    repeat: usize,
    weight: DiffArray<T>,
    bias: DiffArray<T>,
    input: Option<DiffArray<T>>,
}

impl<T: Scalar> Reshape<T> {
    pub fn new(target: &[usize]) -> Self {
        Reshape {
            target: target.to_vec(),
            projection: None,
            cache: None,
        }
    }

    pub fn learned<R: Rng + ?Sized>(in_features: usize, target: &[usize], rng: &mut R) -> Self {
        Self::projected(in_features, target, 1, rng)
    }

    /// Projection to `target[0]` values, each broadcast over the rest of
    /// `target`.
    pub fn tiled<R: Rng + ?Sized>(in_features: usize, target: &[usize], rng: &mut R) -> Self {
        Self::projected(in_features, target, target[1..].iter().product(), rng)
    }

    fn projected<R: Rng + ?Sized>(in_features: usize, target: &[usize], repeat: usize, rng: &mut R) -> Self {
        let out = target.iter().product::<usize>() / repeat;
        let bound = (1.0 / in_features as f64).sqrt();
        Reshape {
            target: target.to_vec(),
            projection: Some(Projection {
                in_features,
                repeat,
                weight: DiffArray::uniform_param(&[out, in_features], bound, rng),
                bias: DiffArray::uniform_param(&[out], bound, rng),
                input: None,
            }),
            cache: None,
        }
    }

    pub fn target(&self) -> &[usize] {
        &self.target
    }

    pub fn is_learned(&self) -> bool {
        self.projection.is_some()
    }

    pub fn is_tiled(&self) -> bool {
        self.projection.as_ref().is_some_and(|p| p.repeat > 1)
    }

    fn out_shape(&self, batch: usize) -> Vec<usize> {
        let mut s = vec![batch];
        s.extend_from_slice(&self.target);
        s
    }

    pub fn forward(&mut self, input: &DiffArray<T>, mode: Mode) -> Result<DiffArray<T>> {
        let batch = input.batch();
        let item = input.item_len();
        let out_len: usize = self.target.iter().product();
        let out_shape = self.out_shape(batch);
        match self.projection.as_mut() {
            None => {
                if item != out_len {
                    return Err(NumericsError::shape("reshape", &out_shape, input.shape()));
                }
                self.cache = match mode {
                    Mode::Train => Some(input.shape().to_vec()),
                    Mode::Eval => None,
                };
                input.detached().reshape(&out_shape)
            }
            Some(p) => {
                if item != p.in_features {
                    return Err(NumericsError::invalid(
                        "reshape",
                        format!(
                            "projection expects {} features per item, input {:?} has {item}",
                            p.in_features,
                            input.shape()
                        ),
                    ));
                }
                let proj_len = out_len / p.repeat;
                let mut z = vec![T::zero(); batch * proj_len];
                for row in z.chunks_mut(proj_len) {
                    row.copy_from_slice(p.bias.values());
                }
                gemm(false, true, batch, proj_len, item, T::one(), input.values(), p.weight.values(), T::one(), &mut z);
                let y = if p.repeat == 1 {
                    z
                } else {
                    z.iter().flat_map(|&v| std::iter::repeat_n(v, p.repeat)).collect()
                };
                if mode == Mode::Train {
                    p.input = Some(input.detached());
                    self.cache = Some(input.shape().to_vec());
                } else {
                    p.input = None;
                    self.cache = None;
                }
                DiffArray::from_vec(&out_shape, y)
            }
        }
    }

    pub fn backward(&mut self, grad_out: &DiffArray<T>) -> Result<DiffArray<T>> {
        let in_shape = take_cache(&mut self.cache, "reshape")?;
        match self.projection.as_mut() {
            None => grad_out.detached().reshape(&in_shape),
            Some(p) => {
                let x = take_cache(&mut p.input, "reshape")?;
                let batch = x.batch();
                let out_len: usize = self.target.iter().product();
                if grad_out.len() != batch * out_len {
                    return Err(NumericsError::invalid(
                        "reshape backward",
                        format!("gradient has {} values, expected {}", grad_out.len(), batch * out_len),
                    ));
                }
                let proj_len = out_len / p.repeat;
                let summed: Vec<T>;
                let dy = if p.repeat == 1 {
                    grad_out.values()
                } else {
                    summed = grad_out
                        .values()
                        .chunks(p.repeat)
                        .map(|c| c.iter().fold(T::zero(), |a, &g| a + g))
                        .collect();
                    &summed
                };
                let mut dw = vec![T::zero(); p.weight.len()];
                gemm(true, false, proj_len, p.in_features, batch, T::one(), dy, x.values(), T::zero(), &mut dw);
                let mut db = vec![T::zero(); proj_len];
                for row in dy.chunks(proj_len) {
                    for (d, &g) in db.iter_mut().zip(row) {
                        *d += g;
                    }
                }
                let mut dx = vec![T::zero(); x.len()];
                gemm(false, false, batch, p.in_features, proj_len, T::one(), dy, p.weight.values(), T::zero(), &mut dx);
                p.weight.accumulate_grad(&dw);
                p.bias.accumulate_grad(&db);
                DiffArray::from_vec(&in_shape, dx)
            }
        }
    }

    pub(crate) fn params_mut(&mut self) -> Vec<(&'static str, &mut DiffArray<T>)> {
        match self.projection.as_mut() {
            Some(p) => vec![("weight", &mut p.weight), ("bias", &mut p.bias)],
            None => Vec::new(),
        }
    }
}
