use crate::{NumericsError, Result, Scalar};
use rand::Rng;

/// A dense row-major array with an optional gradient of the same shape.
///
/// Activations flow between layers without a gradient; learnable
/// parameters carry one, and `backward` accumulates into it.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffArray<T> {
    shape: Vec<usize>,
    values: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> DiffArray<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        DiffArray {
            shape: shape.to_vec(),
            values: vec![value; shape.iter().product()],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], values: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(NumericsError::invalid(
                "DiffArray::from_vec",
                format!("shape {shape:?} holds {n} values, got {}", values.len()),
            ));
        }
        Ok(DiffArray {
            shape: shape.to_vec(),
            values,
            grad: None,
        })
    }

    /// Learnable parameter initialised uniformly in `±bound`, with a zeroed
    /// gradient.
    pub fn uniform_param<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let n: usize = shape.iter().product();
        let values = (0..n)
            .map(|_| T::from_f64(rng.random_range(-bound..=bound)))
            .collect();
        DiffArray {
            shape: shape.to_vec(),
            values,
            grad: Some(vec![T::zero(); n]),
        }
    }

    /// Parameter with constant initial value and a zeroed gradient.
    pub fn param_filled(shape: &[usize], value: T) -> Self {
        let mut a = Self::filled(shape, value);
        a.requires_grad();
        a
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [T]> {
        self.grad.as_deref_mut()
    }

    /// Values and gradient borrowed together, for optimizers.
    pub fn values_and_grad_mut(&mut self) -> (&mut [T], Option<&mut [T]>) {
        (&mut self.values, self.grad.as_deref_mut())
    }

    /// Attach a zeroed gradient if none is present.
    pub fn requires_grad(&mut self) {
        if self.grad.is_none() {
            self.grad = Some(vec![T::zero(); self.values.len()]);
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub(crate) fn accumulate_grad(&mut self, delta: &[T]) {
        let g = self
            .grad
            .get_or_insert_with(|| vec![T::zero(); delta.len()]);
        for (g, d) in g.iter_mut().zip(delta) {
            *g += *d;
        }
    }

    /// Same values, new shape of equal element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.values.len() {
            return Err(NumericsError::shape("reshape", shape, &self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Copy of the values without a gradient.
    pub fn detached(&self) -> Self {
        DiffArray {
            shape: self.shape.clone(),
            values: self.values.clone(),
            grad: None,
        }
    }

    pub fn sum(&self) -> T {
        self.values.iter().copied().sum()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        DiffArray {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    /// Element-type conversion (gradient dropped).
    pub fn cast<U: Scalar>(&self) -> DiffArray<U> {
        DiffArray {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            grad: None,
        }
    }

    /// Size of axis 0.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Number of elements per batch item.
    pub fn item_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    /// Select batch items by index (gather along axis 0).
    pub fn gather_batch(&self, indices: &[usize]) -> Result<Self> {
        let item = self.item_len();
        let n = self.batch();
        let mut values = Vec::with_capacity(indices.len() * item);
        for &i in indices {
            if i >= n {
                return Err(NumericsError::invalid(
                    "gather_batch",
                    format!("index {i} out of range for batch {n}"),
                ));
            }
            values.extend_from_slice(&self.values[i * item..(i + 1) * item]);
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        DiffArray::from_vec(&shape, values)
    }

    /// Adjoint of [`gather_batch`](Self::gather_batch): sums the rows of
    /// `self` into a batch of size `n` at the given indices.
    pub fn scatter_add_batch(&self, indices: &[usize], n: usize) -> Result<Self> {
        if indices.len() != self.batch() {
            return Err(NumericsError::invalid(
                "scatter_add_batch",
                format!("{} indices for batch {}", indices.len(), self.batch()),
            ));
        }
        let item = self.item_len();
        let mut shape = self.shape.clone();
        shape[0] = n;
        let mut out = DiffArray::zeros(&shape);
        for (row, &i) in indices.iter().enumerate() {
            if i >= n {
                return Err(NumericsError::invalid(
                    "scatter_add_batch",
                    format!("index {i} out of range for batch {n}"),
                ));
            }
            let dst = &mut out.values[i * item..(i + 1) * item];
            for (d, s) in dst.iter_mut().zip(&self.values[row * item..(row + 1) * item]) {
                *d += *s;
            }
        }
        Ok(out)
    }
}
