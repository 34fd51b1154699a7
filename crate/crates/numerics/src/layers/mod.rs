//! Layer kinds and their composition.

mod activation;
mod conv;
mod norm;
mod pool;
mod reshape;

pub use activation::{softmax_channelwise, Relu, SoftmaxChannels};
pub use conv::{Conv1d, Conv2d, ConvTranspose2d};
pub use norm::{BatchNorm, BATCHNORM_EPS, BATCHNORM_MOMENTUM};
pub use pool::MaxPool2d;
pub use reshape::Reshape;

use crate::{DiffArray, NumericsError, Result, Scalar};

/// Training mode records activations for `backward` and uses batch
/// statistics; evaluation mode does neither.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub(crate) fn take_cache<C>(slot: &mut Option<C>, layer: &'static str) -> Result<C> {
    slot.take().ok_or(NumericsError::NoForwardRecorded { layer })
}

pub(crate) fn check_rank<T: Scalar>(op: &'static str, input: &DiffArray<T>, rank: usize) -> Result<()> {
    if input.shape().len() != rank {
        return Err(NumericsError::invalid(
            op,
            format!("expected a rank-{rank} array, got shape {:?}", input.shape()),
        ));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv2d,
    Conv1d,
    TransposedConv2d,
    MaxPool2d,
    BatchNorm,
    Relu,
    SoftmaxChannelwise,
    Reshape,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::Conv1d => "conv1d",
            LayerKind::TransposedConv2d => "transposed_conv2d",
            LayerKind::MaxPool2d => "maxpool2d",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Relu => "relu",
            LayerKind::SoftmaxChannelwise => "softmax_channelwise",
            LayerKind::Reshape => "reshape",
        }
    }
}

/// One layer with its parameters and recorded activations.
#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    Conv1d(Conv1d<T>),
    TransposedConv2d(ConvTranspose2d<T>),
    MaxPool2d(MaxPool2d),
    BatchNorm(BatchNorm<T>),
    Relu(Relu),
    SoftmaxChannelwise(SoftmaxChannels<T>),
    Reshape(Reshape<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::Conv1d(_) => LayerKind::Conv1d,
            Layer::TransposedConv2d(_) => LayerKind::TransposedConv2d,
            Layer::MaxPool2d(_) => LayerKind::MaxPool2d,
            Layer::BatchNorm(_) => LayerKind::BatchNorm,
            Layer::Relu(_) => LayerKind::Relu,
            Layer::SoftmaxChannelwise(_) => LayerKind::SoftmaxChannelwise,
            Layer::Reshape(_) => LayerKind::Reshape,
        }
    }

    pub fn forward(&mut self, input: &DiffArray<T>, mode: Mode) -> Result<DiffArray<T>> {
        match self {
            Layer::Conv2d(l) => l.forward(input, mode),
            Layer::Conv1d(l) => l.forward(input, mode),
            Layer::TransposedConv2d(l) => l.forward(input, mode),
            Layer::MaxPool2d(l) => l.forward(input, mode),
            Layer::BatchNorm(l) => l.forward(input, mode),
            Layer::Relu(l) => l.forward(input, mode),
            Layer::SoftmaxChannelwise(l) => l.forward(input, mode),
            Layer::Reshape(l) => l.forward(input, mode),
        }
    }

    /// Accumulates parameter gradients and returns d(loss)/d(input).
    /// Consumes the recorded forward pass.
    pub fn backward(&mut self, grad_out: &DiffArray<T>) -> Result<DiffArray<T>> {
        match self {
            Layer::Conv2d(l) => l.backward(grad_out),
            Layer::Conv1d(l) => l.backward(grad_out),
            Layer::TransposedConv2d(l) => l.backward(grad_out),
            Layer::MaxPool2d(l) => l.backward(grad_out),
            Layer::BatchNorm(l) => l.backward(grad_out),
            Layer::Relu(l) => l.backward(grad_out),
            Layer::SoftmaxChannelwise(l) => l.backward(grad_out),
            Layer::Reshape(l) => l.backward(grad_out),
        }
    }

    /// Learnable parameters with their local names.
    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut DiffArray<T>)> {
        match self {
            Layer::Conv2d(l) => l.params_mut(),
            Layer::Conv1d(l) => l.params_mut(),
            Layer::TransposedConv2d(l) => l.params_mut(),
            Layer::BatchNorm(l) => l.params_mut(),
            Layer::Reshape(l) => l.params_mut(),
            Layer::MaxPool2d(_) | Layer::Relu(_) | Layer::SoftmaxChannelwise(_) => Vec::new(),
        }
    }

    /// Parameters plus non-learned state (batchnorm running statistics).
    pub fn state_mut(&mut self) -> Vec<(&'static str, &mut DiffArray<T>)> {
        match self {
            Layer::BatchNorm(l) => l.state_mut(),
            other => other.params_mut(),
        }
    }
}

impl<T: Scalar> From<Conv2d<T>> for Layer<T> {
    fn from(l: Conv2d<T>) -> Self {
        Layer::Conv2d(l)
    }
}
impl<T: Scalar> From<Conv1d<T>> for Layer<T> {
    fn from(l: Conv1d<T>) -> Self {
        Layer::Conv1d(l)
    }
}
impl<T: Scalar> From<ConvTranspose2d<T>> for Layer<T> {
    fn from(l: ConvTranspose2d<T>) -> Self {
        Layer::TransposedConv2d(l)
    }
}
impl<T: Scalar> From<MaxPool2d> for Layer<T> {
    fn from(l: MaxPool2d) -> Self {
        Layer::MaxPool2d(l)
    }
}
impl<T: Scalar> From<BatchNorm<T>> for Layer<T> {
    fn from(l: BatchNorm<T>) -> Self {
        Layer::BatchNorm(l)
    }
}
impl<T: Scalar> From<Relu> for Layer<T> {
    fn from(l: Relu) -> Self {
        Layer::Relu(l)
    }
}
impl<T: Scalar> From<SoftmaxChannels<T>> for Layer<T> {
    fn from(l: SoftmaxChannels<T>) -> Self {
        Layer::SoftmaxChannelwise(l)
    }
}
impl<T: Scalar> From<Reshape<T>> for Layer<T> {
    fn from(l: Reshape<T>) -> Self {
        Layer::Reshape(l)
    }
}

/// Layers applied in order; backward runs them in reverse.
#[derive(Clone, Debug, Default)]
pub struct Sequential<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Sequential { layers }
    }

    pub fn push(&mut self, layer: impl Into<Layer<T>>) {
        self.layers.push(layer.into());
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn forward(&mut self, input: &DiffArray<T>, mode: Mode) -> Result<DiffArray<T>> {
        let mut x = input.detached();
        for layer in &mut self.layers {
            x = layer.forward(&x, mode)?;
        }
        Ok(x)
    }

    pub fn backward(&mut self, grad_out: &DiffArray<T>) -> Result<DiffArray<T>> {
        let mut g = grad_out.detached();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Parameters named `<layer index>.<local name>`.
    pub fn params_mut(&mut self) -> Vec<(String, &mut DiffArray<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (name, p) in layer.params_mut() {
                out.push((format!("{i}.{name}"), p));
            }
        }
        out
    }

    pub fn state_mut(&mut self) -> Vec<(String, &mut DiffArray<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (name, p) in layer.state_mut() {
                out.push((format!("{i}.{name}"), p));
            }
        }
        out
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }
}

/// Concatenate two `N×C×…` arrays along axis 1.
pub fn concat_channels<T: Scalar>(a: &DiffArray<T>, b: &DiffArray<T>) -> Result<DiffArray<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() < 2 || sa.len() != sb.len() || sa[0] != sb[0] || sa[2..] != sb[2..] {
        let mut expected = sa.to_vec();
        if expected.len() >= 2 && sb.len() >= 2 {
            expected[1] = sb[1];
        }
        return Err(NumericsError::shape("concat_channels", &expected, sb));
    }
    let inner: usize = sa[2..].iter().product();
    let (ca, cb) = (sa[1] * inner, sb[1] * inner);
    let mut values = Vec::with_capacity(a.len() + b.len());
    for n in 0..sa[0] {
        values.extend_from_slice(&a.values()[n * ca..(n + 1) * ca]);
        values.extend_from_slice(&b.values()[n * cb..(n + 1) * cb]);
    }
    let mut shape = sa.to_vec();
    shape[1] = sa[1] + sb[1];
    DiffArray::from_vec(&shape, values)
}

/// Adjoint of [`concat_channels`]: split axis 1 after `first` channels.
pub fn split_channels<T: Scalar>(x: &DiffArray<T>, first: usize) -> Result<(DiffArray<T>, DiffArray<T>)> {
    let s = x.shape();
    if s.len() < 2 || first > s[1] {
        return Err(NumericsError::invalid(
            "split_channels",
            format!("cannot split {first} channels from shape {s:?}"),
        ));
    }
    let inner: usize = s[2..].iter().product();
    let (ca, cb) = (first * inner, (s[1] - first) * inner);
    let mut a = Vec::with_capacity(s[0] * ca);
    let mut b = Vec::with_capacity(s[0] * cb);
    for n in 0..s[0] {
        let item = &x.values()[n * (ca + cb)..(n + 1) * (ca + cb)];
        a.extend_from_slice(&item[..ca]);
        b.extend_from_slice(&item[ca..]);
    }
    let mut sa = s.to_vec();
    sa[1] = first;
    let mut sb = s.to_vec();
    sb[1] = s[1] - first;
    Ok((DiffArray::from_vec(&sa, a)?, DiffArray::from_vec(&sb, b)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_split_restores_inputs() {
        let a = DiffArray::<f64>::from_vec(&[2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = DiffArray::<f64>::from_vec(&[2, 2, 2], (10..18).map(f64::from).collect()).unwrap();
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 3, 2]);
        assert_eq!(&c.values()[..6], &[1.0, 2.0, 10.0, 11.0, 12.0, 13.0]);
        let (a2, b2) = split_channels(&c, 1).unwrap();
        assert_eq!(a2, a);
        assert_eq!(b2, b);
    }

    #[test]
    fn batchnorm_state_includes_running_stats() {
        let mut l: Layer<f32> = BatchNorm::new(3).into();
        let names: Vec<_> = l.state_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["gamma", "beta", "running_mean", "running_var"]);
    }
}
