use super::{check_rank, take_cache, Mode};
use crate::gemm::gemm;
use crate::im2col::{col2im, im2col, Window};
use crate::{DiffArray, NumericsError, Result, Scalar};
use rand::Rng;

/// Rectangular convolution core shared by [`Conv2d`] and [`Conv1d`].
/// Weights are `out×in×kh×kw`; the operation is cross-correlation.
#[derive(Clone, Debug)]
struct ConvCore<T> {
    in_channels: usize,
    out_channels: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad_h: usize,
    pad_w: usize,
    weight: DiffArray<T>,
    bias: DiffArray<T>,
    cache: Option<ConvCache<T>>,
}

#[derive(Clone, Debug)]
struct ConvCache<T> {
    window: Window,
    batch: usize,
    cols: Vec<T>,
}

impl<T: Scalar> ConvCore<T> {
    #[allow(clippy::too_many_arguments)]
    fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad_h: usize,
        pad_w: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = (in_channels * kh * kw) as f64;
        let bound = (1.0 / fan_in).sqrt();
        ConvCore {
            in_channels,
            out_channels,
            kh,
            kw,
            stride,
            pad_h,
            pad_w,
            weight: DiffArray::uniform_param(&[out_channels, in_channels, kh, kw], bound, rng),
            bias: DiffArray::uniform_param(&[out_channels], bound, rng),
            cache: None,
        }
    }

    fn window(&self, op: &'static str, height: usize, width: usize) -> Result<Window> {
        if height + 2 * self.pad_h < self.kh || width + 2 * self.pad_w < self.kw {
            return Err(NumericsError::invalid(
                op,
                format!(
                    "input {height}×{width} smaller than kernel {}×{} with padding",
                    self.kh, self.kw
                ),
            ));
        }
        Ok(Window {
            channels: self.in_channels,
            height,
            width,
            kh: self.kh,
            kw: self.kw,
            stride_h: self.stride,
            stride_w: self.stride,
            pad_h: self.pad_h,
            pad_w: self.pad_w,
        })
    }

    /// `input` is `N×C×H×W` (already validated).
    fn forward(
        &mut self,
        op: &'static str,
        input: &[T],
        batch: usize,
        height: usize,
        width: usize,
        mode: Mode,
    ) -> Result<(Vec<T>, usize, usize)> {
        let window = self.window(op, height, width)?;
        let (oh, ow) = (window.out_height(), window.out_width());
        let (rows, cols_n) = (window.col_rows(), window.col_cols());
        let img = window.image_len();
        let out_item = self.out_channels * oh * ow;
        let mut out = vec![T::zero(); batch * out_item];
        let mut cols = vec![T::zero(); batch * rows * cols_n];
        for n in 0..batch {
            let c = &mut cols[n * rows * cols_n..(n + 1) * rows * cols_n];
            im2col(&window, &input[n * img..(n + 1) * img], c);
            let y = &mut out[n * out_item..(n + 1) * out_item];
            for (o, chunk) in y.chunks_mut(oh * ow).enumerate() {
                chunk.fill(self.bias.values()[o]);
            }
            gemm(
                false,
                false,
                self.out_channels,
                cols_n,
                rows,
                T::one(),
                self.weight.values(),
                c,
                T::one(),
                y,
            );
        }
        self.cache = match mode {
            Mode::Train => Some(ConvCache {
                window,
                batch,
                cols,
            }),
            Mode::Eval => None,
        };
        Ok((out, oh, ow))
    }

    fn backward(&mut self, layer: &'static str, grad_out: &[T]) -> Result<(Vec<T>, Window, usize)> {
        let cache = take_cache(&mut self.cache, layer)?;
        let w = cache.window;
        let (rows, cols_n) = (w.col_rows(), w.col_cols());
        let out_item = self.out_channels * cols_n;
        if grad_out.len() != cache.batch * out_item {
            return Err(NumericsError::invalid(
                layer,
                format!(
                    "gradient has {} values, expected {}",
                    grad_out.len(),
                    cache.batch * out_item
                ),
            ));
        }
        let mut dw = vec![T::zero(); self.weight.len()];
        let mut db = vec![T::zero(); self.out_channels];
        let mut dx = vec![T::zero(); cache.batch * w.image_len()];
        let mut dcols = vec![T::zero(); rows * cols_n];
        for n in 0..cache.batch {
            let dy = &grad_out[n * out_item..(n + 1) * out_item];
            let c = &cache.cols[n * rows * cols_n..(n + 1) * rows * cols_n];
            gemm(false, true, self.out_channels, rows, cols_n, T::one(), dy, c, T::one(), &mut dw);
            for (o, chunk) in dy.chunks(cols_n).enumerate() {
                db[o] += chunk.iter().copied().sum();
            }
            gemm(true, false, rows, cols_n, self.out_channels, T::one(), self.weight.values(), dy, T::zero(), &mut dcols);
            col2im(&w, &dcols, &mut dx[n * w.image_len()..(n + 1) * w.image_len()]);
        }
        self.weight.accumulate_grad(&dw);
        self.bias.accumulate_grad(&db);
        Ok((dx, w, cache.batch))
    }
}

/// 2-D convolution over `N×C×H×W`, square kernel, symmetric zero padding.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    core: ConvCore<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        Conv2d {
            core: ConvCore::new(in_channels, out_channels, kernel, kernel, stride, padding, padding, rng),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.core.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.core.out_channels
    }

    pub fn kernel_size(&self) -> usize {
        self.core.kh
    }

    pub fn weight(&self) -> &DiffArray<T> {
        &self.core.weight
    }

    pub fn weight_mut(&mut self) -> &mut DiffArray<T> {
        &mut self.core.weight
    }

    pub fn bias_mut(&mut self) -> &mut DiffArray<T> {
        &mut self.core.bias
    }

    pub fn forward(&mut self, input: &DiffArray<T>, mode: Mode) -> Result<DiffArray<T>> {
        check_rank("conv2d", input, 4)?;
        let s = input.shape();
        if s[1] != self.core.in_channels {
            return Err(NumericsError::shape(
                "conv2d",
                &[s[0], self.core.in_channels, s[2], s[3]],
                s,
            ));
        }
        let (out, oh, ow) = self.core.forward("conv2d", input.values(), s[0], s[2], s[3], mode)?;
        DiffArray::from_vec(&[s[0], self.core.out_channels, oh, ow], out)
    }

    pub fn backward(&mut self, grad_out: &DiffArray<T>) -> Result<DiffArray<T>> {
        let (dx, w, batch) = self.core.backward("conv2d", grad_out.values())?;
        DiffArray::from_vec(&[batch, w.channels, w.height, w.width], dx)
    }

    pub(crate) fn params_mut(&mut self) -> Vec<(&'static str, &mut DiffArray<T>)> {
        vec![("weight", &mut self.core.weight), ("bias", &mut self.core.bias)]
    }
}

/// 1-D convolution over `N×C×L`.
#[derive(Clone, Debug)]
pub struct Conv1d<T> {
    core: ConvCore<T>,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        Conv1d {
            core: ConvCore::new(in_channels, out_channels, 1, kernel, 1, 0, padding, rng),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.core.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.core.out_channels
    }

    pub fn kernel_size(&self) -> usize {
        self.core.kw
    }

    pub fn weight_mut(&mut self) -> &mut DiffArray<T> {
        &mut self.core.weight
    }

    pub fn bias_mut(&mut self) -> &mut DiffArray<T> {
        &mut self.core.bias
    }

    pub fn forward(&mut self, input: &DiffArray<T>, mode: Mode) -> Result<DiffArray<T>> {
        check_rank("conv1d", input, 3)?;
        let s = input.shape();
        if s[1] != self.core.in_channels {
            return Err(NumericsError::shape("conv1d", &[s[0], self.core.in_channels, s[2]], s));
        }
        let (out, _, ow) = self.core.forward("conv1d", input.values(), s[0], 1, s[2], mode)?;
        DiffArray::from_vec(&[s[0], self.core.out_channels, ow], out)
    }

    pub fn backward(&mut self, grad_out: &DiffArray<T>) -> Result<DiffArray<T>> {
        let (dx, w, batch) = self.core.backward("conv1d", grad_out.values())?;
        DiffArray::from_vec(&[batch, w.channels, w.width], dx)
    }

    pub(crate) fn params_mut(&mut self) -> Vec<(&'static str, &mut DiffArray<T>)> {
        vec![("weight", &mut self.core.weight), ("bias", &mut self.core.bias)]
    }
}

/// Transposed 2-D convolution (fractionally strided), weights `in×out×k×k`.
/// Output size is `(H−1)·stride + k − 2·padding`.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d<T> {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    weight: DiffArray<T>,
    bias: DiffArray<T>,
    cache: Option<TransposeCache<T>>,
}

#[derive(Clone, Debug)]
struct TransposeCache<T> {
    input: DiffArray<T>,
    window: Window,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        // fan_in as seen by each output pixel
        let fan_in = (out_channels * kernel * kernel) as f64;
        let bound = (1.0 / fan_in).sqrt();
        ConvTranspose2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: DiffArray::uniform_param(&[in_channels, out_channels, kernel, kernel], bound, rng),
            bias: DiffArray::uniform_param(&[out_channels], bound, rng),
            cache: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel
    }

    pub fn weight_mut(&mut self) -> &mut DiffArray<T> {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut DiffArray<T> {
        &mut self.bias
    }

    fn out_window(&self, h: usize, w: usize) -> Result<Window> {
        let oh = (h - 1) * self.stride + self.kernel;
        let ow = (w - 1) * self.stride + self.kernel;
        if oh <= 2 * self.padding || ow <= 2 * self.padding {
            return Err(NumericsError::invalid(
                "transposed_conv2d",
                format!("padding {} too large for input {h}×{w}", self.padding),
            ));
        }
        Ok(Window {
            channels: self.out_channels,
            height: oh - 2 * self.padding,
            width: ow - 2 * self.padding,
            kh: self.kernel,
            kw: self.kernel,
            stride_h: self.stride,
            stride_w: self.stride,
            pad_h: self.padding,
            pad_w: self.padding,
        })
    }

    pub fn forward(&mut self, input: &DiffArray<T>, mode: Mode) -> Result<DiffArray<T>> {
        check_rank("transposed_conv2d", input, 4)?;
        let s = input.shape();
        if s[1] != self.in_channels || s[2] == 0 || s[3] == 0 {
            return Err(NumericsError::shape(
                "transposed_conv2d",
                &[s[0], self.in_channels, s[2].max(1), s[3].max(1)],
                s,
            ));
        }
        let (batch, h, w) = (s[0], s[2], s[3]);
        let window = self.out_window(h, w)?;
        debug_assert_eq!(window.col_cols(), h * w);
        let rows = window.col_rows();
        let in_item = self.in_channels * h * w;
        let out_item = window.image_len();
        let plane = window.height * window.width;
        let mut out = vec![T::zero(); batch * out_item];
        let mut cols = vec![T::zero(); rows * h * w];
        for n in 0..batch {
            let x = &input.values()[n * in_item..(n + 1) * in_item];
            gemm(true, false, rows, h * w, self.in_channels, T::one(), self.weight.values(), x, T::zero(), &mut cols);
            let y = &mut out[n * out_item..(n + 1) * out_item];
            for (o, chunk) in y.chunks_mut(plane).enumerate() {
                chunk.fill(self.bias.values()[o]);
            }
            col2im(&window, &cols, y);
        }
        self.cache = match mode {
            Mode::Train => Some(TransposeCache {
                input: input.detached(),
                window,
            }),
            Mode::Eval => None,
        };
        DiffArray::from_vec(&[batch, self.out_channels, window.height, window.width], out)
    }

    pub fn backward(&mut self, grad_out: &DiffArray<T>) -> Result<DiffArray<T>> {
        let cache = take_cache(&mut self.cache, "transposed_conv2d")?;
        let w = cache.window;
        let s = cache.input.shape().to_vec();
        let (batch, hw) = (s[0], s[2] * s[3]);
        if grad_out.len() != batch * w.image_len() {
            return Err(NumericsError::shape(
                "transposed_conv2d backward",
                &[batch, w.channels, w.height, w.width],
                grad_out.shape(),
            ));
        }
        let rows = w.col_rows();
        let in_item = self.in_channels * hw;
        let mut dw = vec![T::zero(); self.weight.len()];
        let mut db = vec![T::zero(); self.out_channels];
        let mut dx = vec![T::zero(); batch * in_item];
        let mut dcols = vec![T::zero(); rows * hw];
        let plane = w.height * w.width;
        for n in 0..batch {
            let dy = &grad_out.values()[n * w.image_len()..(n + 1) * w.image_len()];
            for (o, chunk) in dy.chunks(plane).enumerate() {
                db[o] += chunk.iter().copied().sum();
            }
            im2col(&w, dy, &mut dcols);
            let x = &cache.input.values()[n * in_item..(n + 1) * in_item];
            gemm(false, true, self.in_channels, rows, hw, T::one(), x, &dcols, T::one(), &mut dw);
            gemm(
                false,
                false,
                self.in_channels,
                hw,
                rows,
                T::one(),
                self.weight.values(),
                &dcols,
                T::zero(),
                &mut dx[n * in_item..(n + 1) * in_item],
            );
        }
        self.weight.accumulate_grad(&dw);
        self.bias.accumulate_grad(&db);
        DiffArray::from_vec(&s, dx)
    }

    pub(crate) fn params_mut(&mut self) -> Vec<(&'static str, &mut DiffArray<T>)> {
        vec![("weight", &mut self.weight), ("bias", &mut self.bias)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set(a: &mut DiffArray<f64>, v: &[f64]) {
        a.values_mut().copy_from_slice(v);
    }

    #[test]
    fn identity_1x1_kernel_is_exact_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut conv = Conv2d::<f64>::new(1, 1, 1, 1, 0, &mut rng);
        set(conv.weight_mut(), &[1.0]);
        set(conv.bias_mut(), &[0.0]);
        let x = DiffArray::from_vec(&[2, 1, 3, 4], (0..24).map(|i| (i as f64).sin()).collect()).unwrap();
        let y = conv.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_on_ones_counts_covered_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut conv = Conv2d::<f64>::new(1, 1, 3, 1, 1, &mut rng);
        set(conv.weight_mut(), &[1.0; 9]);
        set(conv.bias_mut(), &[0.0]);
        let x = DiffArray::filled(&[1, 1, 3, 3], 1.0);
        let y = conv.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.values(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn channel_mismatch_reports_both_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut conv = Conv2d::<f32>::new(2, 4, 3, 1, 1, &mut rng);
        let err = conv.forward(&DiffArray::zeros(&[1, 3, 5, 5]), Mode::Eval).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 2, 5, 5]") && msg.contains("[1, 3, 5, 5]"), "{msg}");
    }

    #[test]
    fn backward_twice_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut conv = Conv2d::<f64>::new(1, 2, 3, 1, 1, &mut rng);
        let x = DiffArray::filled(&[1, 1, 4, 4], 0.5);
        let y = conv.forward(&x, Mode::Train).unwrap();
        let g = DiffArray::filled(y.shape(), 1.0);
        conv.backward(&g).unwrap();
        assert!(matches!(
            conv.backward(&g),
            Err(NumericsError::NoForwardRecorded { .. })
        ));
    }

    #[test]
    fn weight_grad_of_sum_is_sum_of_multiplied_patch() {
        // loss = sum(conv(x)); d/dw(i,j) = sum over outputs of the input value under tap (i,j).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut conv = Conv2d::<f64>::new(1, 1, 3, 1, 1, &mut rng);
        let xs: Vec<f64> = (0..16).map(|i| i as f64 * 0.25 - 1.0).collect();
        let x = DiffArray::from_vec(&[1, 1, 4, 4], xs.clone()).unwrap();
        let y = conv.forward(&x, Mode::Train).unwrap();
        conv.backward(&DiffArray::filled(y.shape(), 1.0)).unwrap();
        let g = conv.weight().grad().unwrap().to_vec();
        for ky in 0..3 {
            for kx in 0..3 {
                let mut expect = 0.0;
                for oy in 0..4i64 {
                    for ox in 0..4i64 {
                        let (iy, ix) = (oy + ky as i64 - 1, ox + kx as i64 - 1);
                        if (0..4).contains(&iy) && (0..4).contains(&ix) {
                            expect += xs[(iy * 4 + ix) as usize];
                        }
                    }
                }
                assert!((g[ky * 3 + kx] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_k2_s2_places_weight_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut up = ConvTranspose2d::<f64>::new(1, 1, 2, 2, 0, &mut rng);
        set(up.weight_mut(), &[1.0, 2.0, 3.0, 4.0]);
        set(up.bias_mut(), &[0.5]);
        let x = DiffArray::from_vec(&[1, 1, 1, 2], vec![1.0, 10.0]).unwrap();
        let y = up.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 4]);
        assert_eq!(y.values(), &[1.5, 2.5, 10.5, 20.5, 3.5, 4.5, 30.5, 40.5]);
    }

    #[test]
    fn conv1d_kernel3_pad1_preserves_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut conv = Conv1d::<f64>::new(1, 3, 3, 1, &mut rng);
        let y = conv.forward(&DiffArray::zeros(&[2, 1, 25]), Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[2, 3, 25]);
    }
}
