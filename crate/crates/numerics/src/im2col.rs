use crate::Scalar;

/// Sliding-window geometry of a (possibly rectangular) 2-D kernel over a
/// `channels×height×width` image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Window {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub pad_h: usize,
    pub pad_w: usize,
}

impl Window {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad_h - self.kh) / self.stride_h + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad_w - self.kw) / self.stride_w + 1
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.out_height() * self.out_width()
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Output-column range `[lo, hi)` whose input column `ox·s + kx − p`
    /// falls inside the image.
    fn valid_ox(&self, kx: usize) -> (usize, usize) {
        let ow = self.out_width();
        let s = self.stride_w;
        // smallest ox with ox*s + kx >= pad
        let lo = if kx >= self.pad_w {
            0
        } else {
            (self.pad_w - kx).div_ceil(s)
        };
        // largest ox with ox*s + kx - pad < width
        let limit = self.width + self.pad_w;
        let hi = if kx >= limit {
            0
        } else {
            ((limit - kx - 1) / s + 1).min(ow)
        };
        (lo.min(hi), hi)
    }

    fn input_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = oy * self.stride_h + ky;
        if iy < self.pad_h || iy - self.pad_h >= self.height {
            None
        } else {
            Some(iy - self.pad_h)
        }
    }
}

/// Unfold `src` (one image) into `dst`, a `col_rows × col_cols` matrix.
pub(crate) fn im2col<T: Scalar>(w: &Window, src: &[T], dst: &mut [T]) {
    debug_assert_eq!(src.len(), w.image_len());
    debug_assert_eq!(dst.len(), w.col_rows() * w.col_cols());
    let (oh, ow) = (w.out_height(), w.out_width());
    let plane = w.height * w.width;
    let mut row = 0;
    for c in 0..w.channels {
        let chan = &src[c * plane..(c + 1) * plane];
        for ky in 0..w.kh {
            for kx in 0..w.kw {
                let (lo, hi) = w.valid_ox(kx);
                let block = &mut dst[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let out = &mut block[oy * ow..(oy + 1) * ow];
                    let Some(iy) = w.input_row(oy, ky) else {
                        out.fill(T::zero());
                        continue;
                    };
                    let line = &chan[iy * w.width..(iy + 1) * w.width];
                    out[..lo].fill(T::zero());
                    out[hi..].fill(T::zero());
                    if w.stride_w == 1 {
                        let start = lo + kx - w.pad_w;
                        out[lo..hi].copy_from_slice(&line[start..start + (hi - lo)]);
                    } else {
                        for (ox, o) in out.iter_mut().enumerate().take(hi).skip(lo) {
                            *o = line[ox * w.stride_w + kx - w.pad_w];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulate the columns back into `dst` (one
/// image), which is *added to*, not overwritten.
pub(crate) fn col2im<T: Scalar>(w: &Window, src: &[T], dst: &mut [T]) {
    debug_assert_eq!(dst.len(), w.image_len());
    debug_assert_eq!(src.len(), w.col_rows() * w.col_cols());
    let (oh, ow) = (w.out_height(), w.out_width());
    let plane = w.height * w.width;
    let mut row = 0;
    for c in 0..w.channels {
        let chan = &mut dst[c * plane..(c + 1) * plane];
        for ky in 0..w.kh {
            for kx in 0..w.kw {
                let (lo, hi) = w.valid_ox(kx);
                let block = &src[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let Some(iy) = w.input_row(oy, ky) else {
                        continue;
                    };
                    let input = &block[oy * ow..(oy + 1) * ow];
                    let line = &mut chan[iy * w.width..(iy + 1) * w.width];
                    if w.stride_w == 1 {
                        let start = lo + kx - w.pad_w;
                        for (d, s) in line[start..start + (hi - lo)].iter_mut().zip(&input[lo..hi]) {
                            *d += *s;
                        }
                    } else {
                        for (ox, s) in input.iter().enumerate().take(hi).skip(lo) {
                            line[ox * w.stride_w + kx - w.pad_w] += *s;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_im2col(w: &Window, src: &[f64]) -> Vec<f64> {
        let (oh, ow) = (w.out_height(), w.out_width());
        let mut out = vec![0.0; w.col_rows() * oh * ow];
        for c in 0..w.channels {
            for ky in 0..w.kh {
                for kx in 0..w.kw {
                    let r = (c * w.kh + ky) * w.kw + kx;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let iy = (oy * w.stride_h + ky) as isize - w.pad_h as isize;
                            let ix = (ox * w.stride_w + kx) as isize - w.pad_w as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < w.height && (ix as usize) < w.width {
                                out[r * oh * ow + oy * ow + ox] =
                                    src[(c * w.height + iy as usize) * w.width + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn windows() -> Vec<Window> {
        let mut v = Vec::new();
        for &(h, wd, k, s, p) in &[
            (5, 7, 3, 1, 1),
            (4, 4, 2, 2, 0),
            (6, 5, 3, 2, 1),
            (1, 9, 1, 1, 0),
            (3, 3, 3, 1, 2),
            (8, 8, 2, 2, 0),
        ] {
            v.push(Window {
                channels: 2,
                height: h,
                width: wd,
                kh: k,
                kw: k,
                stride_h: s,
                stride_w: s,
                pad_h: p,
                pad_w: p,
            });
        }
        v.push(Window {
            channels: 3,
            height: 1,
            width: 10,
            kh: 1,
            kw: 3,
            stride_h: 1,
            stride_w: 1,
            pad_h: 0,
            pad_w: 1,
        });
        v
    }

    #[test]
    fn im2col_matches_naive_unfold() {
        for w in windows() {
            let src: Vec<f64> = (0..w.image_len()).map(|i| i as f64 + 1.0).collect();
            let mut dst = vec![f64::NAN; w.col_rows() * w.col_cols()];
            im2col(&w, &src, &mut dst);
            assert_eq!(dst, naive_im2col(&w, &src), "{w:?}");
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        for w in windows() {
            let x: Vec<f64> = (0..w.image_len()).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
            let y: Vec<f64> = (0..w.col_rows() * w.col_cols())
                .map(|i| ((i * 5 % 13) as f64) * 0.5 - 3.0)
                .collect();
            let mut cols = vec![0.0; y.len()];
            im2col(&w, &x, &mut cols);
            let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
            let mut back = vec![0.0; x.len()];
            col2im(&w, &y, &mut back);
            let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9, "{w:?}: {lhs} vs {rhs}");
        }
    }
}
