//! 2-D cross-correlation through an im2col lowering.
//!
//! The patch matrix has one row per (input channel, kernel row, kernel col)
//! and one column per (batch item, output row, output col), so the whole
//! batch is a single matrix product with the kernel bank.

use super::tensor::{gemm, MatView, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

/// Output extent along one axis, or `None` when the window does not fit.
pub fn out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

impl ConvGeometry {
    pub fn patch_len(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    pub fn positions(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }

    fn source(&self, oy: usize, ox: usize, ki: usize, kj: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ki) as isize - self.pad as isize;
        let x = (ox * self.stride + kj) as isize - self.pad as isize;
        if y < 0 || x < 0 || y >= self.in_h as isize || x >= self.in_w as isize {
            None
        } else {
            Some((y as usize, x as usize))
        }
    }
}

pub(crate) fn im2col<T: Real>(input: &[T], g: &ConvGeometry) -> Vec<T> {
    let n = g.positions();
    let plane = g.out_h * g.out_w;
    let mut cols = vec![T::zero(); g.patch_len() * n];
    for c in 0..g.in_c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * n..(row + 1) * n];
                for b in 0..g.batch {
                    let src = &input[(b * g.in_c + c) * g.in_h * g.in_w..];
                    for oy in 0..g.out_h {
                        for ox in 0..g.out_w {
                            if let Some((y, x)) = g.source(oy, ox, ki, kj) {
                                dst[b * plane + oy * g.out_w + ox] = src[y * g.in_w + x];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im_accumulate<T: Real>(cols: &[T], g: &ConvGeometry, dx: &mut [T]) {
    let n = g.positions();
    let plane = g.out_h * g.out_w;
    for c in 0..g.in_c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * n..(row + 1) * n];
                for b in 0..g.batch {
                    let base = (b * g.in_c + c) * g.in_h * g.in_w;
                    for oy in 0..g.out_h {
                        for ox in 0..g.out_w {
                            if let Some((y, x)) = g.source(oy, ox, ki, kj) {
                                let d = &mut dx[base + y * g.in_w + x];
                                *d = *d + src[b * plane + oy * g.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Returns the `[B × O × OH × OW]` output and the patch matrix for backward.
pub(crate) fn forward<T: Real>(
    input: &[T],
    kernel: &[T],
    bias: Option<&[T]>,
    g: &ConvGeometry,
) -> (Vec<T>, Vec<T>) {
    let cols = im2col(input, g);
    let n = g.positions();
    let mut cm = vec![T::zero(); g.out_c * n];
    gemm(
        MatView::new(kernel, g.out_c, g.patch_len()),
        MatView::new(&cols, g.patch_len(), n),
        &mut cm,
        T::zero(),
    );
    if let Some(b) = bias {
        for (o, row) in cm.chunks_exact_mut(n).enumerate() {
            row.iter_mut().for_each(|v| *v = *v + b[o]);
        }
    }
    (channel_major_to_batch_major(&cm, g), cols)
}

fn channel_major_to_batch_major<T: Real>(cm: &[T], g: &ConvGeometry) -> Vec<T> {
    let plane = g.out_h * g.out_w;
    let n = g.positions();
    let mut out = vec![T::zero(); cm.len()];
    for b in 0..g.batch {
        for o in 0..g.out_c {
            out[(b * g.out_c + o) * plane..(b * g.out_c + o + 1) * plane]
                .copy_from_slice(&cm[o * n + b * plane..o * n + (b + 1) * plane]);
        }
    }
    out
}

pub(crate) fn batch_major_to_channel_major<T: Real>(bm: &[T], g: &ConvGeometry) -> Vec<T> {
    let plane = g.out_h * g.out_w;
    let n = g.positions();
    let mut out = vec![T::zero(); bm.len()];
    for b in 0..g.batch {
        for o in 0..g.out_c {
            out[o * n + b * plane..o * n + (b + 1) * plane]
                .copy_from_slice(&bm[(b * g.out_c + o) * plane..(b * g.out_c + o + 1) * plane]);
        }
    }
    out
}

pub(crate) fn kernel_grad<T: Real>(gp: &[T], cols: &[T], g: &ConvGeometry, dk: &mut [T]) {
    let n = g.positions();
    gemm(
        MatView::new(gp, g.out_c, n),
        MatView::new(cols, g.patch_len(), n).t(),
        dk,
        T::one(),
    );
}

pub(crate) fn input_grad<T: Real>(gp: &[T], kernel: &[T], g: &ConvGeometry, dx: &mut [T]) {
    let n = g.positions();
    let mut dcols = vec![T::zero(); g.patch_len() * n];
    gemm(
        MatView::new(kernel, g.out_c, g.patch_len()).t(),
        MatView::new(gp, g.out_c, n),
        &mut dcols,
        T::zero(),
    );
    col2im_accumulate(&dcols, g, dx);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extents() {
        assert_eq!(out_extent(28, 5, 2, 2), Some(14));
        assert_eq!(out_extent(14, 5, 2, 2), Some(7));
        assert_eq!(out_extent(7, 5, 2, 1), Some(3));
        assert_eq!(out_extent(3, 5, 1, 0), None);
    }
}
