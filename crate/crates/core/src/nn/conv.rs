//! im2col / col2im for a single `C×H×W` example.

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernel: usize, stride: usize, pad: usize) -> Self {
        let (channels, height, width) = (input[0], input[1], input[2]);
        Self {
            channels,
            height,
            width,
            kernel,
            stride,
            pad,
            out_h: (height + 2 * pad - kernel) / stride + 1,
            out_w: (width + 2 * pad - kernel) / stride + 1,
        }
    }

    /// Rows of the column matrix: `C·K·K`.
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    /// Columns of the column matrix: output positions.
    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input coordinate read by `(kernel row, kernel col)` at output
    /// `(oy, ox)`, or `None` inside the zero padding.
    #[inline]
    fn source(&self, ky: usize, kx: usize, oy: usize, ox: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.pad)?;
        let x = (ox * self.stride + kx).checked_sub(self.pad)?;
        (y < self.height && x < self.width).then_some((y, x))
    }

    /// Column matrix `[C·K·K, P]`, row-major.
    pub fn im2col(&self, input: &[f64], cols: &mut [f64]) {
        let p = self.positions();
        let k = self.kernel;
        for c in 0..self.channels {
            let plane = &input[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            dst[oy * self.out_w + ox] = match self.source(ky, kx, oy, ox) {
                                Some((y, x)) => plane[y * self.width + x],
                                None => 0.0,
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`im2col`](Self::im2col): accumulates column gradients
    /// into the input gradient.
    pub fn col2im(&self, cols: &[f64], grad: &mut [f64]) {
        let p = self.positions();
        let k = self.kernel;
        for c in 0..self.channels {
            let base = c * self.height * self.width;
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            if let Some((y, x)) = self.source(ky, kx, oy, ox) {
                                grad[base + y * self.width + x] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn im2col_with_padding() {
        // 1x2x2 input, 2x2 kernel, pad 1, stride 1 -> 3x3 output
        let g = ConvGeometry::new(&[1, 2, 2], 2, 1, 1);
        assert_eq!((g.out_h, g.out_w), (3, 3));
        let mut cols = vec![0.0; g.patch_len() * g.positions()];
        g.im2col(&[1.0, 2.0, 3.0, 4.0], &mut cols);
        // kernel (0,0) sees the input shifted down-right by one
        assert_eq!(&cols[..9], &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 3.0, 4.0]);
        // kernel (1,1) sees the input shifted up-left
        assert_eq!(&cols[27..], &[1.0, 2.0, 0.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn col2im_is_adjoint() {
        // <im2col(x), c> == <x, col2im(c)>
        let g = ConvGeometry::new(&[2, 5, 4], 3, 2, 1);
        let n_in = 2 * 5 * 4;
        let n_col = g.patch_len() * g.positions();
        let x: vec::Vec<f64> = (0..n_in).map(|i| libm::sin(i as f64 * 0.37)).collect();
        let c: vec::Vec<f64> = (0..n_col).map(|i| libm::cos(i as f64 * 0.11)).collect();
        let mut cols = vec![0.0; n_col];
        g.im2col(&x, &mut cols);
        let mut back = vec![0.0; n_in];
        g.col2im(&c, &mut back);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
