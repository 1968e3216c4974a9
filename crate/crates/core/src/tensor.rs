//! Dense row-major `f64` tensors and the matrix product the engine is built on.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Dense n-dimensional array. Images use NCHW, flat data uses NF.
///
/// Values are finite: constructors reject NaN and infinities.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected = checked_len(&shape)?;
        if expected != data.len() {
            return Err(Error::ShapeData {
                shape,
                expected,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        assert!(value.is_finite());
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Result<Self> {
        let len: usize = shape.iter().product();
        Self::new(shape.to_vec(), (0..len).map(&mut f).collect())
    }

    /// Square identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Crate-internal constructor for values already known to be finite.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        let expected = checked_len(&shape)?;
        if expected != self.data.len() {
            return Err(Error::ShapeData {
                shape,
                expected,
                actual: self.data.len(),
            });
        }
        Ok(Self {
            shape,
            data: self.data,
        })
    }

    /// Extent of the leading (batch) axis.
    pub fn batch_len(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Shape of one example, i.e. everything after the leading axis.
    pub fn example_shape(&self) -> &[usize] {
        self.shape.get(1..).unwrap_or(&[])
    }

    pub fn example_len(&self) -> usize {
        self.example_shape().iter().product()
    }

    pub fn example(&self, i: usize) -> &[f64] {
        let n = self.example_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub(crate) fn example_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.example_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    /// Selects examples along the leading axis, in the given order.
    pub fn gather(&self, indices: &[usize]) -> Self {
        let n = self.example_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.example(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Self { shape, data }
    }

    /// Stacks equally shaped examples along a new leading axis.
    pub fn stack(examples: &[&[f64]], example_shape: &[usize]) -> Result<Self> {
        let n: usize = example_shape.iter().product();
        let mut data = Vec::with_capacity(examples.len() * n);
        for ex in examples {
            if ex.len() != n {
                return Err(Error::ShapeData {
                    shape: example_shape.to_vec(),
                    expected: n,
                    actual: ex.len(),
                });
            }
            data.extend_from_slice(ex);
        }
        let mut shape = vec![examples.len()];
        shape.extend_from_slice(example_shape);
        Self::new(shape, data)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| crate::math::abs(a - b))
            .fold(0.0, f64::max)
    }
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.contains(&0) {
        return Err(Error::ShapeData {
            shape: shape.to_vec(),
            expected: 0,
            actual: 0,
        });
    }
    Ok(shape.iter().product())
}

/// Matrix product of two 2-D tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::Dimension {
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, &a.data, false, &b.data, false, 0.0, &mut out);
    Ok(Tensor::from_parts(vec![m, n], out))
}

/// `c = op(a) · op(b) + beta · c` on row-major slices, where `op(a)` is
/// `m × k` and `op(b)` is `k × n`. A transposed operand is stored with its
/// dimensions swapped (`k × m` for `a`, `n × k` for `b`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every strided access stays inside
    // the three slices, and `c` does not alias `a` or `b` (unique borrow).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
