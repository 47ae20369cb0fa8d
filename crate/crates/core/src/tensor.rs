//! Minimal dense-tensor kernel.
//!
//! Row-major flat storage with explicit shape metadata, 64-bit floats
//! everywhere, deterministic left-to-right summation order. No views, no
//! strides, no broadcasting beyond the bias-add in [`linear`]. Tensors are
//! immutable values once handed out; the few mutating helpers take
//! `&mut self` and are meant for single-owner parameter updates.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;

/// Dense multi-dimensional array of `f64` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor from a shape and flat row-major data.
    ///
    /// Fails if any dimension is zero, the element count does not match
    /// `product(shape)`, or the data contains NaN/Inf.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidShape {
                op: "from_vec",
                detail: format!("dimensions must be positive, got {shape:?}"),
            });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidShape {
                op: "from_vec",
                detail: format!(
                    "shape {shape:?} holds {expected} elements, data has {}",
                    data.len()
                ),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: "from_vec",
                index,
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    /// 2-D convenience constructor.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_vec(vec![rows, cols], data)
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Number of rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[0]
    }

    /// Number of columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[1]
    }

    /// Element of a 2-D tensor.
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[row * self.shape[1] + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert_eq!(self.rank(), 2);
        self.data[row * self.shape[1] + col] = value;
    }

    /// Row slice of a 2-D tensor.
    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        debug_assert_eq!(self.rank(), 2);
        let c = self.shape[1];
        &self.data[row * c..(row + 1) * c]
    }

    /// Reinterpret the same flat data under a new shape.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        Self::from_vec(shape, self.data.clone())
    }

    /// Transpose of a 2-D tensor.
    pub fn transposed(&self) -> Self {
        debug_assert_eq!(self.rank(), 2);
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = Self::zeros(vec![c, r]);
        for i in 0..r {
            for j in 0..c {
                out.data[j * r + i] = self.data[i * c + j];
            }
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Elementwise `self += scale * other`. Shapes must agree.
    pub fn add_scaled_assign(&mut self, other: &Tensor, scale: f64) {
        assert_eq!(self.shape, other.shape, "add_scaled_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += scale * b;
        }
    }

    /// Elementwise convex combination `self = alpha*self + (1-alpha)*other`.
    pub fn lerp_assign(&mut self, other: &Tensor, alpha: f64) {
        assert_eq!(self.shape, other.shape, "lerp_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = alpha * *a + (1.0 - alpha) * b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Euclidean norm of the flat data.
    pub fn norm(&self) -> f64 {
        fmath::sqrt(self.data.iter().map(|v| v * v).sum())
    }
}

/// Standard matrix product of `a: [m×k]` and `b: [k×n]`.
///
/// Summation over the inner dimension is a fixed left-to-right loop, so
/// results are bit-reproducible.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        let a_row = &a.data[i * k..(i + 1) * k];
        let out_row = &mut out.data[i * n..(i + 1) * n];
        for (l, &a_il) in a_row.iter().enumerate() {
            let b_row = &b.data[l * n..(l + 1) * n];
            for (o, &b_lj) in out_row.iter_mut().zip(b_row.iter()) {
                *o += a_il * b_lj;
            }
        }
    }
    Ok(out)
}

/// Softmax along `axis`, computed with max-subtraction for stability.
///
/// Along the axis the outputs are nonnegative and sum to 1 within 1e-12.
/// NaN input is a contract violation.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank() {
        return Err(Error::InvalidShape {
            op: "softmax",
            detail: format!("axis {axis} out of range for shape {:?}", x.shape),
        });
    }
    if let Some(index) = x.data.iter().position(|v| v.is_nan()) {
        return Err(Error::NonFinite {
            op: "softmax",
            index,
        });
    }
    let axis_len = x.shape[axis];
    let inner: usize = x.shape[axis + 1..].iter().product();
    let outer: usize = x.shape[..axis].iter().product();

    let mut out = Tensor::zeros(x.shape.clone());
    for o in 0..outer {
        for i in 0..inner {
            let base = o * axis_len * inner + i;
            let mut max = f64::NEG_INFINITY;
            for a in 0..axis_len {
                max = max.max(x.data[base + a * inner]);
            }
            let mut sum = 0.0;
            for a in 0..axis_len {
                let e = fmath::exp(x.data[base + a * inner] - max);
                out.data[base + a * inner] = e;
                sum += e;
            }
            for a in 0..axis_len {
                out.data[base + a * inner] /= sum;
            }
        }
    }
    Ok(out)
}

/// Affine map `x·W + b` with the bias broadcast across rows.
///
/// `x: [n×d_in]`, `w: [d_in×d_out]`, `b: [d_out]`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if b.rank() != 1 || w.rank() != 2 || b.shape[0] != w.shape[1] {
        return Err(Error::ShapeMismatch {
            op: "linear",
            left: w.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let mut out = matmul(x, w).map_err(|_| Error::ShapeMismatch {
        op: "linear",
        left: x.shape.clone(),
        right: w.shape.clone(),
    })?;
    let n_out = b.shape[0];
    for row in out.data.chunks_mut(n_out) {
        for (v, bias) in row.iter_mut().zip(b.data.iter()) {
            *v += bias;
        }
    }
    Ok(out)
}

/// Flat binary tensor format: magic `DYCT`, version byte, rank byte,
/// little-endian u64 dims, little-endian f64 payload.
pub const DYCT_MAGIC: [u8; 4] = *b"DYCT";
pub const DYCT_VERSION: u8 = 1;

impl Tensor {
    /// Encode into the `DYCT` binary layout.
    pub fn to_dyct_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 8 * self.rank() + 8 * self.len());
        out.extend_from_slice(&DYCT_MAGIC);
        out.push(DYCT_VERSION);
        out.push(self.rank() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decode from the `DYCT` binary layout.
    pub fn from_dyct_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |detail: &str| Error::Codec {
            detail: detail.to_string(),
        };
        if bytes.len() < 6 {
            return Err(fail("shorter than the fixed header"));
        }
        if bytes[..4] != DYCT_MAGIC {
            return Err(fail("bad magic"));
        }
        if bytes[4] != DYCT_VERSION {
            return Err(Error::Codec {
                detail: format!("unsupported version {}", bytes[4]),
            });
        }
        let rank = bytes[5] as usize;
        let dims_end = 6 + 8 * rank;
        if bytes.len() < dims_end {
            return Err(fail("truncated dimension table"));
        }
        let mut shape = Vec::with_capacity(rank);
        for r in 0..rank {
            let mut raw = [0u8; 8];
            raw.copy_from_slice(&bytes[6 + 8 * r..6 + 8 * (r + 1)]);
            shape.push(u64::from_le_bytes(raw) as usize);
        }
        let n: usize = shape.iter().product();
        if bytes.len() != dims_end + 8 * n {
            return Err(Error::Codec {
                detail: format!(
                    "payload length {} does not match shape {shape:?}",
                    bytes.len() - dims_end
                ),
            });
        }
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let mut raw = [0u8; 8];
            raw.copy_from_slice(&bytes[dims_end + 8 * i..dims_end + 8 * (i + 1)]);
            data.push(f64::from_le_bytes(raw));
        }
        Tensor::from_vec(shape, data)
    }
}
