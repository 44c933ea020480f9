//! Minimal dense tensors: row-major matrices and `(c, d, h, w)` feature maps.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

mod ops;
mod random;

pub use ops::{add, conv_pointwise, matmul, softmax_cols, softmax_rows};
pub use random::{Init, SeededStream};

#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Operand shapes are incompatible for `op`.
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    /// The buffer length does not match the declared shape.
    ElementCount { expected: usize, actual: usize },
    /// A zero extent was supplied.
    ZeroExtent,
    /// An input or output of `op` contains NaN or infinity.
    NonFinite { op: &'static str },
    /// A distribution or scale parameter is out of range.
    InvalidParameter { name: &'static str },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ShapeMismatch { op, lhs, rhs } => write!(
                f,
                "{op}: shape mismatch between {}x{} and {}x{}",
                lhs.0, lhs.1, rhs.0, rhs.1
            ),
            Self::ElementCount { expected, actual } => {
                write!(
                    f,
                    "element count mismatch: expected {expected}, got {actual}"
                )
            }
            Self::ZeroExtent => write!(f, "tensor extents must all be >= 1"),
            Self::NonFinite { op } => write!(f, "{op}: non-finite value encountered"),
            Self::InvalidParameter { name } => write!(f, "invalid parameter `{name}`"),
        }
    }
}

impl core::error::Error for TensorError {}

/// Extents of a spatio-temporal feature map: channels, depth (time), height,
/// width. Serializes as `[c, d, h, w]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; 4]", into = "[usize; 4]")]
pub struct Shape4 {
    pub c: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub fn new(c: usize, d: usize, h: usize, w: usize) -> Result<Self, TensorError> {
        if c == 0 || d == 0 || h == 0 || w == 0 {
            return Err(TensorError::ZeroExtent);
        }
        Ok(Self { c, d, h, w })
    }

    /// A 2D feature map (`d = 1`).
    pub fn image(c: usize, h: usize, w: usize) -> Result<Self, TensorError> {
        Self::new(c, 1, h, w)
    }

    /// Number of spatio-temporal locations, `L = d·h·w`.
    #[inline]
    pub fn locations(&self) -> usize {
        self.d * self.h * self.w
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.c * self.locations()
    }

    /// Same extent with a different channel count.
    pub fn with_channels(&self, c: usize) -> Result<Self, TensorError> {
        Self::new(c, self.d, self.h, self.w)
    }
}

impl TryFrom<[usize; 4]> for Shape4 {
    type Error = TensorError;

    fn try_from(v: [usize; 4]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Shape4> for [usize; 4] {
    fn from(s: Shape4) -> Self {
        [s.c, s.d, s.h, s.w]
    }
}

impl fmt::Display for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.c, self.d, self.h, self.w)
    }
}

/// Dense row-major matrix. Feature maps are viewed as `c × L` matrices with
/// locations along the contiguous inner axis.
#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Matrix")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("data", &self.data)
            .finish()
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, TensorError> {
        if rows == 0 || cols == 0 {
            return Err(TensorError::ZeroExtent);
        }
        if data.len() != rows * cols {
            return Err(TensorError::ElementCount {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self, TensorError> {
        let r = rows.len();
        let c = rows.first().map(|row| row.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            let row = row.as_ref();
            if row.len() != c {
                return Err(TensorError::ElementCount {
                    expected: c,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(r, c, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: alloc::vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Self) -> Result<Self, TensorError> {
        self.zip_with("hadamard", other, |a, b| a * b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, TensorError> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    pub(crate) fn zip_with(
        &self,
        op: &'static str,
        other: &Self,
        f: impl Fn(T, T) -> T,
    ) -> Result<Self, TensorError> {
        if self.dims() != other.dims() {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.dims(),
                rhs: other.dims(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Largest elementwise absolute difference, or `None` on a shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> Option<T> {
        if self.dims() != other.dims() {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| (a - b).abs())
                .fold(T::zero(), T::max),
        )
    }

    /// Reorders columns so that output column `j` is input column `perm[j]`.
    pub fn permute_cols(&self, perm: &[usize]) -> Result<Self, TensorError> {
        if perm.len() != self.cols {
            return Err(TensorError::ElementCount {
                expected: self.cols,
                actual: perm.len(),
            });
        }
        Ok(Self::from_fn(self.rows, self.cols, |r, c| {
            self.get(r, perm[c])
        }))
    }

    /// Element type conversion through `f64`.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}

/// A `(c, d, h, w)` feature map, stored row-major with `w` innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    shape: Shape4,
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn new(shape: Shape4, data: Vec<T>) -> Result<Self, TensorError> {
        if data.len() != shape.numel() {
            return Err(TensorError::ElementCount {
                expected: shape.numel(),
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape4) -> Self {
        Self {
            shape,
            data: alloc::vec![T::zero(); shape.numel()],
        }
    }

    #[inline]
    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, c: usize, d: usize, h: usize, w: usize) -> T {
        let s = self.shape;
        self.data[((c * s.d + d) * s.h + h) * s.w + w]
    }

    /// `c × L` view. Location `i` enumerates `(d, h, w)` in row-major order,
    /// i.e. `i = (d·H + h)·W + w`.
    pub fn flatten_spatial(self) -> Matrix<T> {
        Matrix {
            rows: self.shape.c,
            cols: self.shape.locations(),
            data: self.data,
        }
    }

    /// Inverse of [`Tensor4::flatten_spatial`].
    pub fn unflatten(m: Matrix<T>, shape: Shape4) -> Result<Self, TensorError> {
        if m.rows != shape.c || m.cols != shape.locations() {
            return Err(TensorError::ElementCount {
                expected: shape.numel(),
                actual: m.rows * m.cols,
            });
        }
        Ok(Self {
            shape,
            data: m.data,
        })
    }
}
