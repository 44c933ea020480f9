//! A2TN binary tensor files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes          | content                                   |
//! |----------------|-------------------------------------------|
//! | 0..4           | magic `A2TN`                              |
//! | 4              | version, currently 1                      |
//! | 5              | precision: 4 (`f32`) or 8 (`f64`)         |
//! | 6              | `ndim`                                    |
//! | 7              | zero padding                              |
//! | 8..8+4·ndim    | extents as `u32`                          |
//! | then           | row-major IEEE-754 payload                |
//!
//! Decoding then re-encoding any valid file reproduces it byte for byte.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use a2net_core::{Matrix, Scalar, Shape4, Tensor4, TensorError};

pub const MAGIC: [u8; 4] = *b"A2TN";
pub const VERSION: u8 = 1;
const HEADER: usize = 8;

#[derive(Debug)]
pub enum A2tnError {
    TooShort {
        len: usize,
    },
    BadMagic([u8; 4]),
    UnsupportedVersion(u8),
    BadPrecision(u8),
    NonZeroPadding(u8),
    /// Payload length disagrees with the extents.
    Length {
        expected: usize,
        actual: usize,
    },
    /// More than 255 dims, an extent above `u32::MAX`, or a size overflow.
    Unrepresentable(&'static str),
    Shape(TensorError),
    Io {
        path: String,
        source: io::Error,
    },
}

impl fmt::Display for A2tnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TooShort { len } => write!(f, "{len} bytes is too short for an A2TN header"),
            Self::BadMagic(m) => write!(f, "bad magic {m:?}, expected `A2TN`"),
            Self::UnsupportedVersion(v) => write!(f, "unsupported A2TN version {v}"),
            Self::BadPrecision(p) => write!(f, "precision byte {p} is neither 4 nor 8"),
            Self::NonZeroPadding(p) => write!(f, "header padding byte is {p}, expected 0"),
            Self::Length { expected, actual } => {
                write!(
                    f,
                    "expected {expected} bytes after the header, found {actual}"
                )
            }
            Self::Unrepresentable(what) => write!(f, "cannot represent {what} in A2TN"),
            Self::Shape(e) => write!(f, "{e}"),
            Self::Io { path, source } => write!(f, "{path}: {source}"),
        }
    }
}

impl std::error::Error for A2tnError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Io { source, .. } => Some(source),
            Self::Shape(e) => Some(e),
            _ => None,
        }
    }
}

impl From<TensorError> for A2tnError {
    fn from(e: TensorError) -> Self {
        Self::Shape(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Single(Vec<f32>),
    Double(Vec<f64>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Self::Single(v) => v.len(),
            Self::Double(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn precision_byte(&self) -> u8 {
        match self {
            Self::Single(_) => 4,
            Self::Double(_) => 8,
        }
    }

    /// Stores `f32` data as `Single` and `f64` data as `Double`.
    pub fn from_scalars<T: Scalar>(values: &[T]) -> Self {
        if T::BYTES == 4 {
            Self::Single(values.iter().map(|v| v.as_f64() as f32).collect())
        } else {
            Self::Double(values.iter().map(|v| v.as_f64()).collect())
        }
    }

    /// Converts to `T`. Narrowing `Double` to `f32` rounds.
    pub fn to_scalars<T: Scalar>(&self) -> Vec<T> {
        match self {
            Self::Single(v) => v.iter().map(|&x| T::from_f64(x as f64)).collect(),
            Self::Double(v) => v.iter().map(|&x| T::from_f64(x)).collect(),
        }
    }

    /// Bit patterns, for exact comparisons that also cover NaN payloads.
    pub fn bits(&self) -> Vec<u64> {
        match self {
            Self::Single(v) => v.iter().map(|x| x.to_bits() as u64).collect(),
            Self::Double(v) => v.iter().map(|x| x.to_bits()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<usize>,
    pub payload: Payload,
}

impl TensorFile {
    pub fn new(dims: Vec<usize>, payload: Payload) -> Result<Self, A2tnError> {
        let expected = numel(&dims)?;
        if expected != payload.len() {
            return Err(A2tnError::Length {
                expected,
                actual: payload.len(),
            });
        }
        Ok(Self { dims, payload })
    }

    pub fn from_matrix<T: Scalar>(m: &Matrix<T>) -> Self {
        Self {
            dims: vec![m.rows(), m.cols()],
            payload: Payload::from_scalars(m.as_slice()),
        }
    }

    pub fn from_tensor<T: Scalar>(t: &Tensor4<T>) -> Self {
        let s = t.shape();
        Self {
            dims: vec![s.c, s.d, s.h, s.w],
            payload: Payload::from_scalars(t.as_slice()),
        }
    }

    pub fn from_vector<T: Scalar>(v: &[T]) -> Self {
        Self {
            dims: vec![v.len()],
            payload: Payload::from_scalars(v),
        }
    }

    /// `[c, d, h, w]` when the file is 4-D.
    pub fn shape4(&self) -> Option<Shape4> {
        match self.dims[..] {
            [c, d, h, w] => Shape4::new(c, d, h, w).ok(),
            _ => None,
        }
    }

    /// 4-D files become `c × dhw`, 2-D files `rows × cols`, 1-D files a
    /// single row.
    pub fn to_matrix<T: Scalar>(&self) -> Result<Matrix<T>, A2tnError> {
        let data = self.payload.to_scalars();
        let (rows, cols) = match self.dims[..] {
            [n] => (1, n),
            [r, c] => (r, c),
            [c, d, h, w] => (c, d * h * w),
            _ => {
                return Err(A2tnError::Unrepresentable(
                    "a tensor of this rank as a matrix",
                ))
            }
        };
        Ok(Matrix::new(rows, cols, data)?)
    }

    pub fn to_vector<T: Scalar>(&self) -> Vec<T> {
        self.payload.to_scalars()
    }

    pub fn encode(&self) -> Result<Vec<u8>, A2tnError> {
        let ndim = u8::try_from(self.dims.len())
            .map_err(|_| A2tnError::Unrepresentable("more than 255 dimensions"))?;
        let width = self.payload.precision_byte() as usize;
        let mut out = Vec::with_capacity(HEADER + 4 * self.dims.len() + width * self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&[VERSION, self.payload.precision_byte(), ndim, 0]);
        for &d in &self.dims {
            let d = u32::try_from(d)
                .map_err(|_| A2tnError::Unrepresentable("an extent above u32::MAX"))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.payload {
            Payload::Single(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::Double(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, A2tnError> {
        if bytes.len() < HEADER {
            return Err(A2tnError::TooShort { len: bytes.len() });
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
        if magic != MAGIC {
            return Err(A2tnError::BadMagic(magic));
        }
        if bytes[4] != VERSION {
            return Err(A2tnError::UnsupportedVersion(bytes[4]));
        }
        let precision = bytes[5];
        if precision != 4 && precision != 8 {
            return Err(A2tnError::BadPrecision(precision));
        }
        if bytes[7] != 0 {
            return Err(A2tnError::NonZeroPadding(bytes[7]));
        }
        let ndim = bytes[6] as usize;
        let dims_end = HEADER + 4 * ndim;
        if bytes.len() < dims_end {
            return Err(A2tnError::TooShort { len: bytes.len() });
        }
        let dims: Vec<usize> = bytes[HEADER..dims_end]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("chunk of 4")) as usize)
            .collect();
        let expected = numel(&dims)?
            .checked_mul(precision as usize)
            .ok_or(A2tnError::Unrepresentable("a payload this large"))?;
        let body = &bytes[dims_end..];
        if body.len() != expected {
            return Err(A2tnError::Length {
                expected,
                actual: body.len(),
            });
        }
        let payload = if precision == 4 {
            Payload::Single(
                body.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                    .collect(),
            )
        } else {
            Payload::Double(
                body.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                    .collect(),
            )
        };
        Ok(Self { dims, payload })
    }

    pub fn read(path: &Path) -> Result<Self, A2tnError> {
        let bytes = fs::read(path).map_err(|source| io_error(path, source))?;
        Self::decode(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<(), A2tnError> {
        fs::write(path, self.encode()?).map_err(|source| io_error(path, source))
    }
}

fn io_error(path: &Path, source: io::Error) -> A2tnError {
    A2tnError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn numel(dims: &[usize]) -> Result<usize, A2tnError> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(A2tnError::Unrepresentable("a payload this large"))
}
