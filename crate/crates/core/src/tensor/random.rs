//! Seeded initialization.
//!
//! The generator is ChaCha8 (`rand_chacha::ChaCha8Rng`), keyed with
//! `SeedableRng::seed_from_u64(seed)`. Samples are derived from its `u64`
//! stream without any other library in between:
//!
//! * uniform in `[0, 1)`: `u = (next_u64 >> 11) · 2⁻⁵³`
//! * `uniform(-s, s)`: `-s + 2s·u`
//! * `normal(0, σ)`: Box–Muller cosine branch on two consecutive uniforms,
//!   `σ · √(-2 ln(1 - u₁)) · cos(2π u₂)`
//!
//! Draws are made in `f64` and then rounded to the element type, so an `f32`
//! and an `f64` tensor with the same seed hold the same values up to rounding.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::{Matrix, Shape4, Tensor4, TensorError};
use crate::scalar::Scalar;

/// Reproducible stream of `f64` samples.
pub struct SeededStream {
    rng: ChaCha8Rng,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn next_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_unit();
        let u2 = self.next_unit();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn next_range(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        lo + (self.next_unit() * (hi - lo + 1) as f64) as usize
    }

    /// Fisher–Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.next_range(0, i);
            p.swap(i, j);
        }
        p
    }
}

/// Distribution used to fill a tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Uniform { scale: f64 },
    Normal { std: f64 },
}

impl Init {
    fn validate(&self) -> Result<(), TensorError> {
        match *self {
            Init::Uniform { scale } if !(scale > 0.0 && scale.is_finite()) => {
                Err(TensorError::InvalidParameter { name: "scale" })
            }
            Init::Normal { std } if !(std > 0.0 && std.is_finite()) => {
                Err(TensorError::InvalidParameter { name: "std" })
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, stream: &mut SeededStream) -> f64 {
        match *self {
            Init::Uniform { scale } => -scale + 2.0 * scale * stream.next_unit(),
            Init::Normal { std } => std * stream.next_normal(),
        }
    }

    /// Draws a `rows × cols` matrix from an existing stream.
    pub fn matrix_from<T: Scalar>(
        &self,
        stream: &mut SeededStream,
        rows: usize,
        cols: usize,
    ) -> Result<Matrix<T>, TensorError> {
        self.validate()?;
        let data = (0..rows * cols)
            .map(|_| T::from_f64(self.sample(stream)))
            .collect();
        Matrix::new(rows, cols, data)
    }

    pub fn values<T: Scalar>(&self, len: usize, seed: u64) -> Result<Vec<T>, TensorError> {
        self.validate()?;
        let mut stream = SeededStream::new(seed);
        Ok((0..len)
            .map(|_| T::from_f64(self.sample(&mut stream)))
            .collect())
    }

    pub fn matrix<T: Scalar>(
        &self,
        rows: usize,
        cols: usize,
        seed: u64,
    ) -> Result<Matrix<T>, TensorError> {
        Matrix::new(rows, cols, self.values(rows * cols, seed)?)
    }

    pub fn tensor<T: Scalar>(&self, shape: Shape4, seed: u64) -> Result<Tensor4<T>, TensorError> {
        Tensor4::new(shape, self.values(shape.numel(), seed)?)
    }
}
