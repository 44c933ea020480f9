//! Symbolic cost accounting.
//!
//! One FLOP is one multiply-add. Softmax, residual additions, pooling and
//! reshapes are not counted. Peak intermediate memory of an attention block
//! is the size of its first matrix product: `m·n` elements for the left
//! association, `L²` for the right one.

use core::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::attention::{Association, AssociationOrder};
use crate::tensor::Shape4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlopUnit {
    #[default]
    MultiplyAdd,
}

/// Counting rules, fixed for a whole counting run and echoed in every report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConvention {
    pub flop_unit: FlopUnit,
    /// Count one bias per output channel of every conv, fc and block map.
    pub include_bias: bool,
    /// Count batch-norm scale and shift (two per output channel) after every
    /// backbone conv. Never applied inside attention blocks.
    pub include_bn: bool,
    /// Count the classifier.
    pub include_fc: bool,
    pub bytes_per_element: u64,
}

impl Default for CostConvention {
    fn default() -> Self {
        Self {
            flop_unit: FlopUnit::MultiplyAdd,
            include_bias: true,
            include_bn: true,
            include_fc: true,
            bytes_per_element: 4,
        }
    }
}

impl CostConvention {
    /// Weights only: no biases, no batch-norm.
    pub fn weights_only() -> Self {
        Self {
            include_bias: false,
            include_bn: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BlockCost {
    pub flops: u64,
    pub params: u64,
    /// Largest single materialized intermediate.
    pub peak_intermediate_bytes: u64,
    /// Every tensor the layer materializes, output included.
    pub activation_bytes: u64,
}

impl Add for BlockCost {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            flops: self.flops + rhs.flops,
            params: self.params + rhs.params,
            peak_intermediate_bytes: self
                .peak_intermediate_bytes
                .max(rhs.peak_intermediate_bytes),
            activation_bytes: self.activation_bytes + rhs.activation_bytes,
        }
    }
}

impl AddAssign for BlockCost {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

fn u(x: usize) -> u64 {
    x as u64
}

/// Dense 3D convolution. Only the location count of `output` is used; the
/// channel count comes from `c_out`.
pub fn conv_cost(
    c_in: usize,
    c_out: usize,
    kernel: [usize; 3],
    output: Shape4,
    conv: &CostConvention,
) -> BlockCost {
    let taps = u(kernel[0] * kernel[1] * kernel[2]);
    let weights = u(c_in) * u(c_out) * taps;
    let mut params = weights;
    if conv.include_bias {
        params += u(c_out);
    }
    if conv.include_bn {
        params += 2 * u(c_out);
    }
    let out_elems = u(c_out) * u(output.locations());
    BlockCost {
        flops: weights * u(output.locations()),
        params,
        peak_intermediate_bytes: 0,
        activation_bytes: out_elems * conv.bytes_per_element,
    }
}

/// Fully connected layer on a pooled vector. Zero when fc is excluded.
pub fn fc_cost(c_in: usize, c_out: usize, conv: &CostConvention) -> BlockCost {
    if !conv.include_fc {
        return BlockCost::default();
    }
    let weights = u(c_in) * u(c_out);
    BlockCost {
        flops: weights,
        params: weights + if conv.include_bias { u(c_out) } else { 0 },
        peak_intermediate_bytes: 0,
        activation_bytes: u(c_out) * conv.bytes_per_element,
    }
}

/// Multiply-adds of the four pointwise projections of a block with input
/// channels `c`, gathered width `m` and bag size `n` (`θ, ρ` produce `n`).
pub fn projection_flops(c: usize, m: usize, n: usize, locations: usize) -> u64 {
    (u(c) * u(m) + 2 * u(c) * u(n) + u(m) * u(c)) * u(locations)
}

/// Multiply-adds of the two chained products of `A·Bᵀ·V`.
pub fn a2_matmul_flops(m: usize, n: usize, locations: usize, order: Association) -> u64 {
    let (m, n, l) = (u(m), u(n), u(locations));
    match order {
        Association::Left => m * n * l + m * n * l,
        Association::Right => n * l * l + m * l * l,
    }
}

fn block_params(c: usize, m: usize, n: usize, conv: &CostConvention) -> u64 {
    let weights = u(c) * u(m) + 2 * u(c) * u(n) + u(m) * u(c);
    let bias = if conv.include_bias {
        u(m) + 2 * u(n) + u(c)
    } else {
        0
    };
    weights + bias
}

/// Double-attention block on an input map of `shape` (channels `shape.c`).
/// `Auto` is resolved with [`choose_association`].
pub fn a2_block_cost(
    shape: Shape4,
    m: usize,
    n: usize,
    order: AssociationOrder,
    conv: &CostConvention,
) -> BlockCost {
    let (c, l) = (shape.c, shape.locations());
    let order = order.resolve(m, n, l);
    let first_elems = match order {
        Association::Left => u(m) * u(n),
        Association::Right => u(l) * u(l),
    };
    // A, B, V, Z and the projected output, plus the first product.
    let maps = (u(m) + 2 * u(n) + u(m) + u(c)) * u(l);
    BlockCost {
        flops: projection_flops(c, m, n, l) + a2_matmul_flops(m, n, l, order),
        params: block_params(c, m, n, conv),
        peak_intermediate_bytes: first_elems * conv.bytes_per_element,
        activation_bytes: (maps + first_elems) * conv.bytes_per_element,
    }
}

/// Non-local block with embedding width `n`: same projections as an A²
/// block with `m = n`, plus an explicit `L × L` relation matrix.
pub fn nl_block_cost(shape: Shape4, n: usize, conv: &CostConvention) -> BlockCost {
    let (c, l) = (shape.c, shape.locations());
    let relation = u(l) * u(l);
    let maps = (4 * u(n) + u(c)) * u(l);
    BlockCost {
        flops: projection_flops(c, n, n, l) + 2 * u(n) * relation,
        params: block_params(c, n, n, conv),
        peak_intermediate_bytes: relation * conv.bytes_per_element,
        activation_bytes: (maps + relation) * conv.bytes_per_element,
    }
}

/// `Left` when `n·m ≤ L²` (ties go left), `Right` otherwise.
///
/// This is exactly the peak-memory ordering for every `m, n`. For `m = n` it
/// is also exactly the FLOPs ordering. When `m ≠ n` the FLOPs crossover sits
/// at `L = 2mn/(m+n)` rather than `√(mn)`.
pub fn choose_association(m: usize, n: usize, locations: usize) -> Association {
    let bag = m as u128 * n as u128;
    let rel = locations as u128 * locations as u128;
    if bag <= rel {
        Association::Left
    } else {
        Association::Right
    }
}
