#![no_std]
#![forbid(unsafe_code)]

//! Double-attention (A²) block kernels and accounting.
//!
//! The crate is split along the lines of what the block needs:
//!
//! * [`tensor`]: a small dense engine (matmul, axis softmax, pointwise conv,
//!   spatial flatten, seeded initialization).
//! * [`attention`]: gather, distribute, the fused block under left/right
//!   association, and the explicit relation-matrix view.
//! * [`grad`]: analytic adjoints for every primitive and the fused block,
//!   plus a central finite-difference oracle.
//! * [`cost`]: multiply-add / parameter / peak-memory accounting and the
//!   association chooser.
//! * [`backbone`]: symbolic ResNet descriptors, block insertion, network
//!   counting, and an executable pointwise-only "tiny" network.
//!
//! Everything here is pure computation over `alloc` types. File formats,
//! reports and the command-line tool live in the `a2net` crate.

extern crate alloc;

pub mod attention;
pub mod backbone;
pub mod cost;
pub mod grad;
pub mod scalar;
pub mod tensor;

pub use attention::{
    Association, AssociationOrder, BlockCache, BlockError, BlockForward, DoubleAttentionParams,
    GatheredGlobals,
};
pub use cost::{BlockCost, CostConvention};
pub use scalar::Scalar;
pub use tensor::{Init, Matrix, Shape4, Tensor4, TensorError};
