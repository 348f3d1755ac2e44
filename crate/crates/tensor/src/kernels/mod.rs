//! Slice-level forward and backward kernels. The tape in [`crate::graph`]
//! owns shapes and bookkeeping; these functions only move numbers.

pub mod conv;
pub mod loss;
pub mod norm;
pub mod pool;
pub mod resize;
