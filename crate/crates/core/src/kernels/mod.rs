//! Numeric kernels on flat row-major slices, used by the tape for forward and
//! backward passes.

pub mod conv;
pub mod loss;
pub mod matmul;
pub mod norm;
pub mod scan;
pub mod segment;
