//! Convolutional layers as tensor-network hypergraphs.
//!
//! A layer is a hypergraph over index labels: the input `X{h,w,c}`, fixed
//! binary coupling tensors for each spatial axis, and free parameter tensors.
//! Contracting it yields the convolution. The crate covers contraction
//! planning and execution, the redundancy rewrites, exhaustive enumeration of
//! nonredundant graphs, a small trainer, and an NSGA-II search.

pub mod enumeration;
pub mod error;
pub mod graph;
pub mod layer;
pub mod reduction;
pub mod scalar;
pub mod search;
pub mod tensor;
pub mod train;

pub use error::{EinconvError, Result};
pub use scalar::Scalar;

pub type Tensor = tensor::DenseTensor<f64>;
pub type Tensor32 = tensor::DenseTensor<f32>;
