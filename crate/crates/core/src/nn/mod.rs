//! Reverse-mode differentiation over a flat tape.
//!
//! A [`Graph`] records every operation in execution order together with whatever
//! it needs for its backward rule; [`Graph::backward`] walks the records in exact
//! reverse order. Parameters live in a [`ParamStore`] and are bound into a graph
//! either as trainable leaves or as frozen constants.

mod adam;
pub mod checkpoint;
mod gemm;
pub mod gradcheck;
mod graph;
mod params;
pub mod spectral;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use gradcheck::{check_gradients, GradCheck};
pub use graph::{Graph, Var};
pub use params::{glorot_uniform, ParamStore};
pub use spectral::FrameAnalysis;
pub use tensor::Tensor;
