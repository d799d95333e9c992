//! Batch dataflow engine for mesh-based field data.
//!
//! A pipeline document declares a DAG of filters (interpolation, conservative
//! source integration, RBF differentiation, aeroacoustic source terms, time
//! derivative) that is executed step by step between a mesh input and one or
//! more mesh outputs.

pub mod cli;
pub mod error;
pub mod filters;
pub mod geom;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod pipeline;
pub mod spatial;

pub use error::{Error, Result};
