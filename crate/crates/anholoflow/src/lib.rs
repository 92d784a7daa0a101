//! Nonholonomic tangent-bundle geometry, N-adapted Ricci flows and the
//! vector mKdV / sine-Gordon curve-flow hierarchy.

pub mod error;
pub mod fixtures;
pub mod flow_io;
pub mod constant_frame;
pub mod dgeometry;
pub mod nconnection;
pub mod ricci_flow;
pub mod soliton_hierarchy;
pub mod tensor_core;

pub use error::{Error, Result};
