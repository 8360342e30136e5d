//! Congested clique simulation with routing primitives, a sketch-based MST
//! estimator for Hamming point sets, and output-sensitive Boolean matrix
//! multiplication built on top of it.

#![no_std]

extern crate alloc;

pub mod bits;
pub mod clusmat;
pub mod codec;
pub mod error;
pub mod gen;
pub mod hmst;
pub mod routing;
pub mod sim;
pub mod tree;

pub use bits::{BitVector, BooleanMatrix, IntMatrix};
pub use error::{Error, Result};
pub use sim::{Clique, CliqueConfig, Message, NodeCtx, NodeId, Payload, RoundLedger, RoutingMode, Status};
pub use tree::{euler_traversal, local_mst, Traversal, Tree, WeightedEdge};
