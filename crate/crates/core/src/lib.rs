//! Finite-dimensional quantum and classical causal models on directed graphs, including
//! cyclic ones.
//!
//! Cyclic graphs are reduced to acyclic teleportation graphs in which every removed edge is
//! replaced by a post-selected teleportation gadget. The observed distribution is then given by
//! self-cycle composition of the vertex mechanisms. The crate also answers d-separation and
//! p-separation queries and tests conditional independence.

pub mod distribution;
pub mod engine;
pub mod error;
pub mod graph;
pub mod io;
pub mod model;
pub mod random;
pub mod separation;
pub mod tensor;
pub mod validation;

pub use distribution::{Distribution, Variable};
pub use engine::{
    acyclic_probability, cyclic_probability, direct_cyclic_probability, markov_check, self_cycle, CyclicResult,
    EngineOptions, TeleGraphChoice,
};
pub use error::{QcmError, Result};
pub use graph::{CausalGraph, EdgeKind, VertexKind};
pub use model::{CausalModel, FunctionalModel, ProtocolChoice, TeleProtocol};
pub use separation::{d_separated, p_separated, SeparationQuery, SplitVariant};
