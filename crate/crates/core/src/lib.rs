//! Language-conditioned control of a marker in a planar workspace.
//!
//! A symbolic reasoner turns a natural-language instruction into one of four
//! spatial relations; a small neural delta controller turns that relation and
//! the current state into a bounded displacement. The crate ships the
//! environment, the controller and its training loop, interchangeable
//! reasoner backends, the closed-loop episode runner and the metrics used to
//! compare control paradigms.

pub mod controller;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod policy;
pub mod reasoner;
pub mod seed;

pub use error::{BackendError, Error, ParseFailure, Result};
pub use geometry::{Action, EnvState, TaskRelation, WorkspaceConfig};
