//! Cross-domain adaptation workbench for speaker-verification embeddings.
//!
//! The crate covers the whole loop at desk scale: a synthetic multi-domain
//! feature corpus ([`corpus`]), a hand-differentiated embedding network
//! ([`model`]), the adaptation objectives ([`losses`]), the three training
//! stages ([`pipeline`]) and trial scoring with EER reporting ([`eval`]).

pub mod corpus;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod numkit;
mod par;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
