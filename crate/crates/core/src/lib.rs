//! Constrained total-cost continuous-time Markov decision processes on finite
//! state and action spaces.
//!
//! The pipeline classifies states, reduces the model to its embedded jump
//! chain, solves the occupation-measure LP there and lifts the resulting
//! policy back to continuous time. A Monte Carlo simulator and a set of
//! identity checks cross-validate the pieces.

pub mod catalog;
pub mod classify;
pub mod corpus;
pub mod format;
pub mod graph;
pub mod lift;
pub mod model;
pub mod pipeline;
pub mod plan;
pub mod reduce;
pub mod sim;
pub mod simplex;
pub mod verify;

pub use classify::Classification;
pub use model::{CtmdpModel, MarkovTimePolicy, ModelBuilder, StationaryPolicy};
pub use reduce::DtmdpModel;
