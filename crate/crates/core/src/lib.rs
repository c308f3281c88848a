//! Causal knowledge transfer between tabular grid-world agents.
//!
//! Agents pre-trained on an obstacle-free grid discover recovery macros
//! after colliding with barriers; an offline estimator turns those records
//! into a context-indexed lookup model that other agents apply zero-shot.

pub mod discovery;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod forest;
pub mod grid;
pub mod metrics;
pub mod qlearning;
pub mod scenario;
pub mod seed;
pub mod transfer;

pub use error::{Error, Result};
pub use grid::{Action, Cell, GridSpec};
