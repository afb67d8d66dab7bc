//! Exact simulation and verification tools for the multi-colony Moran model
//! with seed-banks and its dual system of interacting coalescing random walks.

pub mod analysis;
pub mod dual;
pub mod duality;
pub mod error;
pub mod forward;
pub mod model;
pub mod oracle;
pub mod replicate;
pub mod rng;
pub mod stats;
pub mod suite;

pub use error::{Error, Result};
