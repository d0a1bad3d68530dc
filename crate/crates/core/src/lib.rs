//! Layerwise learning of tree-structured Boolean circuits with shallow
//! neural gates, plus the supporting distribution, certification and
//! analysis tooling.

pub mod analysis;
pub mod baseline;
pub mod circuit;
pub mod dist;
pub mod error;
pub mod net;
pub mod train;

pub use error::{Error, Result};
