pub mod bench;
pub mod error;
pub mod filters;
pub mod graph;
pub mod latent;
pub mod learners;
pub mod retrieval;
pub mod rng;
pub mod spectral;
pub mod structure;

pub use error::{Error, Result};
