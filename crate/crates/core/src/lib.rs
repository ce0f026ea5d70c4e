//! Desk-scale laboratory for latent concept misalignment in
//! concept-conditioned diffusion sampling.
//!
//! A [`world::ConceptWorld`] stands in for the training distribution; the
//! [`diffusion`] module samples from it with exact scores; [`scoring`] and
//! [`moce`] implement the two-phase remedy and its switch search; [`miner`]
//! runs the dataset-mining loop; [`harness`] produces benchmark reports.

pub mod config;
pub mod diffusion;
pub mod error;
pub mod harness;
pub mod llm;
pub mod manifest;
pub mod miner;
pub mod mixture;
pub mod moce;
pub mod presets;
pub mod rng;
pub mod scoring;
pub mod store;
pub mod world;

pub use error::{Error, Result};
