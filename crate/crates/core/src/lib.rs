//! Structure-factor entanglement witnesses for spin chains, the Bragg-scattering
//! measurement model that accesses them, and the linear inversion that recovers
//! spin correlations from scattered-light intensities.

pub mod error;
pub mod noise;
pub mod pipeline;
pub mod reconstruction;
pub mod records;
pub mod scattering;
pub mod spin;
pub mod state_io;
pub mod structure_factor;

pub use error::{Error, Result};
