pub mod cli;
pub mod construction;
pub mod decoder;
pub mod error;
pub mod gkp_math;
pub mod lattice;
pub mod montecarlo;
pub mod noise;

pub use error::{Error, Result};
