pub mod cli;
pub mod data;
pub mod degradation;
pub mod error;
pub mod eval;
pub mod losses;
pub mod networks;
pub mod nn;
pub mod plot;
pub mod trainer;

pub use error::{Error, Result};
