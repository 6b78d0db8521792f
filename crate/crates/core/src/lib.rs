pub mod bohm;
pub mod cli;
pub mod error;
pub mod hilbert;
pub mod measurement;
pub mod sqm;

pub use error::{Error, Result};
