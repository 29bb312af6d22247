pub mod error;
pub mod filtering;
pub mod geometry;
pub mod harness;
pub mod losses;
pub mod phantoms;
pub mod pipeline;
pub mod volume;

pub use error::{Error, Result};
