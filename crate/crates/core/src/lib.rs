pub mod adapt;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod sac;
pub mod verify;

pub use error::{Error, Result};
