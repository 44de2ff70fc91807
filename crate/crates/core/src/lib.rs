pub mod acceptance;
pub mod config;
pub mod error;
pub mod genealogy;
pub mod io;
pub mod kernels;
pub mod levy;
pub mod limit;
pub mod numerics;
pub mod path;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
