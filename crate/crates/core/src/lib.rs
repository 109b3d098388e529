pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod fracfourier;
pub mod model;
pub mod train;

pub use error::{Result, SffpError};
