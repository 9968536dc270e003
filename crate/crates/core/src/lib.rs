pub mod cli;
pub mod error;
pub mod fit;
pub mod formulation;
pub mod gmm;
pub mod grid;
pub mod miqp;
pub mod validate;

pub use error::{Error, Result};
