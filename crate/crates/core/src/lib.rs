pub mod angle;
pub mod cli;
pub mod complexity;
pub mod ergodic_checks;
pub mod error;
pub mod fit;
pub mod liealg;
pub mod nilgroup;
pub mod subshift;
pub mod unipotent_volume;

pub use error::{Error, Result};
