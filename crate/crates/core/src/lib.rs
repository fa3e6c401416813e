pub mod diagnostics;
pub mod error;
pub mod expcli;
pub mod linalg;
pub mod model;
pub mod optimizer;
pub mod rng;
pub mod sensing;

pub use error::{Error, Result};
