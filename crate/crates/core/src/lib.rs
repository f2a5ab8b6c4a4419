pub mod cli;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod presets;
pub mod simulator;

pub use error::{Error, Result};
