pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod preprocess;
pub mod rubric;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
