pub mod augment;
pub mod data;
pub mod engine;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod models;
pub mod rng;
pub mod unlearn;

pub use error::{Error, Result};
