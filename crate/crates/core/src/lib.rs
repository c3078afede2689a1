pub mod cli;
pub mod codec;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod lora;
pub mod metrics;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
