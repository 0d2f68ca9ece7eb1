pub mod error;
pub mod features;
pub mod metrics;
pub mod models;
pub mod numeric;
pub mod pipeline;
pub mod rng;
pub mod sim;
pub mod synth;
pub mod types;
pub mod units;

pub use error::{Error, Result};
