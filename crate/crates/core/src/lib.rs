pub mod error;
pub mod eventlog;

pub use error::{Error, Result};
pub mod actitrac;
pub mod classifier;
pub mod cli;
pub mod overdx;
pub mod procmodel;
pub mod repeats;
pub mod stats;
pub mod synth;
