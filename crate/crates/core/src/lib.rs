pub mod data;
pub mod error;
pub mod fep;
pub mod gbn;
pub mod matcher;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
