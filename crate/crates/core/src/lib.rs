pub mod adaptive;
pub mod align;
pub mod audio;
pub mod error;
pub mod experiment;
pub mod listener;
pub mod ltc;
pub mod mel;
pub mod mst;
pub mod selection;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
