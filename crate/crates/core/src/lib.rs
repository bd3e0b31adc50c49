//! Socioeconomic inference from coupled communication and purchase logs.

pub mod catnet;
pub mod directory;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod matrix;
pub mod money;
pub mod nullmodel;
pub mod pipeline;
pub mod seeds;
pub mod socio;
pub mod spending;
pub mod synth;

pub use error::{Error, Result};
