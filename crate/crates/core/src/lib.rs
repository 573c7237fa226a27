pub mod config;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod flow;
pub mod image;
pub mod model;
pub mod numerics;
pub mod params;
pub mod pipeline;
pub mod preprocess;
pub mod temporal;
pub mod synth;
pub mod training;
pub mod weights_io;

pub use error::{Error, Result};
