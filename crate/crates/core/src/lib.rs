//! Few-shot adaptation of GAN vocoders with a cross-domain distance
//! consistency term, on a small self-contained tensor engine.

pub mod audio;
pub mod autodiff;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod eval;
pub mod losses;
pub mod models;
pub mod pipeline;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
