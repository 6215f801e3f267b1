//! Online-learned lossless compression of byte streams.
//!
//! A neural predictor is trained from scratch while the data is coded; the
//! decoder repeats the exact same training, so no model is stored.

pub mod error;
pub mod nncore;

pub use error::{FadeError, Result};
pub mod predictor;
pub mod coder;
pub mod cspp;
pub mod container;
pub mod bench;
