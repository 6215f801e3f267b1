//! The online probability model: dual-stream decoupler, hierarchical gated
//! refiner, output head and the per-step predict / train cycle.

mod config;
mod model;

pub use config::{ModelConfig, Router, Variant, ALPHABET};
pub use model::{ContextWindow, Model, ParamIds, Pass, ProbBatch, RouterStats, Stage, Weight};

use crate::error::{FadeError, Result};

/// Average negative log-likelihood of a loss log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NllReport {
    pub nats: f64,
    pub bits_per_byte: f64,
}

pub fn nll_report(losses: &[f64]) -> Result<NllReport> {
    if losses.is_empty() {
        return Err(FadeError::Usage("NLL of an empty loss log".into()));
    }
    let nats = losses.iter().sum::<f64>() / losses.len() as f64;
    Ok(NllReport {
        nats,
        bits_per_byte: nats / std::f64::consts::LN_2,
    })
}

#[cfg(test)]
mod tests;
