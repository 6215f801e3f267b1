use serde::{Deserialize, Serialize};

use crate::error::{FadeError, Result};
use crate::nncore::AdamConfig;

pub const ALPHABET: usize = 256;

/// Every hyperparameter of the predictor and its optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Context length in symbols.
    pub time_steps: usize,
    /// Embedding width per symbol.
    pub embed_dim: usize,
    /// Width of the rolling cache; a multiple of `embed_dim`.
    pub cache_dim: usize,
    /// Reduced width inside the coarse refiner.
    pub hgr_dim: usize,
    /// Expansion width of the fine refiner.
    pub fnr_dim: usize,
    /// Number of parallel sub-streams (the training batch).
    pub batch: usize,
    pub conv_kernel: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Decoding workers. Never affects the produced bytes.
    pub workers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            time_steps: 16,
            embed_dim: 32,
            cache_dim: 4096,
            hgr_dim: 128,
            fnr_dim: 8192,
            batch: 512,
            conv_kernel: 3,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            workers: 8,
        }
    }
}

impl ModelConfig {
    /// Scaled-down architecture that codes about 30 KB/s on one core.
    pub fn desk() -> Self {
        ModelConfig {
            time_steps: 8,
            embed_dim: 8,
            cache_dim: 128,
            hgr_dim: 16,
            fnr_dim: 128,
            batch: 64,
            lr: 2e-3,
            ..Default::default()
        }
    }

    /// Smallest useful architecture, for throughput and protocol tests.
    pub fn tiny() -> Self {
        ModelConfig {
            time_steps: 4,
            embed_dim: 4,
            cache_dim: 32,
            hgr_dim: 4,
            fnr_dim: 32,
            batch: 256,
            ..Default::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            "desk" => Ok(Self::desk()),
            "tiny" => Ok(Self::tiny()),
            other => Err(FadeError::Usage(format!("unknown preset {other:?} (default, desk, tiny)"))),
        }
    }

    /// Flattened context width `time_steps · embed_dim`.
    pub fn hidden_dim(&self) -> usize {
        self.time_steps * self.embed_dim
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FadeError::Config(m));
        if self.time_steps == 0 || self.embed_dim == 0 || self.hgr_dim == 0 || self.fnr_dim == 0 {
            return bad("all dimensions must be positive".into());
        }
        if self.cache_dim < self.embed_dim || !self.cache_dim.is_multiple_of(self.embed_dim) {
            return bad(format!(
                "cache_dim {} must be a positive multiple of embed_dim {}",
                self.cache_dim, self.embed_dim
            ));
        }
        if self.conv_kernel.is_multiple_of(2) {
            return bad(format!("conv_kernel {} must be odd", self.conv_kernel));
        }
        if self.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        if self.workers == 0 || !self.batch.is_multiple_of(self.workers) {
            return bad(format!("workers {} must divide batch {}", self.workers, self.batch));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("Adam betas must lie in [0, 1) and eps must be positive".into());
        }
        Ok(())
    }
}

/// Architecture variants used by the ablation harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Both streams, learned router, gated coarse refiner and fine refiner.
    Full,
    /// Global rolling-cache stream only (router fixed at 1), no refiner.
    MlpOnly,
    /// Local convolution stream only (router fixed at 0), no refiner.
    CnnOnly,
    /// Both streams with the learned router, no refiner.
    Dmd,
    /// Dual stream plus ungated coarse refiner.
    DmdCciNoGate,
    /// Dual stream plus gated coarse refiner.
    DmdCciGate,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::MlpOnly,
        Variant::CnnOnly,
        Variant::Dmd,
        Variant::DmdCciNoGate,
        Variant::DmdCciGate,
        Variant::Full,
    ];

    pub fn code(self) -> u32 {
        match self {
            Variant::Full => 0,
            Variant::MlpOnly => 1,
            Variant::CnnOnly => 2,
            Variant::Dmd => 3,
            Variant::DmdCciNoGate => 4,
            Variant::DmdCciGate => 5,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.code() == code)
            .ok_or_else(|| FadeError::Format(format!("unknown model variant {code}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::MlpOnly => "mlp_only",
            Variant::CnnOnly => "cnn_only",
            Variant::Dmd => "dmd",
            Variant::DmdCciNoGate => "dmd+cci_nogate",
            Variant::DmdCciGate => "dmd+cci_gate",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| FadeError::Usage(format!("unknown variant {name:?}")))
    }

    pub(crate) fn router(self) -> Router {
        match self {
            Variant::MlpOnly => Router::Fixed(1.0),
            Variant::CnnOnly => Router::Fixed(0.0),
            _ => Router::Learned,
        }
    }

    pub(crate) fn coarse(self) -> Option<bool> {
        match self {
            Variant::DmdCciNoGate => Some(false),
            Variant::DmdCciGate | Variant::Full => Some(true),
            _ => None,
        }
    }

    pub(crate) fn fine(self) -> bool {
        self == Variant::Full
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Router {
    Learned,
    /// Fixed mixing weight on the global stream.
    Fixed(f64),
}
