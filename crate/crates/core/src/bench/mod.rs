//! Measurement tools: entropy and dependence diagnostics, synthetic corpora,
//! parameter sweeps and the architecture ablation harness.

pub mod corpus;
mod harness;
mod stats;

pub use harness::{
    ablation_harness, render_table, run_sweep, write_jsonl, AblationResult, MetricsRecord, SweepParam, SweepRow,
    SweepSpec,
};
pub use stats::{
    local_entropy_profile, mutual_information, mutual_information_decay, order0_entropy, self_similarity_matrix,
    MiPoint,
};

#[cfg(test)]
mod tests;
