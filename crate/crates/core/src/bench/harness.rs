use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::container::{compress_bytes, compression_ratio, decompress_bytes, weighted_score, ScoreBounds};
use crate::cspp::{throughput_report, CompressOptions, DecompressOptions, StepRecord};
use crate::error::{FadeError, Result};
use crate::predictor::{ModelConfig, Variant};

/// One line of a metrics file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub phase: &'static str,
    pub loss_nats: f64,
    pub bits_per_byte: f64,
    pub elapsed_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_max: Option<f64>,
}

impl MetricsRecord {
    pub fn from_step(r: &StepRecord, phase: &'static str) -> Self {
        MetricsRecord {
            step: r.step,
            phase,
            loss_nats: r.loss,
            bits_per_byte: r.loss / std::f64::consts::LN_2,
            elapsed_s: r.elapsed.as_secs_f64(),
            alpha_mean: r.router.map(|a| a.mean),
            alpha_min: r.router.map(|a| a.min),
            alpha_max: r.router.map(|a| a.max),
        }
    }
}

/// Writes records as line-delimited JSON.
pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, records: &[T]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Workers,
    Batch,
    CacheDim,
    FnrDim,
}

impl SweepParam {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "workers" => Ok(SweepParam::Workers),
            "batch" => Ok(SweepParam::Batch),
            "cache_dim" => Ok(SweepParam::CacheDim),
            "fnr_dim" => Ok(SweepParam::FnrDim),
            other => Err(FadeError::Usage(format!("cannot sweep {other:?}"))),
        }
    }

    fn apply(self, cfg: &mut ModelConfig, value: usize) {
        match self {
            SweepParam::Workers => cfg.workers = value,
            SweepParam::Batch => cfg.batch = value,
            SweepParam::CacheDim => cfg.cache_dim = value,
            SweepParam::FnrDim => cfg.fnr_dim = value,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<usize>,
    pub base: ModelConfig,
    pub variant: Variant,
    pub pipeline: bool,
    /// Runs per value; the fastest timing is kept.
    pub repetitions: usize,
    /// Weight of the ratio in the score.
    pub omega: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: usize,
    pub cr: f64,
    pub cmp_tp: f64,
    pub decmp_tp: f64,
    pub total_tp: f64,
    /// Normalized against the best and worst rows of the same sweep.
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn measure(data: &[u8], cfg: &ModelConfig, variant: Variant, pipeline: bool, reps: usize) -> Result<(f64, f64, f64, f64)> {
    let mut best = None::<(f64, f64, f64, f64)>;
    for _ in 0..reps.max(1) {
        let t0 = Instant::now();
        let packed = compress_bytes(
            data,
            cfg,
            variant,
            CompressOptions {
                pipeline,
                ..Default::default()
            },
        )?;
        let tc = t0.elapsed();
        let t1 = Instant::now();
        let out = decompress_bytes(
            &packed.bytes,
            DecompressOptions {
                workers: cfg.workers,
                ..Default::default()
            },
        )?;
        let td = t1.elapsed();
        if out != data {
            return Err(FadeError::Protocol("round trip changed the data".into()));
        }
        let cr = compression_ratio(data.len() as u64, packed.bytes.len() as u64)?;
        let tp = throughput_report(data.len() as u64, tc, td)?;
        let row = (cr, tp.compress, tp.decompress, tp.total);
        best = Some(match best {
            Some(b) if b.3 >= row.3 => b,
            _ => row,
        });
    }
    Ok(best.expect("at least one repetition"))
}

/// One compress and decompress per value, all from the same seed. A failed
/// run is recorded in its row and the sweep moves on.
pub fn run_sweep(spec: &SweepSpec, data: &[u8]) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = spec
        .values
        .iter()
        .map(|&value| {
            let mut cfg = spec.base.clone();
            spec.param.apply(&mut cfg, value);
            match measure(data, &cfg, spec.variant, spec.pipeline, spec.repetitions) {
                Ok((cr, cmp_tp, decmp_tp, total_tp)) => SweepRow {
                    param: spec.param,
                    value,
                    cr,
                    cmp_tp,
                    decmp_tp,
                    total_tp,
                    score: None,
                    error: None,
                },
                Err(e) => SweepRow {
                    param: spec.param,
                    value,
                    cr: f64::NAN,
                    cmp_tp: f64::NAN,
                    decmp_tp: f64::NAN,
                    total_tp: f64::NAN,
                    score: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let span = |f: fn(&SweepRow) -> f64| {
        let lo = ok.iter().map(|r| f(r)).fold(f64::INFINITY, f64::min);
        let hi = ok.iter().map(|r| f(r)).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (cr_min, cr_max) = span(|r| r.cr);
    let (tp_min, tp_max) = span(|r| r.total_tp);
    let bounds = ScoreBounds {
        cr_min,
        cr_max,
        tp_min,
        tp_max,
    };
    for r in rows.iter_mut().filter(|r| r.error.is_none()) {
        r.score = weighted_score(r.cr, r.total_tp, bounds, spec.omega).ok();
    }
    rows
}

/// Renders sweep rows as an aligned text table.
pub fn render_table(rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{:>10} {:>8} {:>12} {:>12} {:>12} {:>7}\n",
        "value", "CR", "cmp KB/min", "dec KB/min", "tot KB/min", "score"
    );
    for r in rows {
        match &r.error {
            Some(e) => s.push_str(&format!("{:>10} failed: {e}\n", r.value)),
            None => s.push_str(&format!(
                "{:>10} {:>8.4} {:>12.1} {:>12.1} {:>12.1} {:>7}\n",
                r.value,
                r.cr,
                r.cmp_tp,
                r.decmp_tp,
                r.total_tp,
                r.score.map_or("-".to_string(), |v| format!("{v:.3}"))
            )),
        }
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationResult {
    pub variant: Variant,
    pub cr: f64,
    /// Container size in bits over input bytes.
    pub bits_per_byte: f64,
    /// Mean training loss (nats) over consecutive windows of steps.
    pub nll_windows: Vec<f64>,
    /// Mean training loss over the last quarter of steps.
    pub final_quarter_nll: f64,
}

/// Compresses `data` with one architecture variant and reports the ratio and
/// the loss trajectory. Every variant sees the same seed and step budget.
pub fn ablation_harness(variant: Variant, data: &[u8], cfg: &ModelConfig, window: usize) -> Result<AblationResult> {
    let mut losses = Vec::new();
    let mut obs = |r: &StepRecord| losses.push(r.loss);
    let packed = compress_bytes(
        data,
        cfg,
        variant,
        CompressOptions {
            pipeline: true,
            observer: Some(&mut obs),
            ..Default::default()
        },
    )?;
    let cr = compression_ratio(data.len() as u64, packed.bytes.len() as u64)?;
    let mean = |xs: &[f64]| if xs.is_empty() { f64::NAN } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    Ok(AblationResult {
        variant,
        cr,
        bits_per_byte: 8.0 * packed.bytes.len() as f64 / data.len().max(1) as f64,
        nll_windows: losses.chunks(window.max(1)).map(mean).collect(),
        final_quarter_nll: mean(&losses[losses.len() - (losses.len() / 4).max(1).min(losses.len())..]),
    })
}
