use std::thread;
use std::time::{Duration, Instant};

use super::partition::StreamPartition;
use super::pingpong::{PingPong, Transition};
use crate::coder::{quantize, uniform_warmup_encode, FreqTable, RangeEncoder};
use crate::error::{FadeError, Result};
use crate::predictor::{ContextWindow, Model, ModelConfig, RouterStats, Variant};

/// Per-step training record reported to an observer.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub step: u64,
    /// Mean cross-entropy over all streams, padding included, in nats.
    pub loss: f64,
    /// Ideal code length of the symbols actually coded this step, in bits.
    pub coded_bits: f64,
    pub coded_symbols: usize,
    pub router: Option<RouterStats>,
    pub elapsed: Duration,
}

pub type Observer<'a> = &'a mut dyn FnMut(&StepRecord);

/// Knobs that affect speed and instrumentation, never the output bytes.
#[derive(Default)]
pub struct CompressOptions<'a> {
    pub pipeline: bool,
    /// Sleep added to the coder per step, for latency experiments.
    pub coder_delay: Option<Duration>,
    /// Keep the ping-pong slot transition log.
    pub record_transitions: bool,
    pub observer: Option<Observer<'a>>,
}

/// Timings of a compression run.
#[derive(Clone, Debug, Default)]
pub struct CompressStats {
    pub wall: Duration,
    /// Time spent in predict, quantize and train.
    pub model: Duration,
    /// Time spent encoding, including any injected delay.
    pub coder: Duration,
    pub steps: u64,
    pub transitions: Vec<Transition>,
}

/// Output of a compression run: the partition actually used, the effective
/// model configuration and one bitstream per stream.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub partition: StreamPartition,
    pub config: ModelConfig,
    pub variant: Variant,
    pub streams: Vec<Vec<u8>>,
    pub stats: CompressStats,
}

/// Everything the coder needs for one model step.
#[derive(Clone, Debug, Default)]
pub(crate) struct StepBatch {
    pub t: usize,
    pub tables: Vec<FreqTable>,
    pub targets: Vec<u8>,
}

/// The model side of a run: owns the predictor and the context window.
pub(crate) struct Producer<'a> {
    model: Model<f32>,
    ctx: ContextWindow,
    part: &'a StreamPartition,
    t: usize,
    started: Instant,
}

impl<'a> Producer<'a> {
    pub fn new(cfg: &ModelConfig, variant: Variant, part: &'a StreamPartition, warm: &[u8]) -> Result<Self> {
        let model = Model::new(cfg, variant)?;
        let ctx = ContextWindow::from_symbols(part.batch(), cfg.time_steps, warm.to_vec())?;
        Ok(Producer {
            model,
            ctx,
            part,
            t: cfg.time_steps,
            started: Instant::now(),
        })
    }

    pub fn done(&self) -> bool {
        self.t >= self.part.stream_len()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Predicts step `t` and writes one table per coded stream into `tables`;
    /// streams that are already in their padding get the uniform table.
    pub fn predict(&mut self, tables: &mut Vec<FreqTable>) -> Result<crate::predictor::Pass<f32>> {
        let pass = self.model.predict(&self.ctx)?;
        tables.clear();
        let probs = pass.probs();
        for s in 0..self.part.batch() {
            if self.t < self.part.valid_len(s) {
                let ft = quantize(probs.row(s)).map_err(|_| FadeError::Divergence {
                    step: self.model.step(),
                    detail: format!("stream {s} produced an invalid distribution"),
                })?;
                tables.push(ft);
            } else {
                tables.push(FreqTable::uniform().clone());
            }
        }
        Ok(pass)
    }

    /// Ideal cost of this step's coded symbols, for metrics.
    pub fn coded_cost(&self, tables: &[FreqTable], targets: &[u8]) -> (f64, usize) {
        let mut bits = 0.0;
        let mut count = 0;
        for s in 0..self.part.batch() {
            if self.t < self.part.valid_len(s) {
                bits += tables[s].cost_bits(targets[s]);
                count += 1;
            }
        }
        (bits, count)
    }

    /// Trains on the true symbols of step `t` and advances the window.
    pub fn learn(
        &mut self,
        pass: crate::predictor::Pass<f32>,
        targets: &[u8],
        cost: (f64, usize),
        observer: &mut Option<Observer<'_>>,
    ) -> Result<()> {
        let router = observer.as_ref().and_then(|_| pass.router_stats());
        let step = self.model.step();
        let loss = self.model.train_step(pass, targets)?;
        if let Some(obs) = observer.as_mut() {
            obs(&StepRecord {
                step,
                loss,
                coded_bits: cost.0,
                coded_symbols: cost.1,
                router,
                elapsed: self.started.elapsed(),
            });
        }
        self.ctx.shift_in(targets);
        self.t += 1;
        Ok(())
    }
}

/// First `T` symbols of every stream, zero padded, row-major.
pub(crate) fn warm_context(part: &StreamPartition, data: &[u8], time_steps: usize) -> Vec<u8> {
    let mut warm = vec![0u8; part.batch() * time_steps];
    for s in 0..part.batch() {
        for t in 0..time_steps {
            warm[s * time_steps + t] = part.symbol(data, s, t);
        }
    }
    warm
}

struct Coder<'a> {
    encoders: Vec<RangeEncoder>,
    part: &'a StreamPartition,
    delay: Option<Duration>,
    busy: Duration,
}

impl Coder<'_> {
    fn encode(&mut self, batch: &StepBatch) {
        let start = Instant::now();
        for (s, enc) in self.encoders.iter_mut().enumerate() {
            if batch.t < self.part.valid_len(s) {
                enc.encode(batch.targets[s], &batch.tables[s]);
            }
        }
        if let Some(d) = self.delay {
            thread::sleep(d);
        }
        self.busy += start.elapsed();
    }
}

/// Compresses `data` with the given model configuration.
///
/// The batch in `cfg` is an upper bound; short inputs use fewer streams. The
/// pipelined and serial paths produce identical bitstreams.
pub fn compress(data: &[u8], cfg: &ModelConfig, variant: Variant, opts: CompressOptions<'_>) -> Result<Encoded> {
    let wall = Instant::now();
    let part = StreamPartition::plan(data.len() as u64, cfg.batch, cfg.time_steps)?;
    let mut cfg = cfg.clone();
    cfg.batch = part.batch();
    cfg.workers = 1;
    cfg.validate()?;

    let tsteps = cfg.time_steps;
    let mut encoders: Vec<RangeEncoder> = (0..part.batch()).map(|_| RangeEncoder::new()).collect();
    for (s, enc) in encoders.iter_mut().enumerate() {
        let n = part.valid_len(s).min(tsteps);
        let off = part.offset(s).min(data.len());
        uniform_warmup_encode(enc, &data[off..off + n]);
    }
    let mut coder = Coder {
        encoders,
        part: &part,
        delay: opts.coder_delay,
        busy: Duration::ZERO,
    };
    let mut stats = CompressStats::default();
    let CompressOptions {
        pipeline,
        record_transitions,
        mut observer,
        ..
    } = opts;

    if part.stream_len() > tsteps {
        let producer = Producer::new(&cfg, variant, &part, &warm_context(&part, data, tsteps))?;
        if pipeline {
            run_pipelined(producer, &mut coder, data, record_transitions, &mut observer, &mut stats)?;
        } else {
            run_serial(producer, &mut coder, data, &mut observer, &mut stats)?;
        }
    }

    stats.coder = coder.busy;
    stats.wall = wall.elapsed();
    // An empty input is stored as empty streams rather than coder flushes.
    let streams = if data.is_empty() {
        vec![Vec::new(); part.batch()]
    } else {
        coder.encoders.into_iter().map(RangeEncoder::finish).collect()
    };
    Ok(Encoded {
        partition: part,
        config: cfg,
        variant,
        streams,
        stats,
    })
}

fn fill_targets(part: &StreamPartition, data: &[u8], t: usize, targets: &mut Vec<u8>) {
    targets.clear();
    targets.extend((0..part.batch()).map(|s| part.symbol(data, s, t)));
}

fn run_serial(
    mut producer: Producer<'_>,
    coder: &mut Coder<'_>,
    data: &[u8],
    observer: &mut Option<Observer<'_>>,
    stats: &mut CompressStats,
) -> Result<()> {
    let mut batch = StepBatch::default();
    while !producer.done() {
        let start = Instant::now();
        batch.t = producer.t();
        let pass = producer.predict(&mut batch.tables)?;
        fill_targets(producer.part, data, batch.t, &mut batch.targets);
        let mid = Instant::now();
        coder.encode(&batch);
        let resume = Instant::now();
        let cost = match observer {
            Some(_) => producer.coded_cost(&batch.tables, &batch.targets),
            None => (0.0, 0),
        };
        producer.learn(pass, &batch.targets, cost, observer)?;
        stats.model += (mid - start) + resume.elapsed();
        stats.steps += 1;
    }
    Ok(())
}

/// Model on the calling thread, coder on a helper thread, joined by a
/// two-slot ping-pong buffer. The producer publishes step `t` before it
/// trains on it, so coding of `t` overlaps with training and predicting `t+1`.
fn run_pipelined(
    mut producer: Producer<'_>,
    coder: &mut Coder<'_>,
    data: &[u8],
    record: bool,
    observer: &mut Option<Observer<'_>>,
    stats: &mut CompressStats,
) -> Result<()> {
    let buffer = PingPong::new(StepBatch::default(), StepBatch::default(), record);
    let result = thread::scope(|scope| {
        let consumer = scope.spawn(|| -> Result<()> {
            let mut slot = 0;
            while let Some(batch) = buffer.begin_drain(slot)? {
                coder.encode(&batch);
                buffer.end_drain(slot, batch)?;
                slot ^= 1;
            }
            Ok(())
        });

        let produced = (|| -> Result<()> {
            let mut slot = 0;
            while !producer.done() {
                let start = Instant::now();
                let Some(mut batch) = buffer.begin_fill(slot)? else {
                    return Err(FadeError::Protocol("coder stopped early".into()));
                };
                let wait = start.elapsed();
                batch.t = producer.t();
                let pass = producer.predict(&mut batch.tables)?;
                fill_targets(producer.part, data, batch.t, &mut batch.targets);
                // The coder may run as soon as the slot is published, so the
                // training step reads its own copy of this step's inputs.
                let targets = batch.targets.clone();
                let cost = match observer {
                    Some(_) => producer.coded_cost(&batch.tables, &batch.targets),
                    None => (0.0, 0),
                };
                buffer.end_fill(slot, batch)?;
                producer.learn(pass, &targets, cost, observer)?;
                stats.model += start.elapsed() - wait;
                stats.steps += 1;
                slot ^= 1;
            }
            Ok(())
        })();
        match &produced {
            Ok(()) => buffer.close(),
            Err(_) => buffer.abort(),
        }
        let consumed = consumer
            .join()
            .unwrap_or_else(|_| Err(FadeError::Protocol("coder thread panicked".into())));
        if consumed.is_err() {
            buffer.abort();
        }
        consumed.and(produced)
    });
    stats.transitions = buffer.transitions();
    result
}
