use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Barrier, Mutex, RwLock};
use std::thread;

use super::engine::{Observer, Producer};
use super::partition::{effective_workers, StreamPartition};
use crate::coder::{uniform_warmup_decode, FreqTable, RangeDecoder};
use crate::error::{FadeError, Result};
use crate::predictor::{ModelConfig, Variant};

/// Knobs for decompression; none of them affect the output.
#[derive(Default)]
pub struct DecompressOptions<'a> {
    /// Decoding worker threads, clamped to a divisor of the stream count.
    /// Zero decodes everything on the calling thread.
    pub workers: usize,
    pub observer: Option<Observer<'a>>,
}

fn locate(err: FadeError, stream: usize, step: u64) -> FadeError {
    match err {
        FadeError::Corruption { detail, .. } => FadeError::Corruption { stream, step, detail },
        FadeError::Exhausted { consumed } => FadeError::Corruption {
            stream,
            step,
            detail: format!("bitstream exhausted after {consumed} bytes"),
        },
        other => other,
    }
}

/// The decoders of a contiguous range of streams.
struct Lane<'a> {
    first: usize,
    decoders: Vec<RangeDecoder<'a>>,
}

impl<'a> Lane<'a> {
    fn open(streams: &[&'a [u8]], first: usize, count: usize) -> Result<Self> {
        let decoders = (first..first + count)
            .map(|s| RangeDecoder::new(streams[s]).map_err(|e| locate(e, s, 0)))
            .collect::<Result<_>>()?;
        Ok(Lane { first, decoders })
    }

    /// Decodes the uniform-coded prefix of each stream into `warm` rows.
    fn warmup(&mut self, part: &StreamPartition, tsteps: usize, warm: &mut [u8]) -> Result<()> {
        for (i, dec) in self.decoders.iter_mut().enumerate() {
            let s = self.first + i;
            let n = part.valid_len(s).min(tsteps);
            let syms = uniform_warmup_decode(dec, n).map_err(|e| locate(e, s, 0))?;
            warm[i * tsteps..i * tsteps + n].copy_from_slice(&syms);
        }
        Ok(())
    }

    /// Decodes position `t` of each stream; padding decodes to zero.
    fn step(&mut self, part: &StreamPartition, t: usize, step: u64, tables: &[FreqTable], out: &mut [u8]) -> Result<()> {
        for (i, dec) in self.decoders.iter_mut().enumerate() {
            let s = self.first + i;
            out[i] = if t < part.valid_len(s) {
                dec.decode(&tables[s]).map_err(|e| locate(e, s, step))?
            } else {
                0
            };
        }
        Ok(())
    }

    fn finish(self, last_step: u64) -> Result<()> {
        for (i, dec) in self.decoders.into_iter().enumerate() {
            dec.finish().map_err(|e| locate(e, self.first + i, last_step))?;
        }
        Ok(())
    }
}

/// Decodes the streams of a container back into the original bytes.
pub fn decompress(
    part: &StreamPartition,
    cfg: &ModelConfig,
    variant: Variant,
    streams: &[&[u8]],
    opts: DecompressOptions<'_>,
) -> Result<Vec<u8>> {
    if streams.len() != part.batch() || cfg.batch != part.batch() {
        return Err(FadeError::Format(format!(
            "{} bitstreams and batch {} for a partition of {} streams",
            streams.len(),
            cfg.batch,
            part.batch()
        )));
    }
    let mut cfg = cfg.clone();
    cfg.workers = 1;
    cfg.validate()?;
    if part.original_length() == 0 {
        if streams.iter().any(|s| !s.is_empty()) {
            return Err(FadeError::Corruption {
                stream: 0,
                step: 0,
                detail: "payload present for an empty input".into(),
            });
        }
        return Ok(Vec::new());
    }
    let DecompressOptions { workers, mut observer } = opts;
    let symbols = if workers == 0 {
        decode_serial(part, &cfg, variant, streams, &mut observer)?
    } else {
        let workers = effective_workers(part.batch(), workers);
        decode_parallel(part, &cfg, variant, streams, workers, &mut observer)?
    };
    Ok(assemble(part, &symbols))
}

/// Stream-major padded symbols back to file order.
fn assemble(part: &StreamPartition, symbols: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(part.original_length() as usize);
    for s in 0..part.batch() {
        let row = &symbols[s * part.stream_len()..];
        out.extend_from_slice(&row[..part.valid_len(s)]);
    }
    out
}

fn decode_serial(
    part: &StreamPartition,
    cfg: &ModelConfig,
    variant: Variant,
    streams: &[&[u8]],
    observer: &mut Option<Observer<'_>>,
) -> Result<Vec<u8>> {
    let (b, len, tsteps) = (part.batch(), part.stream_len(), cfg.time_steps);
    let mut symbols = vec![0u8; b * len];
    let mut lane = Lane::open(streams, 0, b)?;
    let mut warm = vec![0u8; b * tsteps];
    lane.warmup(part, tsteps, &mut warm)?;
    for s in 0..b {
        let n = tsteps.min(len);
        symbols[s * len..s * len + n].copy_from_slice(&warm[s * tsteps..s * tsteps + n]);
    }
    let mut step = 0;
    if len > tsteps {
        let mut producer = Producer::new(cfg, variant, part, &warm)?;
        let mut tables = Vec::new();
        let mut targets = vec![0u8; b];
        while !producer.done() {
            let t = producer.t();
            let pass = producer.predict(&mut tables)?;
            lane.step(part, t, step, &tables, &mut targets)?;
            for s in 0..b {
                symbols[s * len + t] = targets[s];
            }
            let cost = match observer {
                Some(_) => producer.coded_cost(&tables, &targets),
                None => (0.0, 0),
            };
            producer.learn(pass, &targets, cost, observer)?;
            step += 1;
        }
    }
    lane.finish(step.saturating_sub(1))?;
    Ok(symbols)
}

/// Coordinator plus `workers` decoding threads.
///
/// Each step the coordinator predicts and publishes the tables, then the
/// first barrier releases the workers to decode their own streams; the
/// second barrier hands the decoded symbols back for training. No worker can
/// start step `t+1` until the model update for `t` is done, because the
/// tables for `t+1` are only published after it.
fn decode_parallel(
    part: &StreamPartition,
    cfg: &ModelConfig,
    variant: Variant,
    streams: &[&[u8]],
    workers: usize,
    observer: &mut Option<Observer<'_>>,
) -> Result<Vec<u8>> {
    let (b, len, tsteps) = (part.batch(), part.stream_len(), cfg.time_steps);
    let per = b / workers;
    let tables: RwLock<Vec<FreqTable>> = RwLock::new(Vec::new());
    let outputs: Vec<Mutex<Vec<u8>>> = (0..workers).map(|_| Mutex::new(vec![0u8; per * tsteps.max(1)])).collect();
    let failure: Mutex<Option<FadeError>> = Mutex::new(None);
    let stop = AtomicBool::new(false);
    let released = Barrier::new(workers + 1);
    let decoded = Barrier::new(workers + 1);
    let step_no = std::sync::atomic::AtomicU64::new(0);
    let t_now = std::sync::atomic::AtomicUsize::new(tsteps);

    let record = |e: FadeError| {
        let mut f = failure.lock().unwrap_or_else(|p| p.into_inner());
        f.get_or_insert(e);
    };

    let mut symbols = vec![0u8; b * len];
    thread::scope(|scope| -> Result<()> {
        for w in 0..workers {
            let (tables, outputs, stop, released, decoded, step_no, t_now, record) =
                (&tables, &outputs, &stop, &released, &decoded, &step_no, &t_now, &record);
            scope.spawn(move || {
                let mut lane = match Lane::open(streams, w * per, per) {
                    Ok(mut lane) => {
                        let mut out = outputs[w].lock().unwrap_or_else(|p| p.into_inner());
                        match lane.warmup(part, tsteps, &mut out) {
                            Ok(()) => Some(lane),
                            Err(e) => {
                                record(e);
                                None
                            }
                        }
                    }
                    Err(e) => {
                        record(e);
                        None
                    }
                };
                decoded.wait();
                loop {
                    released.wait();
                    if stop.load(Ordering::Acquire) {
                        break;
                    }
                    if let Some(l) = lane.as_mut() {
                        let t = t_now.load(Ordering::Acquire);
                        let step = step_no.load(Ordering::Acquire);
                        let tables = tables.read().unwrap_or_else(|p| p.into_inner());
                        let mut out = outputs[w].lock().unwrap_or_else(|p| p.into_inner());
                        if let Err(e) = l.step(part, t, step, &tables, &mut out[..per]) {
                            record(e);
                            lane = None;
                        }
                    }
                    decoded.wait();
                }
                if let Some(l) = lane {
                    let last = step_no.load(Ordering::Acquire);
                    if let Err(e) = l.finish(last) {
                        record(e);
                    }
                }
            });
        }

        let mut coordinate = || -> Result<()> {
            decoded.wait();
            check(&failure)?;
            let mut warm = vec![0u8; b * tsteps];
            for w in 0..workers {
                let out = outputs[w].lock().unwrap_or_else(|p| p.into_inner());
                warm[w * per * tsteps..(w + 1) * per * tsteps].copy_from_slice(&out[..per * tsteps]);
            }
            for s in 0..b {
                let n = tsteps.min(len);
                symbols[s * len..s * len + n].copy_from_slice(&warm[s * tsteps..s * tsteps + n]);
            }
            if len <= tsteps {
                return Ok(());
            }
            let mut producer = Producer::new(cfg, variant, part, &warm)?;
            let mut targets = vec![0u8; b];
            let mut step = 0u64;
            while !producer.done() {
                let t = producer.t();
                let pass = {
                    let mut guard = tables.write().unwrap_or_else(|p| p.into_inner());
                    producer.predict(&mut guard)?
                };
                t_now.store(t, Ordering::Release);
                step_no.store(step, Ordering::Release);
                released.wait();
                decoded.wait();
                check(&failure)?;
                for w in 0..workers {
                    let out = outputs[w].lock().unwrap_or_else(|p| p.into_inner());
                    targets[w * per..(w + 1) * per].copy_from_slice(&out[..per]);
                }
                for s in 0..b {
                    symbols[s * len + t] = targets[s];
                }
                let cost = match observer {
                    Some(_) => producer.coded_cost(&tables.read().unwrap_or_else(|p| p.into_inner()), &targets),
                    None => (0.0, 0),
                };
                producer.learn(pass, &targets, cost, observer)?;
                step += 1;
            }
            step_no.store(step.saturating_sub(1), Ordering::Release);
            Ok(())
        };
        let result = coordinate();
        stop.store(true, Ordering::Release);
        released.wait();
        result
    })?;
    // Workers report trailing-byte errors only after they stop.
    check(&failure)?;
    Ok(symbols)
}

fn check(failure: &Mutex<Option<FadeError>>) -> Result<()> {
    match failure.lock().unwrap_or_else(|p| p.into_inner()).take() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
