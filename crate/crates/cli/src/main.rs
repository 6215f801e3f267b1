use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;

use fade_core::bench::{render_table, run_sweep, write_jsonl, MetricsRecord, SweepParam, SweepRow, SweepSpec};
use fade_core::container::{compress_bytes, compression_ratio, decompress_bytes, inspect, read_file, write_file};
use fade_core::cspp::{CompressOptions, DecompressOptions, StepRecord};
use fade_core::predictor::{ModelConfig, Variant};
use fade_core::{FadeError, Result};

/// Lossless compressor with an online-trained neural predictor.
#[derive(Parser, Debug)]
#[command(name = "fade", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compress a file.
    Compress {
        input: PathBuf,
        output: PathBuf,
        /// Run model and coder in lockstep on one thread.
        #[arg(long)]
        no_pipeline: bool,
        #[command(flatten)]
        model: ModelArgs,
        /// Write per-step training metrics as JSON lines.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Decompress a file; the model configuration comes from its header.
    Decompress {
        input: PathBuf,
        output: PathBuf,
        /// Decoding worker threads (0 decodes on the main thread).
        #[arg(long, default_value_t = 8)]
        workers: usize,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Print the header of a compressed file.
    Inspect {
        input: PathBuf,
        /// Print JSON instead of key: value lines.
        #[arg(long)]
        json: bool,
    },
    /// Round-trip every file in a directory and report ratio and throughput.
    Bench {
        corpus: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        no_pipeline: bool,
        /// Sweep one parameter: workers, batch, cache_dim or fnr_dim.
        #[arg(long, requires = "values")]
        sweep: Option<String>,
        /// Comma-separated values for --sweep.
        #[arg(long, value_delimiter = ',')]
        values: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        /// Weight of the ratio in the combined score.
        #[arg(long, default_value_t = 0.5)]
        omega: f64,
        /// Also write rows as JSON lines.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Base configuration: default, desk or tiny.
    #[arg(long, default_value = "default")]
    preset: String,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    time_steps: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    cache_dim: Option<usize>,
    #[arg(long)]
    hgr_dim: Option<usize>,
    #[arg(long)]
    fnr_dim: Option<usize>,
    #[arg(long)]
    conv_kernel: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<(ModelConfig, Variant)> {
        let mut c = ModelConfig::preset(&self.preset)?;
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.batch, self.batch);
        set(&mut c.time_steps, self.time_steps);
        set(&mut c.embed_dim, self.embed_dim);
        set(&mut c.cache_dim, self.cache_dim);
        set(&mut c.hgr_dim, self.hgr_dim);
        set(&mut c.fnr_dim, self.fnr_dim);
        set(&mut c.conv_kernel, self.conv_kernel);
        c.seed = self.seed.unwrap_or(c.seed);
        c.lr = self.lr.unwrap_or(c.lr);
        // Workers only matter for decoding; clamp so any batch is accepted.
        c.workers = fade_core::cspp::effective_workers(c.batch, self.workers.unwrap_or(c.workers));
        c.validate()?;
        let variant = match &self.variant {
            Some(v) => Variant::parse(v)?,
            None => Variant::Full,
        };
        Ok((c, variant))
    }
}

fn metrics_sink(path: &Option<PathBuf>, phase: &'static str) -> Option<(PathBuf, Vec<MetricsRecord>, &'static str)> {
    path.as_ref().map(|p| (p.clone(), Vec::new(), phase))
}

fn save_metrics(sink: Option<(PathBuf, Vec<MetricsRecord>, &'static str)>) -> Result<()> {
    if let Some((path, records, _)) = sink {
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        write_jsonl(BufWriter::new(file), &records).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

fn io_err(path: &Path, source: std::io::Error) -> FadeError {
    FadeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compress {
            input,
            output,
            no_pipeline,
            model,
            metrics,
        } => {
            let (cfg, variant) = model.resolve()?;
            let data = read_file(&input)?;
            let mut sink = metrics_sink(&metrics, "compress");
            let mut obs = |r: &StepRecord| {
                if let Some((_, recs, phase)) = sink.as_mut() {
                    recs.push(MetricsRecord::from_step(r, phase));
                }
            };
            let start = Instant::now();
            let packed = compress_bytes(
                &data,
                &cfg,
                variant,
                CompressOptions {
                    pipeline: !no_pipeline,
                    observer: metrics.is_some().then_some(&mut obs as _),
                    ..Default::default()
                },
            )?;
            write_file(&output, &packed.bytes)?;
            let secs = start.elapsed().as_secs_f64();
            info!(
                "{} -> {} bytes in {secs:.2}s, ratio {:.4}",
                data.len(),
                packed.bytes.len(),
                compression_ratio(data.len() as u64, packed.bytes.len() as u64)?
            );
            save_metrics(sink)
        }
        Command::Decompress {
            input,
            output,
            workers,
            metrics,
        } => {
            let bytes = read_file(&input)?;
            let mut sink = metrics_sink(&metrics, "decompress");
            let mut obs = |r: &StepRecord| {
                if let Some((_, recs, phase)) = sink.as_mut() {
                    recs.push(MetricsRecord::from_step(r, phase));
                }
            };
            let data = decompress_bytes(
                &bytes,
                DecompressOptions {
                    workers,
                    observer: metrics.is_some().then_some(&mut obs as _),
                },
            )?;
            write_file(&output, &data)?;
            save_metrics(sink)
        }
        Command::Inspect { input, json } => {
            let header = inspect(&read_file(&input)?)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&header).expect("header serializes"));
            } else {
                println!("{header}");
            }
            Ok(())
        }
        Command::Bench {
            corpus,
            model,
            no_pipeline,
            sweep,
            values,
            repetitions,
            omega,
            output,
        } => bench(&corpus, &model, !no_pipeline, sweep, values, repetitions, omega, output),
    }
}

#[allow(clippy::too_many_arguments)]
fn bench(
    dir: &Path,
    model: &ModelArgs,
    pipeline: bool,
    sweep: Option<String>,
    values: Vec<usize>,
    repetitions: usize,
    omega: f64,
    output: Option<PathBuf>,
) -> Result<()> {
    let (base, variant) = model.resolve()?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(FadeError::Usage(format!("no files in {}", dir.display())));
    }
    let (param, values) = match sweep {
        Some(name) => (SweepParam::parse(&name)?, values),
        None => (SweepParam::Workers, vec![base.workers]),
    };
    let spec = SweepSpec {
        param,
        values,
        base,
        variant,
        pipeline,
        repetitions,
        omega,
    };
    let mut all: Vec<(String, SweepRow)> = Vec::new();
    for path in &files {
        let data = read_file(path)?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let rows = if data.is_empty() { Vec::new() } else { run_sweep(&spec, &data) };
        println!("{name} ({} bytes), sweeping {:?}", data.len(), param);
        print!("{}", render_table(&rows));
        all.extend(rows.into_iter().map(|r| (name.clone(), r)));
    }
    if let Some(path) = output {
        #[derive(serde::Serialize)]
        struct Line<'a> {
            file: &'a str,
            #[serde(flatten)]
            row: &'a SweepRow,
        }
        let lines: Vec<Line> = all.iter().map(|(f, r)| Line { file: f, row: r }).collect();
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        write_jsonl(BufWriter::new(file), &lines).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 5 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fade: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
