use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pothole_core::bayesopt::SearchSpec;
use pothole_core::bench::{bench_mbtp, BenchConfig};
use pothole_core::cdkf::{CdkfConfig, NoiseMode};
use pothole_core::io::{read_detections, read_results, SequenceManifest, FORMAT_VERSION};
use pothole_core::metrics::{evaluate_detections, EvalImage};
use pothole_core::model::CLASS_POTHOLE;
use pothole_core::pipeline::{ablation, consistency_report, manifest_frames, optimize_smoother, run_collect, run_pipeline, PipelineConfig};
use pothole_core::synth::{write_scene, SceneSpec};
use pothole_core::{Error, Result};

/// Pothole area estimation from detections and metric depth maps.
#[derive(Parser)]
#[command(name = "pothole", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track, measure and smooth every frame of a sequence.
    Estimate(EstimateArgs),
    /// Area consistency of a result stream.
    EvalArea {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_track_len: usize,
    },
    /// Precision, recall, F1 and AP of detections against ground truth.
    EvalDet {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        iou: f64,
        /// Keep manholes and other classes instead of potholes only.
        #[arg(long)]
        all_classes: bool,
    },
    /// Tune lambda and theta of the smoother on a sequence.
    Optimize(OptimizeArgs),
    /// Compare raw areas with the three smoother noise models.
    Ablation {
        #[command(flatten)]
        common: SequenceArgs,
    },
    /// Render a synthetic scene into a sequence directory.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the scene file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Per-frame latency of the area estimator.
    BenchMbtp {
        #[arg(long, default_value_t = 1920)]
        width: usize,
        #[arg(long, default_value_t = 1080)]
        height: usize,
        #[arg(long, default_value_t = 5)]
        boxes: usize,
        #[arg(long, default_value_t = 200)]
        box_size: usize,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct SequenceArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Prepare frames on a worker thread ahead of the tracker.
    #[arg(long)]
    parallel: bool,
    #[arg(long, default_value_t = 5)]
    min_track_len: usize,
    #[arg(long, default_value_t = 0.5)]
    min_valid_fraction: f64,
    #[command(flatten)]
    cdkf: CdkfArgs,
}

#[derive(Args)]
struct CdkfArgs {
    #[arg(long, default_value_t = CdkfConfig::default().lambda)]
    lambda: f64,
    #[arg(long, default_value_t = CdkfConfig::default().theta)]
    theta: f64,
    #[arg(long, default_value_t = CdkfConfig::default().d0)]
    d0: f64,
    #[arg(long, default_value_t = CdkfConfig::default().q)]
    q: f64,
    #[arg(long, default_value_t = NoiseMode::Combined)]
    mode: NoiseMode,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: SequenceArgs,
    #[arg(long)]
    no_smoothing: bool,
    /// Result records go here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the area consistency report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    common: SequenceArgs,
    #[arg(long, default_value_t = 5)]
    n_init: usize,
    #[arg(long, default_value_t = 30)]
    n_iter: usize,
}

impl SequenceArgs {
    fn pipeline_config(&self, smoothing: bool) -> PipelineConfig {
        PipelineConfig {
            cdkf: CdkfConfig {
                lambda: self.cdkf.lambda,
                theta: self.cdkf.theta,
                d0: self.cdkf.d0,
                q: self.cdkf.q,
                mode: self.cdkf.mode,
            },
            smoothing,
            parallel: self.parallel,
            seed: self.seed,
            min_track_len: self.min_track_len,
            min_valid_fraction: self.min_valid_fraction,
            ..Default::default()
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_json(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| Error::Io {
        path: "<stdout>".into(),
        source: e,
    })
}

fn raw_records(args: &SequenceArgs) -> Result<(SequenceManifest, Vec<pothole_core::io::FrameResultRecord>)> {
    let m = SequenceManifest::load(&args.manifest)?;
    let (records, _) = run_collect(manifest_frames(&m)?, &m.intrinsics, &args.pipeline_config(false))?;
    Ok((m, records))
}

fn run(cli: Cli) -> Result<()> {
    let stdout = std::io::stdout();
    match cli.command {
        Command::Estimate(a) => {
            let m = SequenceManifest::load(&a.common.manifest)?;
            let cfg = a.common.pipeline_config(!a.no_smoothing);
            let mut out: Box<dyn Write> = match &a.out {
                Some(p) => Box::new(create(p)?),
                None => Box::new(BufWriter::new(stdout.lock())),
            };
            let summary = run_pipeline(manifest_frames(&m)?, &m.intrinsics, &cfg, |rec| {
                let line = serde_json::to_string(&rec).map_err(|e| Error::Parse(e.to_string()))?;
                writeln!(out, "{line}").map_err(|e| Error::Io {
                    path: a.out.clone().unwrap_or_else(|| "<stdout>".into()),
                    source: e,
                })
            })?;
            out.flush().map_err(|e| Error::Io {
                path: "<output>".into(),
                source: e,
            })?;
            log::info!(
                "{} frames, {} records, {} skipped detections, {} qualifying tracks",
                summary.frames,
                summary.records,
                summary.skipped_detections,
                summary.report.track_count
            );
            if let Some(p) = &a.report {
                write_json(&mut create(p)?, &summary.report)?;
            }
        }
        Command::EvalArea { results, min_track_len } => {
            let records = read_results(&results)?;
            write_json(&mut stdout.lock(), &consistency_report(&records, min_track_len)?)?;
        }
        Command::EvalDet { dets, gt, iou, all_classes } => {
            let dets = read_detections(&dets)?;
            let gts = read_detections(&gt)?;
            let keep = |c: u32| all_classes || c == CLASS_POTHOLE;
            let frames: std::collections::BTreeSet<u64> = dets.keys().chain(gts.keys()).copied().collect();
            let images: Vec<EvalImage> = frames
                .into_iter()
                .map(|f| EvalImage {
                    dets: dets.get(&f).into_iter().flatten().filter(|d| keep(d.class_id)).map(|d| (d.bbox, d.confidence)).collect(),
                    gts: gts.get(&f).into_iter().flatten().filter(|d| keep(d.class_id)).map(|d| d.bbox).collect(),
                })
                .collect();
            write_json(&mut stdout.lock(), &evaluate_detections(&images, iou))?;
        }
        Command::Optimize(a) => {
            let (_, records) = raw_records(&a.common)?;
            let spec = SearchSpec {
                n_init: a.n_init,
                n_iter: a.n_iter,
                seed: a.common.seed,
                ..Default::default()
            };
            let base = a.common.pipeline_config(true).cdkf;
            let r = optimize_smoother(&records, &base, a.common.cdkf.mode, &spec, a.common.min_valid_fraction, a.common.min_track_len)?;
            let out = serde_json::json!({
                "format_version": FORMAT_VERSION,
                "mode": a.common.cdkf.mode.to_string(),
                "lambda": r.best_point[0],
                "theta": r.best_point[1],
                "objective": r.best_value,
                "history": r.history.iter().map(|(p, v)| serde_json::json!({"lambda": p[0], "theta": p[1], "objective": v})).collect::<Vec<_>>(),
            });
            write_json(&mut stdout.lock(), &out)?;
        }
        Command::Ablation { common } => {
            let (_, records) = raw_records(&common)?;
            let base = common.pipeline_config(true).cdkf;
            let rows = ablation(&records, &base, common.min_valid_fraction, common.min_track_len)?;
            write_json(&mut stdout.lock(), &rows)?;
        }
        Command::Synth { spec, out, seed } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| Error::Io { path: spec.clone(), source: e })?;
            let mut s = SceneSpec::from_toml(&text)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let files = write_scene(&s, &out)?;
            println!("{}", files.manifest.display());
        }
        Command::BenchMbtp {
            width,
            height,
            boxes,
            box_size,
            iters,
            seed,
            json,
        } => {
            let r = bench_mbtp(&BenchConfig {
                width,
                height,
                boxes,
                box_size,
                iters,
                seed,
            })?;
            if json {
                write_json(&mut stdout.lock(), &r)?;
            } else {
                println!(
                    "mbtp {width}x{height}, {boxes} boxes of {box_size}x{box_size} px, {iters} frames: mean {:.3} ms/frame, p95 {:.3} ms/frame",
                    r.mean_ms, r.p95_ms
                );
            }
        }
    }
    Ok(())
}

/// Flag combinations that are wrong regardless of the input data.
fn usage_error(cli: &Cli) -> Option<String> {
    let seq = match &cli.command {
        Command::Estimate(a) => Some(&a.common),
        Command::Optimize(a) => Some(&a.common),
        Command::Ablation { common } => Some(common),
        Command::EvalDet { iou, .. } if !(0.0..=1.0).contains(iou) => return Some(format!("--iou {iou} outside [0, 1]")),
        _ => None,
    }?;
    if let Err(e) = seq.pipeline_config(true).cdkf.validate() {
        return Some(e.to_string());
    }
    if !(0.0..=1.0).contains(&seq.min_valid_fraction) {
        return Some(format!("--min-valid-fraction {} outside [0, 1]", seq.min_valid_fraction));
    }
    None
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Some(msg) = usage_error(&cli) {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // the reader went away, e.g. `| head`
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
