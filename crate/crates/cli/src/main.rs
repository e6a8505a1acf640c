use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ringtrack::eval::{
    list_frames, run_benchmark, sweep_parameter, write_frames_csv, write_sweep_csv, FrameRecord, MetricsReport,
    SweepParam, FRAMES_CSV_HEADER,
};
use ringtrack::raster::io::load_gray;
use ringtrack::synth::{standard_corpus, write_case_corpora};
use ringtrack::tracker::track_step_report;
use ringtrack::{PipelineConfig, Roi, TrackerState};
use ringtrack_calib::{FrameSource, ServiceConfig};

#[derive(Parser)]
#[command(name = "ringtrack", version, about = "Elliptic ring detection and tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track through a directory of frames and write one CSV row per frame.
    Track {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a dataset against its ground truth.
    Bench {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        match_iou: Option<f64>,
        /// JSON metrics report.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-frame CSV with outcomes.
        #[arg(long)]
        frames: Option<PathBuf>,
    },
    /// Benchmark once per value of one overlap threshold.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        param: Param,
        /// `start:end:step` or a comma-separated list.
        #[arg(long, default_value = "0.1:0.9:0.1")]
        values: String,
        /// Value of the other overlap threshold.
        #[arg(long, default_value_t = 0.5)]
        fixed: f64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Sweep CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the synthetic benchmark corpus.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Keep only the first N frames of the standard corpus.
        #[arg(long)]
        limit: Option<usize>,
        /// Also write one labelled corpus per case of this many frames under `<out>/cases`.
        #[arg(long)]
        case_frames: Option<usize>,
    },
    /// Run the live calibration service.
    Serve {
        #[arg(long)]
        source: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long, default_value_t = 10.0)]
        fps: f64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Stop after the last frame instead of looping.
        #[arg(long)]
        once: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    Contour,
    Ellipse,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(PipelineConfig::default()),
    }
}

fn parse_values(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let [start, end, step] = [parts[0], parts[1], parts[2]].map(|s| s.trim().parse::<f64>());
        let (start, end, step) = (start?, end?, step?);
        if step.is_nan() || step <= 0.0 || end < start {
            bail!("range {spec:?} needs start <= end and a positive step");
        }
        let n = ((end - start) / step + 1e-9).floor() as usize;
        // Rounded so 0.1 + 2 * 0.1 prints as 0.3.
        return Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect());
    }
    spec.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad sweep value {v:?}")))
        .collect()
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn summary(r: &MetricsReport) -> String {
    let c = &r.counts;
    format!(
        "frames {} accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} | TP {} TN {} FP {} FN {} WD {} | {:.2} ms/frame",
        r.n_all, r.accuracy, r.precision, r.recall, r.f1, c.tp, c.tn, c.fp, c.fn_, c.wd, r.avg_ms
    )
}

fn track(frames: &Path, config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let paths = list_frames(frames)?;
    if paths.is_empty() {
        bail!("no frames in {}", frames.display());
    }
    let mut csv = format!("{FRAMES_CSV_HEADER}\n");
    let mut state = TrackerState::default();
    for (i, p) in paths.iter().enumerate() {
        let img = load_gray(p).with_context(|| format!("reading {}", p.display()))?;
        let t = Instant::now();
        let step = track_step_report(&state, &img, &cfg.tracker)?;
        let ms = t.elapsed().as_secs_f64() * 1e3;
        state = step.state;
        csv.push_str(&FrameRecord::from_step(i, &step, Roi::full(img.bounds()), ms).csv_row());
        csv.push('\n');
    }
    write_or_print(out, &csv)
}

fn bench(
    dataset: &Path,
    config: Option<&Path>,
    match_iou: Option<f64>,
    out: Option<&Path>,
    frames: Option<&Path>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(m) = match_iou {
        cfg.match_iou = m;
    }
    let run = run_benchmark(dataset, &cfg)?;
    println!("{}", summary(&run.report));
    if let Some(p) = out {
        fs::write(p, serde_json::to_string_pretty(&run.report)?).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = frames {
        write_frames_csv(&run.frames, p)?;
    }
    Ok(())
}

async fn serve(source: &Path, bind: SocketAddr, fps: f64, config: Option<&Path>, once: bool) -> Result<()> {
    let cfg = ServiceConfig {
        fps: Some(fps),
        tracker: load_config(config)?.tracker,
        loop_source: !once,
        ..ServiceConfig::default()
    };
    let svc = ringtrack_calib::start(FrameSource::from_dir(source)?, cfg, bind).await?;
    eprintln!("serving ws://{}/ws and http://{}/params, Ctrl-C to stop", svc.local_addr, svc.local_addr);
    tokio::signal::ctrl_c().await?;
    svc.shutdown().await?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Track { frames, config, out } => track(&frames, config.as_deref(), out.as_deref()),
        Command::Bench {
            dataset,
            config,
            match_iou,
            out,
            frames,
        } => bench(&dataset, config.as_deref(), match_iou, out.as_deref(), frames.as_deref()),
        Command::Sweep {
            dataset,
            param,
            values,
            fixed,
            config,
            out,
        } => {
            let base = load_config(config.as_deref())?;
            let param = match param {
                Param::Contour => SweepParam::ContourOverlap,
                Param::Ellipse => SweepParam::EllipseOverlap,
            };
            let rows = sweep_parameter(&dataset, &base, param, &parse_values(&values)?, fixed)?;
            for r in &rows {
                eprintln!("{:<6} {}", r.value, summary(&r.report));
            }
            match out {
                Some(p) => write_sweep_csv(&rows, &p)?,
                None => {
                    println!("{}", ringtrack::eval::SWEEP_CSV_HEADER);
                    for r in &rows {
                        println!("{}", r.csv_row());
                    }
                }
            }
            Ok(())
        }
        Command::Generate {
            out,
            seed,
            limit,
            case_frames,
        } => {
            let mut corpus = standard_corpus();
            if let Some(n) = limit {
                corpus.scene.n_frames = n.min(corpus.scene.n_frames);
            }
            let records = corpus.write(seed, &out)?;
            let present = records.iter().filter(|r| r.target_present).count();
            eprintln!("wrote {} frames ({present} with target) to {}", records.len(), out.display());
            if let Some(n) = case_frames {
                write_case_corpora(&out.join("cases"), n, seed)?;
                eprintln!("wrote case corpora to {}", out.join("cases").display());
            }
            Ok(())
        }
        Command::Serve {
            source,
            bind,
            fps,
            config,
            once,
        } => tokio::runtime::Runtime::new()?.block_on(serve(&source, bind, fps, config.as_deref(), once)),
    }
}

fn main() {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
