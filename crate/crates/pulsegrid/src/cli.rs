//! Command-line entry points: `run`, `replay`, `eval`, `bench`, `gen`.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::config::{Config, SourceKind};
use crate::error::{Error, Result};
use crate::eval;
use crate::ingest::{self, FrameStream, ReferenceSeries, SyntheticConfig};
use crate::net;
use crate::pipeline::{self, DataContainer, WallClockOptions};

#[derive(Parser)]
#[command(name = "pulsegrid", version, about = "Real-time rPPG vitals engine")]
pub struct Cli {
    /// key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct SourceArgs {
    /// Frame source kind.
    #[arg(long, value_parser = ["synthetic", "trace", "frames"])]
    source: Option<String>,
    /// Trace file for --source trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Frame directory for --source frames.
    #[arg(long)]
    frames_dir: Option<PathBuf>,
    /// Landmark sidecar for --source frames.
    #[arg(long)]
    landmarks: Option<PathBuf>,
    /// Spectral method.
    #[arg(long, value_parser = ["fft", "welch"])]
    method: Option<String>,
    /// Synthetic generator seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Wall-clock service: capture, process, and serve REST + MJPEG.
    Run {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        rest_port: Option<u16>,
        #[arg(long)]
        stream_port: Option<u16>,
        /// Stop after this many seconds (runs until interrupt otherwise).
        #[arg(long)]
        duration_s: Option<f64>,
    },
    /// Deterministic logical-time replay; writes one estimate row per
    /// emission.
    Replay {
        #[command(flatten)]
        source: SourceArgs,
        /// Estimates output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score an estimates file against a reference HR series.
    Eval {
        /// Estimates file produced by replay.
        #[arg(long)]
        estimates: PathBuf,
        /// Reference series (time_s,hr_bpm lines).
        #[arg(long = "ref")]
        reference: PathBuf,
    },
    /// Per-stage timing benchmark over a synthetic trace.
    Bench {
        /// Number of frames to process.
        #[arg(long, default_value_t = 2000)]
        frames: u64,
        #[arg(long, value_parser = ["fft", "welch"])]
        method: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a synthetic trace (and optional reference file).
    Gen {
        /// Trace output path.
        #[arg(long)]
        out: PathBuf,
        /// Also write a constant-HR reference series here.
        #[arg(long)]
        ref_out: Option<PathBuf>,
        #[arg(long)]
        hr: Option<f64>,
        #[arg(long)]
        rr: Option<f64>,
        #[arg(long)]
        fs: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        drift: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Parses arguments and runs; returns the process exit code
/// (0 success, 1 usage, 2 runtime).
pub fn main_impl<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Run {
            source,
            rest_port,
            stream_port,
            duration_s,
        } => {
            apply_source_args(&mut cfg, &source)?;
            if let Some(p) = rest_port {
                cfg.net.rest_port = p;
            }
            if let Some(p) = stream_port {
                cfg.net.stream_port = p;
            }
            if let Some(d) = duration_s {
                cfg.duration_s = Some(d);
            }
            cmd_run(&cfg)
        }
        Command::Replay { source, out } => {
            apply_source_args(&mut cfg, &source)?;
            if let Some(o) = out {
                cfg.out_path = Some(o);
            }
            cmd_replay(&cfg)
        }
        Command::Eval {
            estimates,
            reference,
        } => cmd_eval(&estimates, &reference),
        Command::Bench {
            frames,
            method,
            seed,
        } => {
            if let Some(m) = method {
                cfg.apply("method", &m)?;
            }
            if let Some(s) = seed {
                cfg.synthetic.seed = s;
            }
            cmd_bench(&cfg, frames)
        }
        Command::Gen {
            out,
            ref_out,
            hr,
            rr,
            fs,
            duration,
            noise,
            drift,
            seed,
        } => {
            let mut syn = cfg.synthetic;
            if let Some(v) = hr {
                syn.hr_bpm = v;
            }
            if let Some(v) = rr {
                syn.rr_brpm = v;
            }
            if let Some(v) = fs {
                syn.fs_hz = v;
            }
            if let Some(v) = duration {
                syn.duration_s = v;
            }
            if let Some(v) = noise {
                syn.noise_std = v;
            }
            if let Some(v) = drift {
                syn.baseline_drift_amp = v;
            }
            if let Some(v) = seed {
                syn.seed = v;
            }
            cmd_gen(&syn, &out, ref_out.as_deref())
        }
    }
}

fn apply_source_args(cfg: &mut Config, args: &SourceArgs) -> Result<()> {
    if let Some(s) = &args.source {
        cfg.apply("source", s)?;
    }
    if let Some(t) = &args.trace {
        cfg.trace_path = Some(t.clone());
        if args.source.is_none() {
            cfg.source = SourceKind::Trace;
        }
    }
    if let Some(d) = &args.frames_dir {
        cfg.frames_dir = Some(d.clone());
        if args.source.is_none() {
            cfg.source = SourceKind::Frames;
        }
    }
    if let Some(l) = &args.landmarks {
        cfg.landmarks_path = Some(l.clone());
    }
    if let Some(m) = &args.method {
        cfg.apply("method", m)?;
    }
    if let Some(s) = args.seed {
        cfg.synthetic.seed = s;
    }
    Ok(())
}

fn build_source(cfg: &Config) -> Result<FrameStream> {
    match cfg.source {
        SourceKind::Synthetic => Ok(ingest::stream_from_vec(ingest::generate_synthetic(
            &cfg.synthetic,
        )?)),
        SourceKind::Trace => {
            let path = cfg
                .trace_path
                .as_ref()
                .ok_or_else(|| Error::Config("trace source needs --trace PATH".into()))?;
            Ok(Box::new(ingest::read_trace(path)?))
        }
        SourceKind::Frames => {
            let dir = cfg
                .frames_dir
                .as_ref()
                .ok_or_else(|| Error::Config("frames source needs --frames-dir".into()))?;
            let landmarks = cfg
                .landmarks_path
                .as_ref()
                .ok_or_else(|| Error::Config("frames source needs --landmarks".into()))?;
            Ok(ingest::stream_from_vec(ingest::read_frames_with_landmarks(
                dir,
                landmarks,
                cfg.processor.nominal_fs_hz,
            )?))
        }
    }
}

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

extern "C" fn on_sigint(_: libc::c_int) {
    INTERRUPTED.store(true, Ordering::SeqCst);
}

fn install_sigint(stop: Arc<AtomicBool>) {
    unsafe {
        libc::signal(libc::SIGINT, on_sigint as *const () as libc::sighandler_t);
        libc::signal(libc::SIGTERM, on_sigint as *const () as libc::sighandler_t);
    }
    std::thread::spawn(move || loop {
        if INTERRUPTED.load(Ordering::SeqCst) {
            stop.store(true, Ordering::SeqCst);
            return;
        }
        if stop.load(Ordering::SeqCst) {
            return;
        }
        std::thread::sleep(Duration::from_millis(50));
    });
}

fn cmd_run(cfg: &Config) -> Result<()> {
    let source = build_source(cfg)?;
    let mut processor_cfg = cfg.processor.clone();
    processor_cfg.render_frames = true;

    let container = DataContainer::new();
    let servers = net::start_servers(&cfg.net, container.clone())?;
    println!(
        "REST:   http://{}/vhealth\nstream: http://{}/mainstream | /pulsestream",
        servers.rest_addr(),
        servers.stream_addr()
    );

    let stop = Arc::new(AtomicBool::new(false));
    install_sigint(Arc::clone(&stop));
    let opts = WallClockOptions {
        stop: Arc::clone(&stop),
        max_duration: cfg.duration_s.map(Duration::from_secs_f64),
    };
    let (report, _) = pipeline::run_wallclock(source, &processor_cfg, container, opts)?;
    stop.store(true, Ordering::SeqCst);
    servers.shutdown();
    print!("{}", report.format());
    Ok(())
}

fn cmd_replay(cfg: &Config) -> Result<()> {
    let source = build_source(cfg)?;
    let mut processor_cfg = cfg.processor.clone();
    processor_cfg.render_frames = false;
    let (report, estimates) = pipeline::run_replay(source, &processor_cfg)?;
    match &cfg.out_path {
        Some(path) => {
            pipeline::write_estimates(path, &estimates)?;
            eprint!("{}", report.format());
        }
        None => {
            for row in &estimates {
                println!("{}", row.to_line());
            }
            eprint!("{}", report.format());
        }
    }
    Ok(())
}

fn cmd_eval(estimates_path: &std::path::Path, reference_path: &std::path::Path) -> Result<()> {
    let rows = pipeline::read_estimates(estimates_path)?;
    let estimates: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.hr_bpm.map(|hr| (r.t_s, hr)))
        .collect();
    let reference = ingest::read_reference(reference_path)?;
    let aligned = eval::align_series(&estimates, &reference)?;
    let report = eval::compute_metrics(&aligned.pairs)?;
    let label = estimates_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "estimates".into());
    print!("{}", eval::format_report_table(&[(label, report)]));
    println!("dropped_out_of_span={}", aligned.dropped);
    Ok(())
}

fn cmd_bench(cfg: &Config, frames: u64) -> Result<()> {
    let mut syn = cfg.synthetic;
    syn.duration_s = frames as f64 / syn.fs_hz;
    let records = ingest::generate_synthetic(&syn)?;
    let mut processor_cfg = cfg.processor.clone();
    processor_cfg.render_frames = false;
    let report = eval::run_benchmark(&processor_cfg, records)?;
    print!("{}", eval::format_bench_table(&report));
    Ok(())
}

fn cmd_gen(
    syn: &SyntheticConfig,
    out: &std::path::Path,
    ref_out: Option<&std::path::Path>,
) -> Result<()> {
    let records = ingest::generate_synthetic(syn)?;
    ingest::write_trace_file(out, &records)?;
    println!("wrote {} frames to {}", records.len(), out.display());
    if let Some(ref_path) = ref_out {
        let mut samples = Vec::new();
        let mut t = 0.0;
        while t <= syn.duration_s {
            samples.push((t, syn.hr_bpm));
            t += 1.0;
        }
        ingest::write_reference_file(ref_path, &ReferenceSeries { samples })?;
        println!("wrote reference to {}", ref_path.display());
    }
    Ok(())
}
