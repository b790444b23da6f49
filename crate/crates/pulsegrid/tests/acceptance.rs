//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `cargo test --test acceptance -- --nocapture`).

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pulsegrid::buffer::BufferState;
use pulsegrid::color;
use pulsegrid::eval;
use pulsegrid::filter::{magnitude_at, FilterWindow, FirFilter};
use pulsegrid::ingest::{generate_synthetic, stream_from_vec, FrameRecord, SyntheticConfig};
use pulsegrid::net::{self, StreamConfig};
use pulsegrid::pipeline::{self, DataContainer, Processor, ProcessorConfig, WallClockOptions};
use pulsegrid::spectral::{self, SpectralConfig, SpectralMethod};

fn pass(name: &str, detail: String) {
    println!("[PASS] {name}: {detail}");
}

// ---------------------------------------------------------------------------
// Criterion 1: color oracle
// ---------------------------------------------------------------------------

/// Independent straight-line implementation of the RGB -> Lab chain, kept
/// deliberately separate from the library code path.
mod color_oracle {
    pub fn rgb_to_lab(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
        fn lin(c: f64) -> f64 {
            let v = c / 255.0;
            if v > 0.04045 {
                ((v + 0.055) / 1.055).powf(2.4)
            } else {
                v / 12.92
            }
        }
        let (rl, gl, bl) = (lin(r), lin(g), lin(b));
        let x = 100.0 * (0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl);
        let y = 100.0 * (0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl);
        let z = 100.0 * (0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl);
        fn f(v: f64) -> f64 {
            if v > 0.008856 {
                v.powf(1.0 / 3.0)
            } else {
                7.787 * v + 4.0 / 29.0
            }
        }
        let (fx, fy, fz) = (f(x / 95.047), f(y / 100.0), f(z / 108.883));
        (116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
    }
}

#[test]
fn criterion_1_color_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    let mut max_err: f64 = 0.0;
    for _ in 0..1000 {
        let rgb = [
            rng.gen_range(0.0..=255.0),
            rng.gen_range(0.0..=255.0),
            rng.gen_range(0.0..=255.0),
        ];
        let (l, a, b) = color::rgb_to_lab(rgb).unwrap();
        let (ol, oa, ob) = color_oracle::rgb_to_lab(rgb[0], rgb[1], rgb[2]);
        max_err = max_err
            .max((l - ol).abs())
            .max((a - oa).abs())
            .max((b - ob).abs());
    }
    assert!(max_err < 1e-9, "oracle disagreement {max_err}");

    let (l, a, b) = color::rgb_to_lab([255.0, 255.0, 255.0]).unwrap();
    assert!((l - 100.0).abs() < 1e-3 && a.abs() < 1e-3 && b.abs() < 1e-3);
    let (l, a, b) = color::rgb_to_lab([0.0, 0.0, 0.0]).unwrap();
    assert!(l.abs() < 1e-3 && a.abs() < 1e-3 && b.abs() < 1e-3);

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    pass(
        "criterion 1 color oracle",
        format!("1000 triples, max |err| = {max_err:.2e}, {elapsed:?}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: filter design
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_filter_design() {
    // Exact linear-phase symmetry for every designed filter.
    for window in [FilterWindow::None, FilterWindow::Lanczos, FilterWindow::Hamming] {
        for (lo, hi) in [(0.75, 4.0), (0.8, 2.0), (0.0, 0.7)] {
            let f = FirFilter::design_bandpass(lo, hi, 30.0, 61, window).unwrap();
            for n in 0..61 {
                assert_eq!(
                    f.taps()[n],
                    f.taps()[60 - n],
                    "asymmetry at tap {n}, window {window:?}, band {lo}-{hi}"
                );
            }
        }
    }

    // Block-split invariance over 100 random split points.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let signal: Vec<f64> = (0..720).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let mut whole = FirFilter::design_bandpass(0.75, 4.0, 30.0, 61, FilterWindow::None).unwrap();
    let expect = whole.process_block(&signal);
    let mut max_dev: f64 = 0.0;
    for _ in 0..100 {
        let split = rng.gen_range(1..signal.len());
        let mut f = FirFilter::design_bandpass(0.75, 4.0, 30.0, 61, FilterWindow::None).unwrap();
        let mut got = f.process_block(&signal[..split]);
        got.extend(f.process_block(&signal[split..]));
        for (a, b) in expect.iter().zip(&got) {
            max_dev = max_dev.max((a - b).abs());
        }
    }
    assert!(max_dev <= 1e-12, "split deviation {max_dev}");

    // Stopband attenuation: steady-state RMS of a 0.2 Hz tone at most 0.1x
    // a 1.5 Hz tone (frequency-response oracle value 0.042).
    let rms_of = |freq: f64| {
        let mut f = FirFilter::design_bandpass(0.75, 4.0, 30.0, 61, FilterWindow::None).unwrap();
        let x: Vec<f64> = (0..3600)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / 30.0).sin())
            .collect();
        let y = f.process_block(&x);
        let tail = &y[600..];
        (tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt()
    };
    let ratio = rms_of(0.2) / rms_of(1.5);
    assert!(ratio <= 0.1, "attenuation ratio {ratio}");

    pass(
        "criterion 2 filter design",
        format!("symmetric, split dev {max_dev:.2e}, 0.2/1.5 Hz RMS ratio {ratio:.4}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: spectral equivalence
// ---------------------------------------------------------------------------

/// Direct O(n^2) DFT periodogram with the library's documented
/// normalization, written independently of the library FFT path.
fn oracle_periodogram(segment: &[f64], fft_len: usize, fs: f64) -> (Vec<f64>, Vec<f64>) {
    let k = segment.len();
    let mean = segment.iter().sum::<f64>() / k as f64;
    let window: Vec<f64> = (0..k)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (k - 1) as f64).cos())
        .collect();
    let wsum: f64 = window.iter().map(|w| w * w).sum();
    let x: Vec<f64> = segment
        .iter()
        .zip(&window)
        .map(|(s, w)| (s - mean) * w)
        .collect();
    let half = fft_len / 2;
    let mut freqs = Vec::with_capacity(half + 1);
    let mut power = Vec::with_capacity(half + 1);
    for bin in 0..=half {
        let mut re = 0.0;
        let mut im = 0.0;
        for (i, &v) in x.iter().enumerate() {
            let ang = 2.0 * std::f64::consts::PI * bin as f64 * i as f64 / fft_len as f64;
            re += v * ang.cos();
            im -= v * ang.sin();
        }
        let two_sided = bin != 0 && !(fft_len % 2 == 0 && bin == half);
        let scale = if two_sided { 2.0 } else { 1.0 };
        freqs.push(bin as f64 * fs / fft_len as f64);
        power.push(scale * (re * re + im * im) / (fft_len as f64 * wsum));
    }
    (freqs, power)
}

#[test]
fn criterion_3_spectral_equivalence() {
    let cfg = SpectralConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let signal: Vec<f64> = (0..360)
        .map(|i| (2.0 * std::f64::consts::PI * 1.3 * i as f64 / 30.0).sin() + rng.gen_range(-0.3..0.3))
        .collect();

    // Segment count: exactly 2 for 360 samples at 256/hop 56.
    assert_eq!(spectral::welch_segment_count(360, &cfg), 2);

    let welch = spectral::psd_welch(&signal, 30.0, &cfg).unwrap();
    assert!(!welch.single_segment_fallback);

    // Oracle: mean of independently computed per-segment periodograms.
    let (_, p0) = oracle_periodogram(&signal[0..256], 2048, 30.0);
    let (_, p1) = oracle_periodogram(&signal[56..312], 2048, 30.0);
    let mut max_err: f64 = 0.0;
    for i in 0..welch.power.len() {
        let oracle = (p0[i] + p1[i]) / 2.0;
        max_err = max_err.max((welch.power[i] - oracle).abs());
    }
    assert!(max_err < 1e-10, "welch vs oracle deviation {max_err}");

    pass(
        "criterion 3 spectral equivalence",
        format!("2 segments, max |welch - mean periodogram| = {max_err:.2e}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: end-to-end HR recovery
// ---------------------------------------------------------------------------

fn replay_config(method: SpectralMethod) -> ProcessorConfig {
    let mut cfg = ProcessorConfig::default();
    cfg.spectral.method = method;
    cfg
}

fn stable_hr_errors(records: Vec<FrameRecord>, method: SpectralMethod, truth: f64) -> Vec<f64> {
    let (_, estimates) = pipeline::run_replay(stream_from_vec(records), &replay_config(method))
        .expect("replay");
    estimates
        .iter()
        .filter(|row| row.stable)
        .filter_map(|row| row.hr_bpm)
        .map(|hr| (hr - truth).abs())
        .collect()
}

#[test]
fn criterion_4_end_to_end_hr() {
    let start = Instant::now();

    // Noiseless: every stable-phase estimate within +-1.5 bpm for both
    // methods at 50/72/90/120 bpm.
    let mut worst: f64 = 0.0;
    for &hr in &[50.0, 72.0, 90.0, 120.0] {
        let cfg = SyntheticConfig {
            hr_bpm: hr,
            duration_s: 60.0,
            ..Default::default()
        };
        let records = generate_synthetic(&cfg).unwrap();
        for method in [SpectralMethod::Fft, SpectralMethod::Welch] {
            let errs = stable_hr_errors(records.clone(), method, hr);
            assert!(!errs.is_empty(), "no stable estimates at {hr} bpm {method}");
            let max = errs.iter().cloned().fold(0.0, f64::max);
            assert!(max <= 1.5, "{method} at {hr} bpm: max error {max}");
            worst = worst.max(max);
        }
    }

    // Noisy at ~10 dB a*-SNR (noise_std 0.6 against the 1.89 a* cardiac
    // amplitude): Welch's stable-phase MAE must not exceed the DFT's over
    // 20 seeds.
    let mut mae_fft_total = 0.0;
    let mut mae_welch_total = 0.0;
    for seed in 0..20 {
        let cfg = SyntheticConfig {
            hr_bpm: 72.0,
            duration_s: 60.0,
            noise_std: 0.6,
            seed,
            ..Default::default()
        };
        let records = generate_synthetic(&cfg).unwrap();
        let errs_fft = stable_hr_errors(records.clone(), SpectralMethod::Fft, 72.0);
        let errs_welch = stable_hr_errors(records, SpectralMethod::Welch, 72.0);
        mae_fft_total += errs_fft.iter().sum::<f64>() / errs_fft.len() as f64;
        mae_welch_total += errs_welch.iter().sum::<f64>() / errs_welch.len() as f64;
    }
    let mae_fft = mae_fft_total / 20.0;
    let mae_welch = mae_welch_total / 20.0;
    assert!(
        mae_welch <= mae_fft,
        "welch MAE {mae_welch} must be <= fft MAE {mae_fft}"
    );

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    pass(
        "criterion 4 end-to-end HR",
        format!(
            "noiseless worst err {worst:.3} bpm; 10 dB SNR MAE welch {mae_welch:.3} <= fft {mae_fft:.3}; {elapsed:?}"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: state machine enumeration
// ---------------------------------------------------------------------------

/// Independent reference model of the warm-up/stability/reset rules,
/// written directly from the thresholds (90 / 240 / 60) rather than reusing
/// any library type.
#[derive(Clone, Copy, PartialEq, Debug)]
struct RefModel {
    len: usize,
    consecutive: usize,
    misses: u32,
    resets: u64,
}

impl RefModel {
    fn new() -> Self {
        Self {
            len: 0,
            consecutive: 0,
            misses: 0,
            resets: 0,
        }
    }

    fn push(&mut self) {
        self.len = (self.len + 1).min(360);
        self.consecutive += 1;
        self.misses = 0;
    }

    fn miss(&mut self) {
        self.consecutive = 0;
        self.misses += 1;
        if self.misses >= 60 {
            self.len = 0;
            self.misses = 0;
            self.resets += 1;
        }
    }

    fn state(&self) -> BufferState {
        if self.len < 90 {
            BufferState::Warming
        } else if self.consecutive >= 240 {
            BufferState::Stable
        } else {
            BufferState::HrReady
        }
    }
}

/// Drives the real pipeline state (buffer + miss counter via Processor) and
/// the reference model through the same event sequence.
fn check_sequence(events: &[bool]) {
    let mut processor = Processor::new(ProcessorConfig::default()).unwrap();
    let mut model = RefModel::new();
    let mut t = 0.0f64;
    for (i, &push) in events.iter().enumerate() {
        t += 1000.0 / 30.0;
        if push {
            let rec = FrameRecord {
                frame_index: i as u64,
                timestamp_ms: t,
                payload: pulsegrid::ingest::FramePayload::RoiMeans(vec![[120.0, 110.0, 100.0]]),
            };
            processor.tick(Some(rec), t);
            model.push();
        } else {
            processor.tick(None, t);
            model.miss();
        }
        assert_eq!(
            processor.buffer_state(),
            model.state(),
            "state diverged after event {i} of {events:?}"
        );
        assert_eq!(processor.buffer_len(), model.len, "length diverged at {i}");
        assert_eq!(processor.resets(), model.resets, "resets diverged at {i}");
    }
}

#[test]
fn criterion_5_state_machine() {
    let start = Instant::now();

    // Exhaustive enumeration of all push/miss sequences up to length 12.
    let mut sequences = 0u64;
    for len in 1..=12usize {
        for bits in 0..(1u32 << len) {
            let events: Vec<bool> = (0..len).map(|i| bits & (1 << i) != 0).collect();
            check_sequence(&events);
            sequences += 1;
        }
    }

    // Structured length-400 sequences crossing every threshold: a single
    // miss at each position of an otherwise uninterrupted run.
    for miss_at in (0..400).step_by(7) {
        let events: Vec<bool> = (0..400).map(|i| i != miss_at).collect();
        check_sequence(&events);
        sequences += 1;
    }
    // A 60-miss burst at interesting offsets (reset rule).
    for burst_at in [0usize, 89, 90, 239, 240, 300] {
        let events: Vec<bool> = (0..400)
            .map(|i| !(burst_at..burst_at + 60).contains(&i))
            .collect();
        check_sequence(&events);
        sequences += 1;
    }
    // Seeded random length-400 sequences.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..60 {
        let events: Vec<bool> = (0..400).map(|_| rng.gen_bool(0.8)).collect();
        check_sequence(&events);
        sequences += 1;
    }

    // Threshold spot checks: first HR flag at 90, stable at 240, reset at 60.
    let mut model = RefModel::new();
    for i in 0..400 {
        model.push();
        let expect = if i + 1 < 90 {
            BufferState::Warming
        } else if i + 1 < 240 {
            BufferState::HrReady
        } else {
            BufferState::Stable
        };
        assert_eq!(model.state(), expect);
    }

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    pass(
        "criterion 5 state machine",
        format!("{sequences} sequences vs reference model, {elapsed:?}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: throughput
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_throughput() {
    // 10k frames of roi-means input through the full signal chain in
    // replay mode, single task.
    let cfg = SyntheticConfig {
        duration_s: 10_000.0 / 30.0,
        noise_std: 0.3,
        ..Default::default()
    };
    let records = generate_synthetic(&cfg).unwrap();
    let n = records.len() as f64;

    let start = Instant::now();
    let (report, _) = pipeline::run_replay(
        stream_from_vec(records),
        &ProcessorConfig::default(),
    )
    .unwrap();
    let wall = start.elapsed().as_secs_f64();
    let fps = n / wall;
    assert!(fps >= 2000.0, "signal chain sustained only {fps:.0} fps");

    // Bench reporting covers each stage.
    assert_eq!(report.stage_stats.len(), 5);
    for stat in &report.stage_stats {
        assert!(stat.count > 0, "stage {} unused", stat.name);
    }

    pass(
        "criterion 6 throughput",
        format!(
            "{fps:.0} fps over {} frames (chain {:.4} ms/frame)",
            report.frames_processed,
            report.signal_chain_ms_per_frame()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: network contract
// ---------------------------------------------------------------------------

fn get_body(addr: std::net::SocketAddr, path: &str) -> (String, String) {
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(stream, "GET {path} HTTP/1.1\r\nHost: x\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    let (head, body) = response.split_once("\r\n\r\n").unwrap_or((&response, ""));
    (head.to_string(), body.to_string())
}

fn capture_mjpeg_parts(addr: std::net::SocketAddr, path: &str, boundary: &str, n: usize) -> Vec<Vec<u8>> {
    use std::io::BufRead;
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(stream, "GET {path} HTTP/1.1\r\nHost: x\r\n\r\n").unwrap();
    stream
        .set_read_timeout(Some(Duration::from_secs(10)))
        .unwrap();
    let mut reader = std::io::BufReader::new(stream);
    let mut line = String::new();
    loop {
        line.clear();
        reader.read_line(&mut line).unwrap();
        if line == "\r\n" {
            break;
        }
    }
    let mut parts = Vec::new();
    while parts.len() < n {
        line.clear();
        if reader.read_line(&mut line).unwrap() == 0 {
            break;
        }
        if line.trim() != format!("--{boundary}") {
            continue;
        }
        let mut content_length = 0usize;
        loop {
            line.clear();
            reader.read_line(&mut line).unwrap();
            let t = line.trim();
            if t.is_empty() {
                break;
            }
            if let Some(v) = t.strip_prefix("Content-Length:") {
                content_length = v.trim().parse().unwrap();
            }
        }
        let mut payload = vec![0u8; content_length];
        reader.read_exact(&mut payload).unwrap();
        parts.push(payload);
    }
    parts
}

fn p99(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((values.len() as f64) * 0.99).ceil() as usize - 1;
    values[idx.min(values.len() - 1)]
}

fn jitter_p99(intervals: &[f64], period_ms: f64) -> f64 {
    p99(intervals.iter().map(|i| (i - period_ms).abs()).collect())
}

fn run_wallclock_for(
    seconds: f64,
    net_cfg: Option<&StreamConfig>,
    load: impl FnOnce(std::net::SocketAddr) -> Vec<std::thread::JoinHandle<u64>>,
) -> (pipeline::RunReport, u64) {
    let records = generate_synthetic(&SyntheticConfig {
        duration_s: seconds + 5.0,
        ..Default::default()
    })
    .unwrap();
    let container = DataContainer::new();
    let mut cfg = ProcessorConfig::default();
    cfg.render_frames = true;
    cfg.canvas = (160, 120);

    let servers = net_cfg.map(|nc| net::start_servers(nc, container.clone()).unwrap());
    let loaders = servers
        .as_ref()
        .map(|s| load(s.rest_addr()))
        .unwrap_or_default();

    let opts = WallClockOptions {
        stop: Arc::new(AtomicBool::new(false)),
        max_duration: Some(Duration::from_secs_f64(seconds)),
    };
    let (report, _) = pipeline::run_wallclock(stream_from_vec(records), &cfg, container, opts).unwrap();

    let mut completed = 0u64;
    for t in loaders {
        completed += t.join().unwrap();
    }
    if let Some(s) = servers {
        s.shutdown();
    }
    (report, completed)
}

#[test]
fn criterion_7_network_contract() {
    // Serialization + MJPEG decodability under a live pipeline.
    let net_cfg = StreamConfig {
        rest_port: 0,
        stream_port: 0,
        ..Default::default()
    };
    let records = generate_synthetic(&SyntheticConfig {
        duration_s: 30.0,
        ..Default::default()
    })
    .unwrap();
    let container = DataContainer::new();
    let servers = net::start_servers(&net_cfg, container.clone()).unwrap();
    let rest_addr = servers.rest_addr();
    let stream_addr = servers.stream_addr();

    let mut cfg = ProcessorConfig::default();
    cfg.render_frames = true;
    cfg.canvas = (160, 120);
    let stop = Arc::new(AtomicBool::new(false));
    let opts = WallClockOptions {
        stop: Arc::clone(&stop),
        max_duration: Some(Duration::from_secs(6)),
    };
    let pipe_container = container.clone();
    let pipeline_thread = std::thread::spawn(move || {
        pipeline::run_wallclock(stream_from_vec(records), &cfg, pipe_container, opts).unwrap()
    });

    // Give the pipeline a moment to publish.
    std::thread::sleep(Duration::from_millis(500));

    let (head, body) = get_body(rest_addr, "/vhealth");
    assert!(head.starts_with("HTTP/1.1 200"), "{head}");
    let fields: Vec<&str> = body.split(',').collect();
    assert_eq!(fields.len(), 7, "body: {body}");
    for (i, field) in fields.iter().enumerate() {
        if i == 3 || i == 4 {
            assert!(*field == "0" || *field == "1", "flag field {i} = {field}");
        } else {
            let v: f64 = field.parse().expect("numeric field");
            assert!(v.is_finite());
            assert!(field.contains('.') && field.split('.').nth(1).unwrap().len() == 2);
        }
    }

    // 10 parts from each stream, each a standalone JPEG.
    for path in ["/mainstream", "/pulsestream"] {
        let parts = capture_mjpeg_parts(stream_addr, path, &net_cfg.boundary, 10);
        assert_eq!(parts.len(), 10, "{path}");
        for payload in &parts {
            let img = image::load_from_memory(payload).expect("standalone JPEG part");
            assert_eq!((img.width(), img.height()), (160, 120));
        }
    }

    stop.store(true, Ordering::SeqCst);
    let _ = pipeline_thread.join().unwrap();
    servers.shutdown();

    // Jitter under 200 concurrent REST clients vs idle.
    let (idle_report, _) = run_wallclock_for(5.0, None, |_| Vec::new());
    let idle_jitter = jitter_p99(&idle_report.tick_intervals_ms, 33.33);

    let (loaded_report, completed) = run_wallclock_for(
        5.0,
        Some(&StreamConfig {
            rest_port: 0,
            stream_port: 0,
            ..Default::default()
        }),
        |addr| {
            (0..200)
                .map(|_| {
                    std::thread::spawn(move || {
                        let mut ok = 0u64;
                        let deadline = Instant::now() + Duration::from_secs_f64(4.5);
                        while Instant::now() < deadline {
                            if let Ok(mut stream) = TcpStream::connect(addr) {
                                if write!(stream, "GET /vhealth HTTP/1.1\r\nHost: x\r\n\r\n").is_ok() {
                                    let mut response = String::new();
                                    if stream.read_to_string(&mut response).is_ok()
                                        && response.contains("200 OK")
                                    {
                                        let body = response.split("\r\n\r\n").nth(1).unwrap_or("");
                                        if body.split(',').count() == 7 {
                                            ok += 1;
                                        }
                                    }
                                }
                            }
                            std::thread::sleep(Duration::from_millis(20));
                        }
                        ok
                    })
                })
                .collect()
        },
    );
    let loaded_jitter = jitter_p99(&loaded_report.tick_intervals_ms, 33.33);
    assert!(completed >= 200, "only {completed} requests completed");
    let degradation = loaded_jitter - idle_jitter;
    assert!(
        degradation < 5.0,
        "p99 jitter degraded by {degradation:.2} ms (idle {idle_jitter:.2}, loaded {loaded_jitter:.2})"
    );

    // Wall-clock cadence: ~150 ticks in 5 s.
    assert!(
        (loaded_report.ticks as i64 - 150).abs() <= 2,
        "ticks {}",
        loaded_report.ticks
    );

    pass(
        "criterion 7 network contract",
        format!(
            "7-field body, 10+10 standalone JPEGs, {completed} concurrent requests, jitter +{degradation:.2} ms"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: metrics
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_metrics() {
    let report = eval::compute_metrics(&[(60.0, 62.0), (70.0, 66.0)]).unwrap();
    assert!((report.mae_bpm - 3.0).abs() < 1e-9);
    assert!((report.rmse_bpm - 10.0f64.sqrt()).abs() < 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let pairs: Vec<(f64, f64)> = (0..1000)
        .map(|_| (rng.gen_range(40.0..180.0), rng.gen_range(40.0..180.0)))
        .collect();
    for chunk in pairs.chunks(10) {
        let r = eval::compute_metrics(chunk).unwrap();
        assert!(r.rmse_bpm >= r.mae_bpm - 1e-12);
    }
    let r = eval::compute_metrics(&pairs).unwrap();
    assert!(r.rmse_bpm >= r.mae_bpm);

    pass(
        "criterion 8 metrics",
        format!("MAE 3.0 / RMSE sqrt(10) reproduced; RMSE >= MAE on 1000 pairs"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    for (name, noise, method) in [
        ("clean_fft", 0.0, SpectralMethod::Fft),
        ("noisy_welch", 0.9, SpectralMethod::Welch),
    ] {
        let records = generate_synthetic(&SyntheticConfig {
            duration_s: 30.0,
            noise_std: noise,
            seed: 77,
            ..Default::default()
        })
        .unwrap();
        let cfg = replay_config(method);

        let run = |records: Vec<FrameRecord>, path: &std::path::Path| {
            let (_, estimates) = pipeline::run_replay(stream_from_vec(records), &cfg).unwrap();
            pipeline::write_estimates(path, &estimates).unwrap();
        };
        let path_a = dir.path().join(format!("{name}_a.csv"));
        let path_b = dir.path().join(format!("{name}_b.csv"));
        run(records.clone(), &path_a);
        run(records, &path_b);

        let bytes_a = std::fs::read(&path_a).unwrap();
        let bytes_b = std::fs::read(&path_b).unwrap();
        assert!(!bytes_a.is_empty());
        assert_eq!(bytes_a, bytes_b, "{name}: replays must be byte-identical");
    }
    pass(
        "criterion 9 determinism",
        "two replays byte-identical for clean/fft and noisy/welch".into(),
    );
}
