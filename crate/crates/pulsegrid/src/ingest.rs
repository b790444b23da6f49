//! Frame-data sources: synthetic pulse generator, ROI-mean trace files, raw
//! frame dumps with landmark sidecars, and reference HR series.
//!
//! Trace format (`pulsegrid-trace v1`): a header line
//! `# pulsegrid-trace v1; regions=<k>` followed by one line per frame,
//! either `frame_index,timestamp_ms,R1,G1,B1[,R2,G2,B2,...]` or
//! `frame_index,timestamp_ms,noface`. Landmark files carry
//! `frame_index,x1,y1,...,x68,y68` per row. Reference files carry
//! `time_s,hr_bpm` per line with `#` comments allowed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const NUM_LANDMARKS: usize = 68;

/// A raw RGB24 frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbFrame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::Format(format!(
                "frame byte length {} does not match 3*{width}*{height}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let off = 3 * (y * self.width + x);
        [self.data[off], self.data[off + 1], self.data[off + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let off = 3 * (y * self.width + x);
        self.data[off..off + 3].copy_from_slice(&rgb);
    }
}

/// Exactly 68 sub-pixel landmark coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<(f64, f64)>,
}

impl LandmarkSet {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() != NUM_LANDMARKS {
            return Err(Error::Format(format!(
                "landmark set must have {NUM_LANDMARKS} points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Format("non-finite landmark coordinate".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn get(&self, index: usize) -> (f64, f64) {
        self.points[index]
    }
}

/// Per-frame payload handed to the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum FramePayload {
    /// Pre-extracted per-region mean RGB triples, components in [0,255].
    RoiMeans(Vec<[f64; 3]>),
    /// A raw frame plus the landmarks located in it.
    RawFrame {
        frame: RgbFrame,
        landmarks: LandmarkSet,
    },
    /// No face was found in this frame.
    NoFace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub timestamp_ms: f64,
    pub payload: FramePayload,
}

/// Pull-based source of frames; owned by a single consumer.
pub type FrameStream = Box<dyn Iterator<Item = Result<FrameRecord>> + Send>;

pub fn stream_from_vec(records: Vec<FrameRecord>) -> FrameStream {
    Box::new(records.into_iter().map(Ok))
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

/// Cardiac swing on the red/green channels, in RGB units. Red and green move
/// in opposite directions so the pulse lands on the Lab a* axis the way
/// blood absorption does.
pub const CARDIAC_AMPLITUDE: f64 = 2.0;
/// Respiratory swing applied equally to all channels.
pub const RESP_AMPLITUDE: f64 = 0.5;
/// Baseline drift frequency in Hz.
pub const DRIFT_FREQ_HZ: f64 = 0.02;
const MID_GRAY: f64 = 128.0;

#[derive(Debug, Clone, Copy)]
pub struct SyntheticConfig {
    pub hr_bpm: f64,
    pub rr_brpm: f64,
    pub fs_hz: f64,
    pub duration_s: f64,
    pub noise_std: f64,
    pub baseline_drift_amp: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            hr_bpm: 72.0,
            rr_brpm: 15.0,
            fs_hz: 30.0,
            duration_s: 60.0,
            noise_std: 0.0,
            baseline_drift_amp: 0.0,
            seed: 1,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let c = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.into()))
            }
        };
        c((45.0..=240.0).contains(&self.hr_bpm), &format!("hr_bpm {} outside [45, 240]", self.hr_bpm))?;
        c((6.0..=42.0).contains(&self.rr_brpm), &format!("rr_brpm {} outside [6, 42]", self.rr_brpm))?;
        c(self.fs_hz.is_finite() && self.fs_hz > 0.0, "fs_hz must be > 0")?;
        c(self.duration_s.is_finite() && self.duration_s > 0.0, "duration_s must be > 0")?;
        c(self.noise_std >= 0.0, "noise_std must be >= 0")?;
        c(self.baseline_drift_amp >= 0.0, "baseline_drift_amp must be >= 0")?;
        c(
            self.hr_bpm / 60.0 < self.fs_hz / 2.0,
            &format!("hr {} bpm violates Nyquist at fs {}", self.hr_bpm, self.fs_hz),
        )
    }
}

/// Generates `round(fs * duration)` single-region frames carrying a cardiac
/// sinusoid (negatively correlated between red and green), a respiratory
/// sinusoid (also channel-asymmetric, so it survives onto the a* axis),
/// optional Gaussian noise, and optional slow drift. Deterministic for a
/// fixed seed.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<FrameRecord>> {
    cfg.validate()?;
    let n = (cfg.fs_hz * cfg.duration_s).round() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut noise = || {
        if cfg.noise_std > 0.0 {
            normal.sample(&mut rng)
        } else {
            0.0
        }
    };

    let two_pi = 2.0 * std::f64::consts::PI;
    let f_hr = cfg.hr_bpm / 60.0;
    let f_rr = cfg.rr_brpm / 60.0;

    let mut records = Vec::with_capacity(n as usize);
    for i in 0..n {
        let t = i as f64 / cfg.fs_hz;
        let pulse = (two_pi * f_hr * t).sin();
        let resp = (two_pi * f_rr * t).sin();
        let drift = cfg.baseline_drift_amp * (two_pi * DRIFT_FREQ_HZ * t).sin();
        let base = MID_GRAY + drift;
        let r = (base + CARDIAC_AMPLITUDE * pulse + RESP_AMPLITUDE * resp + noise())
            .clamp(0.0, 255.0);
        let g = (base - CARDIAC_AMPLITUDE * pulse - 0.5 * RESP_AMPLITUDE * resp + noise())
            .clamp(0.0, 255.0);
        let b = (base + RESP_AMPLITUDE * resp + noise()).clamp(0.0, 255.0);
        records.push(FrameRecord {
            frame_index: i,
            timestamp_ms: t * 1000.0,
            payload: FramePayload::RoiMeans(vec![[r, g, b]]),
        });
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Trace files
// ---------------------------------------------------------------------------

const TRACE_MAGIC: &str = "# pulsegrid-trace v1";

/// Writes records in trace format. Floats use shortest-round-trip
/// formatting, so re-reading reproduces them bit-exactly.
pub fn write_trace<W: Write>(mut out: W, records: &[FrameRecord]) -> Result<()> {
    let regions = records
        .iter()
        .find_map(|r| match &r.payload {
            FramePayload::RoiMeans(m) => Some(m.len()),
            _ => None,
        })
        .unwrap_or(1);
    writeln!(out, "{TRACE_MAGIC}; regions={regions}")?;
    for rec in records {
        match &rec.payload {
            FramePayload::RoiMeans(means) => {
                if means.len() != regions {
                    return Err(Error::Format(format!(
                        "frame {} has {} regions, header says {regions}",
                        rec.frame_index,
                        means.len()
                    )));
                }
                write!(out, "{},{}", rec.frame_index, rec.timestamp_ms)?;
                for m in means {
                    write!(out, ",{},{},{}", m[0], m[1], m[2])?;
                }
                writeln!(out)?;
            }
            FramePayload::NoFace => {
                writeln!(out, "{},{},noface", rec.frame_index, rec.timestamp_ms)?;
            }
            FramePayload::RawFrame { .. } => {
                return Err(Error::Format(
                    "raw frames cannot be serialized to trace format".into(),
                ));
            }
        }
    }
    Ok(())
}

pub fn write_trace_file(path: &Path, records: &[FrameRecord]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    write_trace(file, records)
}

/// Streaming trace reader; validates the header eagerly and each line as it
/// is pulled.
pub struct TraceReader {
    path: String,
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
    regions: usize,
    last_timestamp: Option<f64>,
}

impl TraceReader {
    pub fn regions(&self) -> usize {
        self.regions
    }
}

pub fn read_trace(path: &Path) -> Result<TraceReader> {
    let display = path.display().to_string();
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Format(format!("{display}: empty trace file")))?;
    let rest = header
        .strip_prefix(TRACE_MAGIC)
        .ok_or_else(|| Error::Format(format!("{display}: missing trace header")))?;
    let regions = rest
        .trim()
        .strip_prefix("; regions=")
        .and_then(|v| v.trim().parse::<usize>().ok())
        .ok_or_else(|| Error::Format(format!("{display}: malformed trace header")))?;
    if regions == 0 {
        return Err(Error::Format(format!("{display}: regions must be >= 1")));
    }
    Ok(TraceReader {
        path: display,
        lines,
        line_no: 1,
        regions,
        last_timestamp: None,
    })
}

impl TraceReader {
    fn parse_line(&mut self, line: &str) -> Result<FrameRecord> {
        let err = |msg: String| Error::Parse {
            path: self.path.clone(),
            line: self.line_no,
            msg,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 {
            return Err(err(format!("expected at least 3 fields, got {}", fields.len())));
        }
        let frame_index: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad frame index '{}'", fields[0])))?;
        let timestamp_ms: f64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad timestamp '{}'", fields[1])))?;
        if !timestamp_ms.is_finite() || timestamp_ms < 0.0 {
            return Err(err(format!("timestamp {timestamp_ms} must be finite and >= 0")));
        }
        if let Some(last) = self.last_timestamp {
            if timestamp_ms <= last {
                return Err(Error::Format(format!(
                    "{}:{}: timestamp {timestamp_ms} does not increase past {last}",
                    self.path, self.line_no
                )));
            }
        }
        self.last_timestamp = Some(timestamp_ms);

        let payload = if fields.len() == 3 && fields[2].trim() == "noface" {
            FramePayload::NoFace
        } else {
            let values = &fields[2..];
            if values.len() != 3 * self.regions {
                return Err(err(format!(
                    "expected {} channel values for {} regions, got {}",
                    3 * self.regions,
                    self.regions,
                    values.len()
                )));
            }
            let mut means = Vec::with_capacity(self.regions);
            for triple in values.chunks(3) {
                let mut rgb = [0.0f64; 3];
                for (slot, raw) in rgb.iter_mut().zip(triple) {
                    let v: f64 = raw
                        .trim()
                        .parse()
                        .map_err(|_| err(format!("bad channel value '{raw}'")))?;
                    if !(0.0..=255.0).contains(&v) {
                        return Err(err(format!("channel value {v} outside [0, 255]")));
                    }
                    *slot = v;
                }
                means.push(rgb);
            }
            FramePayload::RoiMeans(means)
        };
        Ok(FrameRecord {
            frame_index,
            timestamp_ms,
            payload,
        })
    }
}

impl Iterator for TraceReader {
    type Item = Result<FrameRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Some(self.parse_line(trimmed));
        }
    }
}

// ---------------------------------------------------------------------------
// Frame dumps with landmark sidecars
// ---------------------------------------------------------------------------

fn parse_ppm(path: &Path) -> Result<RgbFrame> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    let display = path.display();

    // Header tokens: magic, width, height, maxval. '#' comments allowed.
    let mut pos = 0usize;
    let mut tokens: Vec<String> = Vec::new();
    while tokens.len() < 4 && pos < raw.len() {
        while pos < raw.len() && raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < raw.len() && raw[pos] == b'#' {
            while pos < raw.len() && raw[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos > start {
            tokens.push(String::from_utf8_lossy(&raw[start..pos]).into_owned());
        }
    }
    if tokens.len() < 4 || tokens[0] != "P6" {
        return Err(Error::Format(format!("{display}: not a binary PPM (P6) file")));
    }
    let width: usize = tokens[1]
        .parse()
        .map_err(|_| Error::Format(format!("{display}: bad width")))?;
    let height: usize = tokens[2]
        .parse()
        .map_err(|_| Error::Format(format!("{display}: bad height")))?;
    let maxval: usize = tokens[3]
        .parse()
        .map_err(|_| Error::Format(format!("{display}: bad maxval")))?;
    if maxval != 255 {
        return Err(Error::Format(format!("{display}: only maxval 255 supported")));
    }
    // Exactly one whitespace byte separates the header from pixel data.
    pos += 1;
    let expected = 3 * width * height;
    if raw.len() < pos + expected {
        return Err(Error::Format(format!(
            "{display}: truncated pixel data ({} of {expected} bytes)",
            raw.len().saturating_sub(pos)
        )));
    }
    RgbFrame::new(width, height, raw[pos..pos + expected].to_vec())
}

fn parse_raw_rgb(path: &Path, width: usize, height: usize) -> Result<RgbFrame> {
    let mut data = Vec::new();
    File::open(path)?.read_to_end(&mut data)?;
    RgbFrame::new(width, height, data)
        .map_err(|_| Error::Format(format!("{}: byte length mismatch for {width}x{height}", path.display())))
}

fn read_landmark_rows(path: &Path) -> Result<std::collections::HashMap<u64, LandmarkSet>> {
    let display = path.display().to_string();
    let mut rows = std::collections::HashMap::new();
    for (idx, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: display.clone(),
            line: line_no,
            msg,
        };
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 1 + 2 * NUM_LANDMARKS {
            return Err(err(format!(
                "expected frame index plus {} coordinates, got {} fields",
                2 * NUM_LANDMARKS,
                fields.len()
            )));
        }
        let frame_index: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad frame index '{}'", fields[0])))?;
        let mut points = Vec::with_capacity(NUM_LANDMARKS);
        for pair in fields[1..].chunks(2) {
            let x: f64 = pair[0]
                .trim()
                .parse()
                .map_err(|_| err(format!("bad coordinate '{}'", pair[0])))?;
            let y: f64 = pair[1]
                .trim()
                .parse()
                .map_err(|_| err(format!("bad coordinate '{}'", pair[1])))?;
            points.push((x, y));
        }
        rows.insert(frame_index, LandmarkSet::new(points)?);
    }
    Ok(rows)
}

/// Pairs the frame files under `frames_dir` (sorted by name, enumerated as
/// frame indices) with landmark rows keyed by frame index. Frames without a
/// landmark row become NoFace records. Timestamps are synthesized at
/// `fs_hint` Hz.
pub fn read_frames_with_landmarks(
    frames_dir: &Path,
    landmarks_path: &Path,
    fs_hint: f64,
) -> Result<Vec<FrameRecord>> {
    if fs_hint <= 0.0 {
        return Err(Error::Config("fs_hint must be > 0".into()));
    }
    let mut frame_files: Vec<PathBuf> = std::fs::read_dir(frames_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("ppm") | Some("rgb")
            )
        })
        .collect();
    frame_files.sort();
    if frame_files.is_empty() {
        return Err(Error::Format(format!(
            "no .ppm or .rgb frames under {}",
            frames_dir.display()
        )));
    }

    // Raw frames need a sidecar with their dimensions.
    let raw_dims = if frame_files.iter().any(|p| p.extension().is_some_and(|e| e == "rgb")) {
        let sidecar = frames_dir.join("dimensions.txt");
        let text = std::fs::read_to_string(&sidecar).map_err(|_| {
            Error::Format(format!(
                "raw .rgb frames require {} with WIDTHxHEIGHT",
                sidecar.display()
            ))
        })?;
        let (w, h) = text
            .trim()
            .split_once('x')
            .ok_or_else(|| Error::Format(format!("{}: expected WIDTHxHEIGHT", sidecar.display())))?;
        let w: usize = w.trim().parse().map_err(|_| Error::Format("bad sidecar width".into()))?;
        let h: usize = h.trim().parse().map_err(|_| Error::Format("bad sidecar height".into()))?;
        Some((w, h))
    } else {
        None
    };

    let landmarks = read_landmark_rows(landmarks_path)?;
    let mut records = Vec::with_capacity(frame_files.len());
    for (i, file) in frame_files.iter().enumerate() {
        let frame_index = i as u64;
        let timestamp_ms = frame_index as f64 * 1000.0 / fs_hint;
        let payload = match landmarks.get(&frame_index) {
            Some(lm) => {
                let frame = if file.extension().is_some_and(|e| e == "ppm") {
                    parse_ppm(file)?
                } else {
                    let (w, h) = raw_dims.expect("sidecar parsed above");
                    parse_raw_rgb(file, w, h)?
                };
                FramePayload::RawFrame {
                    frame,
                    landmarks: lm.clone(),
                }
            }
            None => FramePayload::NoFace,
        };
        records.push(FrameRecord {
            frame_index,
            timestamp_ms,
            payload,
        });
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Reference series
// ---------------------------------------------------------------------------

/// Ground-truth HR series: (time_s, hr_bpm) pairs with non-decreasing times.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceSeries {
    pub samples: Vec<(f64, f64)>,
}

pub fn read_reference(path: &Path) -> Result<ReferenceSeries> {
    let display = path.display().to_string();
    let mut samples: Vec<(f64, f64)> = Vec::new();
    for (idx, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: display.clone(),
            line: line_no,
            msg,
        };
        let (t_raw, hr_raw) = trimmed
            .split_once(',')
            .ok_or_else(|| err("expected 'time_s,hr_bpm'".into()))?;
        let t: f64 = t_raw
            .trim()
            .parse()
            .map_err(|_| err(format!("bad time '{t_raw}'")))?;
        let hr: f64 = hr_raw
            .trim()
            .parse()
            .map_err(|_| err(format!("bad hr '{hr_raw}'")))?;
        if !(0.0 < hr && hr < 300.0) {
            return Err(err(format!("hr {hr} outside (0, 300)")));
        }
        if let Some(&(last_t, _)) = samples.last() {
            if t < last_t {
                return Err(err(format!("time {t} decreases past {last_t}")));
            }
        }
        samples.push((t, hr));
    }
    Ok(ReferenceSeries { samples })
}

pub fn write_reference_file(path: &Path, series: &ReferenceSeries) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for &(t, hr) in &series.samples {
        writeln!(out, "{t},{hr}")?;
    }
    Ok(())
}
