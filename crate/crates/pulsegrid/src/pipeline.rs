//! Fixed-cadence processing pipeline: latest-frame capture, the per-tick
//! signal chain, no-face reset accounting, and publication of results into
//! the shared `DataContainer`.
//!
//! Two clock modes drive the same per-tick state machine: wall-clock mode
//! schedules ticks on the nominal period with a capture thread feeding a
//! single-slot latest-frame mailbox, while logical replay mode consumes one
//! frame per tick using the frame timestamps as the clock, which makes
//! replays deterministic.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::buffer::{BufferPolicy, BufferState, SignalBuffer};
use crate::color;
use crate::error::{Error, Result};
use crate::filter::{
    FilterWindow, FirFilter, DEFAULT_TAPS, HR_BANDPASS_HZ, HR_DISPLAY_HZ, RR_LOWPASS_HZ,
};
use crate::ingest::{FramePayload, FrameRecord, FrameStream, LandmarkSet, RgbFrame};
use crate::roi::{self, AlphaBeta, RegionMean, RegionSpec, RoiSample};
use crate::spectral::{self, QualityFlags, SpectralConfig, SpectralMethod};

/// Tick cadence and the reset rule.
#[derive(Debug, Clone, Copy)]
pub struct TickConfig {
    pub tick_period_ms: f64,
    pub noface_reset_threshold: u32,
}

impl Default for TickConfig {
    fn default() -> Self {
        Self {
            tick_period_ms: 33.33,
            noface_reset_threshold: 60,
        }
    }
}

/// The seven-value vitals record served over the network.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VitalsRecord {
    pub g_hr: f64,
    pub g_br: f64,
    pub g_o2: f64,
    pub g_seeuser: u8,
    pub g_stable: u8,
    /// Latest HR-display-band filtered BVP sample.
    pub g_hr_graph: f64,
    /// Latest RR-band filtered sample.
    pub g_br_graph: f64,
}

// ---------------------------------------------------------------------------
// DataContainer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
struct ContainerState {
    vitals: VitalsRecord,
    main_frame: Option<Arc<RgbFrame>>,
    pulse_frame: Option<Arc<RgbFrame>>,
    frame_counter: u64,
    last_update_ms: f64,
    seq: u64,
}

/// A consistent copy of the container at one publication.
#[derive(Debug, Clone)]
pub struct ContainerSnapshot {
    pub vitals: VitalsRecord,
    pub main_frame: Option<Arc<RgbFrame>>,
    pub pulse_frame: Option<Arc<RgbFrame>>,
    pub frame_counter: u64,
    pub last_update_ms: f64,
    pub seq: u64,
}

#[derive(Default)]
struct ContainerShared {
    state: Mutex<ContainerState>,
    new_frame: Condvar,
}

/// Single-writer shared state: the processing task publishes whole updates
/// under one lock, readers take snapshots, so no reader can observe fields
/// from two different ticks.
#[derive(Clone, Default)]
pub struct DataContainer {
    shared: Arc<ContainerShared>,
}

impl DataContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(
        &self,
        vitals: VitalsRecord,
        main_frame: Option<Arc<RgbFrame>>,
        pulse_frame: Option<Arc<RgbFrame>>,
        frame_counter: u64,
        last_update_ms: f64,
    ) {
        let mut state = self.shared.state.lock().expect("container poisoned");
        state.vitals = vitals;
        state.main_frame = main_frame;
        state.pulse_frame = pulse_frame;
        state.frame_counter = frame_counter;
        state.last_update_ms = last_update_ms;
        state.seq += 1;
        drop(state);
        self.shared.new_frame.notify_all();
    }

    pub fn snapshot(&self) -> ContainerSnapshot {
        let state = self.shared.state.lock().expect("container poisoned");
        ContainerSnapshot {
            vitals: state.vitals,
            main_frame: state.main_frame.clone(),
            pulse_frame: state.pulse_frame.clone(),
            frame_counter: state.frame_counter,
            last_update_ms: state.last_update_ms,
            seq: state.seq,
        }
    }

    /// Blocks until a publication newer than `last_seq` arrives, or the
    /// timeout elapses (returning the latest state either way when newer,
    /// `None` on timeout).
    pub fn wait_newer(&self, last_seq: u64, timeout: Duration) -> Option<ContainerSnapshot> {
        let mut state = self.shared.state.lock().expect("container poisoned");
        let deadline = Instant::now() + timeout;
        while state.seq <= last_seq {
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            let (guard, _) = self
                .shared
                .new_frame
                .wait_timeout(state, deadline - now)
                .expect("container poisoned");
            state = guard;
        }
        Some(ContainerSnapshot {
            vitals: state.vitals,
            main_frame: state.main_frame.clone(),
            pulse_frame: state.pulse_frame.clone(),
            frame_counter: state.frame_counter,
            last_update_ms: state.last_update_ms,
            seq: state.seq,
        })
    }
}

// ---------------------------------------------------------------------------
// Latest-frame mailbox
// ---------------------------------------------------------------------------

/// Single-slot mailbox between the capture task and the processing task.
/// Writes overwrite; an overwritten frame counts as a drop.
#[derive(Default)]
pub struct FrameMailbox {
    slot: Mutex<Option<FrameRecord>>,
    dropped: AtomicU64,
    closed: AtomicBool,
}

impl FrameMailbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn offer(&self, frame: FrameRecord) {
        let mut slot = self.slot.lock().expect("mailbox poisoned");
        if slot.replace(frame).is_some() {
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
    }

    /// The most recent unconsumed frame, or `None` when nothing new arrived.
    pub fn take(&self) -> Option<FrameRecord> {
        self.slot.lock().expect("mailbox poisoned").take()
    }

    pub fn close(&self) {
        self.closed.store(true, Ordering::Release);
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Acquire)
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }
}

// ---------------------------------------------------------------------------
// Estimates
// ---------------------------------------------------------------------------

/// One emitted estimate: `t_s,hr,rr,stable` with absent values as `na`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRow {
    pub t_s: f64,
    pub hr_bpm: Option<f64>,
    pub rr_brpm: Option<f64>,
    pub stable: bool,
}

impl EstimateRow {
    pub fn to_line(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "na".into());
        format!(
            "{:.3},{},{},{}",
            self.t_s,
            fmt(self.hr_bpm),
            fmt(self.rr_brpm),
            u8::from(self.stable)
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!(
                "estimate row needs 4 fields, got {}",
                fields.len()
            )));
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s == "na" {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::Format(format!("bad estimate value '{s}'")))
            }
        };
        Ok(Self {
            t_s: fields[0]
                .parse()
                .map_err(|_| Error::Format(format!("bad time '{}'", fields[0])))?,
            hr_bpm: opt(fields[1])?,
            rr_brpm: opt(fields[2])?,
            stable: fields[3] == "1",
        })
    }
}

pub fn write_estimates(path: &Path, rows: &[EstimateRow]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for row in rows {
        writeln!(out, "{}", row.to_line())?;
    }
    Ok(())
}

pub fn read_estimates(path: &Path) -> Result<Vec<EstimateRow>> {
    let mut rows = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        rows.push(EstimateRow::parse(trimmed)?);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Processor
// ---------------------------------------------------------------------------

/// Everything the per-tick state machine needs.
#[derive(Debug, Clone)]
pub struct ProcessorConfig {
    pub regions: Vec<RegionSpec>,
    pub alpha: f64,
    pub beta: f64,
    pub filter_window: FilterWindow,
    pub n_taps: usize,
    pub hr_filter_band_hz: (f64, f64),
    pub display_filter_band_hz: (f64, f64),
    pub rr_cutoff_hz: f64,
    pub spectral: SpectralConfig,
    pub tick: TickConfig,
    pub buffer_policy: BufferPolicy,
    /// Nominal capture rate, the fallback when timestamps are too sparse.
    pub nominal_fs_hz: f64,
    /// Served SpO2 value; the chain does not compute oxygen saturation.
    pub spo2_stub: f64,
    /// Render main/pulse frames on each tick (off in replay benchmarks).
    pub render_frames: bool,
    pub canvas: (usize, usize),
}

impl Default for ProcessorConfig {
    fn default() -> Self {
        Self {
            regions: roi::default_regions(),
            alpha: AlphaBeta::DEFAULT_ALPHA,
            beta: AlphaBeta::DEFAULT_BETA,
            filter_window: FilterWindow::None,
            n_taps: DEFAULT_TAPS,
            hr_filter_band_hz: HR_BANDPASS_HZ,
            display_filter_band_hz: HR_DISPLAY_HZ,
            rr_cutoff_hz: RR_LOWPASS_HZ,
            spectral: SpectralConfig::default(),
            tick: TickConfig::default(),
            buffer_policy: BufferPolicy::default(),
            nominal_fs_hz: 30.0,
            spo2_stub: 0.0,
            render_frames: false,
            canvas: (320, 240),
        }
    }
}

pub const STAGE_NAMES: [&str; 5] = [
    "roi_means",
    "rgb_to_bvp",
    "buffering",
    "filtering",
    "spectral",
];

#[derive(Debug, Clone, Copy, Default)]
struct StageAccum {
    count: u64,
    total_ms: f64,
    max_ms: f64,
}

impl StageAccum {
    fn record(&mut self, elapsed: Duration) {
        let ms = elapsed.as_secs_f64() * 1000.0;
        self.count += 1;
        self.total_ms += ms;
        self.max_ms = self.max_ms.max(ms);
    }
}

/// Snapshot of one stage's timing.
#[derive(Debug, Clone)]
pub struct StageStat {
    pub name: &'static str,
    pub count: u64,
    pub mean_ms: f64,
    pub max_ms: f64,
}

/// Aggregate report for one run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub ticks: u64,
    pub frames_processed: u64,
    pub drops: u64,
    pub resets: u64,
    pub emissions: u64,
    pub stage_stats: Vec<StageStat>,
    pub wall_s: f64,
    /// Measured tick-to-tick intervals (wall-clock mode only).
    pub tick_intervals_ms: Vec<f64>,
}

impl RunReport {
    pub fn format(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "ticks={} frames={} drops={} resets={} emissions={} wall_s={:.3}\n",
            self.ticks, self.frames_processed, self.drops, self.resets, self.emissions, self.wall_s
        ));
        out.push_str(&format!(
            "{:<12} {:>10} {:>12} {:>12}\n",
            "stage", "count", "mean ms", "max ms"
        ));
        for s in &self.stage_stats {
            out.push_str(&format!(
                "{:<12} {:>10} {:>12.6} {:>12.6}\n",
                s.name, s.count, s.mean_ms, s.max_ms
            ));
        }
        out
    }

    /// Mean per-frame cost of the whole signal chain in milliseconds.
    pub fn signal_chain_ms_per_frame(&self) -> f64 {
        if self.frames_processed == 0 {
            return 0.0;
        }
        let total: f64 = self
            .stage_stats
            .iter()
            .map(|s| s.mean_ms * s.count as f64)
            .sum();
        total / self.frames_processed as f64
    }
}

/// Outcome of one tick.
#[derive(Debug, Clone, Default)]
pub struct TickOutcome {
    pub emitted: Option<EstimateRow>,
    pub flags: QualityFlags,
}

/// The per-tick state machine: ROI means -> Lab a* -> rolling buffer ->
/// streaming FIR filters -> (on each due emission) spectral HR/RR.
pub struct Processor {
    cfg: ProcessorConfig,
    alpha_beta: AlphaBeta,
    buffer: SignalBuffer,
    hr_filter: FirFilter,
    display_filter: FirFilter,
    rr_filter: FirFilter,
    /// HR-band filtered samples aligned one-to-one with the buffer.
    hr_window: VecDeque<(f64, bool)>,
    /// RR-band filtered samples aligned one-to-one with the buffer.
    rr_window: VecDeque<(f64, bool)>,
    fs_current: f64,
    prev_hr: Option<f64>,
    noface_streak: u32,
    resets: u64,
    emissions: u64,
    ticks: u64,
    frames_processed: u64,
    last_frame_t_ms: Option<f64>,
    last_landmarks: Option<LandmarkSet>,
    last_main_frame: Option<Arc<RgbFrame>>,
    vitals: VitalsRecord,
    stages: [StageAccum; STAGE_NAMES.len()],
}

impl Processor {
    pub fn new(cfg: ProcessorConfig) -> Result<Self> {
        cfg.buffer_policy.validate()?;
        cfg.spectral.validate()?;
        if cfg.regions.is_empty() {
            return Err(Error::Config("no regions configured".into()));
        }
        if cfg.tick.tick_period_ms <= 0.0 {
            return Err(Error::Config("tick period must be > 0".into()));
        }
        let fs = cfg.nominal_fs_hz;
        let hr_filter = FirFilter::design_bandpass(
            cfg.hr_filter_band_hz.0,
            cfg.hr_filter_band_hz.1,
            fs,
            cfg.n_taps,
            cfg.filter_window,
        )?;
        let display_filter = FirFilter::design_bandpass(
            cfg.display_filter_band_hz.0,
            cfg.display_filter_band_hz.1,
            fs,
            cfg.n_taps,
            cfg.filter_window,
        )?;
        let rr_filter =
            FirFilter::design_lowpass(cfg.rr_cutoff_hz, fs, cfg.n_taps, cfg.filter_window)?;
        let alpha_beta = AlphaBeta::new(cfg.alpha, cfg.beta)?;
        let buffer = SignalBuffer::new(cfg.buffer_policy);
        let vitals = VitalsRecord {
            g_o2: cfg.spo2_stub,
            ..Default::default()
        };
        Ok(Self {
            alpha_beta,
            buffer,
            hr_filter,
            display_filter,
            rr_filter,
            hr_window: VecDeque::new(),
            rr_window: VecDeque::new(),
            fs_current: fs,
            prev_hr: None,
            noface_streak: 0,
            resets: 0,
            emissions: 0,
            ticks: 0,
            frames_processed: 0,
            last_frame_t_ms: None,
            last_landmarks: None,
            last_main_frame: None,
            vitals,
            stages: Default::default(),
            cfg,
        })
    }

    pub fn vitals(&self) -> VitalsRecord {
        self.vitals
    }

    pub fn buffer_state(&self) -> BufferState {
        self.buffer.state()
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn noface_streak(&self) -> u32 {
        self.noface_streak
    }

    pub fn resets(&self) -> u64 {
        self.resets
    }

    pub fn last_main_frame(&self) -> Option<Arc<RgbFrame>> {
        self.last_main_frame.clone()
    }

    /// Renders the pulse-visualization frame for the current state.
    pub fn render_pulse(&self) -> RgbFrame {
        render_pulse_frame(
            self.last_landmarks.as_ref(),
            &self.cfg.regions,
            self.vitals.g_hr_graph,
            self.cfg.canvas,
        )
    }

    fn stage<T>(&mut self, idx: usize, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        self.stages[idx].record(start.elapsed());
        out
    }

    /// Advances the pipeline by one tick. `frame` is the latest captured
    /// frame, or `None` when nothing new arrived; `now_ms` is the tick clock
    /// (frame timestamps in replay, wall elapsed in wall-clock mode).
    /// Internal stage failures set quality flags instead of aborting.
    pub fn tick(&mut self, frame: Option<FrameRecord>, now_ms: f64) -> TickOutcome {
        self.ticks += 1;
        match frame {
            None => self.miss_tick(),
            Some(rec) => match rec.payload {
                FramePayload::NoFace => self.miss_tick(),
                FramePayload::RoiMeans(ref means) => {
                    let sample = self.stage(0, |_| RoiSample {
                        regions: means
                            .iter()
                            .map(|&rgb| RegionMean {
                                rgb,
                                degenerate: false,
                            })
                            .collect(),
                        timestamp_ms: rec.timestamp_ms,
                        frame_index: rec.frame_index,
                    });
                    self.face_tick(sample, now_ms)
                }
                FramePayload::RawFrame {
                    ref frame,
                    ref landmarks,
                } => {
                    let dt_frames = match self.last_frame_t_ms {
                        Some(last) => {
                            ((rec.timestamp_ms - last) / self.cfg.tick.tick_period_ms).max(1e-6)
                        }
                        None => 1.0,
                    };
                    let sample = self.stage(0, |p| -> Result<RoiSample> {
                        let smoothed = p.alpha_beta.step(landmarks, dt_frames)?;
                        let sample = roi::extract_region_means(
                            frame,
                            &smoothed,
                            &p.cfg.regions,
                            rec.timestamp_ms,
                            rec.frame_index,
                        )?;
                        p.last_landmarks = Some(smoothed);
                        Ok(sample)
                    });
                    match sample {
                        Ok(sample) => {
                            if self.cfg.render_frames {
                                self.last_main_frame = Some(Arc::new(crop_to_landmarks(
                                    frame,
                                    self.last_landmarks.as_ref().expect("set above"),
                                )));
                            }
                            self.face_tick(sample, now_ms)
                        }
                        Err(_) => {
                            let mut outcome = self.miss_tick();
                            outcome.flags.stage_error = true;
                            outcome
                        }
                    }
                }
            },
        }
    }

    fn miss_tick(&mut self) -> TickOutcome {
        self.noface_streak += 1;
        self.buffer.mark_interruption();
        if self.noface_streak >= self.cfg.tick.noface_reset_threshold {
            self.full_reset();
        }
        self.vitals.g_stable = u8::from(self.buffer.state() == BufferState::Stable);
        TickOutcome::default()
    }

    fn full_reset(&mut self) {
        self.buffer.reset();
        self.hr_filter.reset_register();
        self.display_filter.reset_register();
        self.rr_filter.reset_register();
        self.hr_window.clear();
        self.rr_window.clear();
        self.alpha_beta.reset();
        self.prev_hr = None;
        self.last_frame_t_ms = None;
        self.last_landmarks = None;
        self.last_main_frame = None;
        self.vitals = VitalsRecord {
            g_o2: self.cfg.spo2_stub,
            ..Default::default()
        };
        self.noface_streak = 0;
        self.resets += 1;
    }

    fn face_tick(&mut self, sample: RoiSample, now_ms: f64) -> TickOutcome {
        let mut flags = QualityFlags::default();
        let t_ms = sample.timestamp_ms;

        if sample.regions.iter().any(|r| r.degenerate) {
            flags.roi_degenerate = true;
        }
        let a_star = match self.stage(1, |_| -> Result<f64> {
            let rgb = roi::combine_regions(&sample)?;
            let (_, a, _) = color::rgb_to_lab(rgb)?;
            Ok(a)
        }) {
            Ok(a) => a,
            Err(Error::NoSignal(_)) => {
                // Every region degenerate: no usable sample this tick. The
                // face is present, so the no-face streak is untouched, but
                // stability is revoked.
                self.buffer.mark_interruption();
                flags.roi_degenerate = true;
                flags.stage_error = true;
                self.vitals.g_stable = u8::from(self.buffer.state() == BufferState::Stable);
                return TickOutcome {
                    emitted: None,
                    flags,
                };
            }
            Err(_) => {
                flags.stage_error = true;
                return TickOutcome {
                    emitted: None,
                    flags,
                };
            }
        };

        let push_ok = self.stage(2, |p| {
            if let Some(last) = p.last_frame_t_ms {
                if t_ms - last > 2.0 * p.cfg.tick.tick_period_ms {
                    p.buffer.mark_interruption();
                }
            }
            p.buffer.push(a_star, t_ms).is_ok()
        });
        if !push_ok {
            flags.stage_error = true;
            return TickOutcome {
                emitted: None,
                flags,
            };
        }
        self.last_frame_t_ms = Some(t_ms);
        self.noface_streak = 0;
        self.frames_processed += 1;

        self.stage(3, |p| {
            let capacity = p.buffer.policy().capacity;
            let (hr_y, hr_t) = p.hr_filter.process_sample(a_star);
            let (disp_y, _) = p.display_filter.process_sample(a_star);
            let (rr_y, rr_t) = p.rr_filter.process_sample(a_star);
            if p.hr_window.len() == capacity {
                p.hr_window.pop_front();
            }
            if p.rr_window.len() == capacity {
                p.rr_window.pop_front();
            }
            p.hr_window.push_back((hr_y, hr_t));
            p.rr_window.push_back((rr_y, rr_t));
            p.vitals.g_hr_graph = disp_y;
            p.vitals.g_br_graph = rr_y;
        });
        debug_assert_eq!(self.hr_window.len(), self.buffer.len());

        self.vitals.g_seeuser = 1;
        self.vitals.g_stable = u8::from(self.buffer.state() == BufferState::Stable);

        let emitted = if self.buffer.should_emit_hr(now_ms) {
            let row = self.stage(4, |p| p.emit(t_ms, &mut flags));
            self.buffer.note_hr_emitted(now_ms);
            self.emissions += 1;
            Some(row)
        } else {
            None
        };

        TickOutcome { emitted, flags }
    }

    /// One spectral emission over the current analysis window.
    fn emit(&mut self, t_ms: f64, flags: &mut QualityFlags) -> EstimateRow {
        let stable = self.buffer.state() == BufferState::Stable;
        let timestamps = self.buffer.timestamps();
        let (fs, fs_fallback) =
            spectral::recalc_fs(&timestamps, 1.0, self.cfg.nominal_fs_hz);
        flags.fs_fallback = fs_fallback;
        if (fs - self.fs_current).abs() > f64::EPSILON {
            // Track the effective rate; a band that no longer fits keeps
            // the previous design.
            let ok = self.hr_filter.redesign_for_fs(fs).is_ok()
                && self.display_filter.redesign_for_fs(fs).is_ok()
                && self.rr_filter.redesign_for_fs(fs).is_ok();
            if ok {
                self.fs_current = fs;
            } else {
                flags.stage_error = true;
            }
        }

        let hr_vals: Vec<f64> = self
            .hr_window
            .iter()
            .filter(|&&(_, transient)| !transient)
            .map(|&(v, _)| v)
            .collect();
        let psd = match self.cfg.spectral.method {
            SpectralMethod::Fft => spectral::psd_fft(&hr_vals, self.fs_current, &self.cfg.spectral),
            SpectralMethod::Welch => {
                spectral::psd_welch(&hr_vals, self.fs_current, &self.cfg.spectral)
            }
        };
        let mut hr_out = None;
        match psd {
            Ok(psd) => {
                flags.welch_single_segment = psd.single_segment_fallback;
                match spectral::pick_hr(
                    &psd,
                    self.cfg.spectral.hr_band_hz,
                    self.prev_hr,
                    self.cfg.spectral.hr_gate_bpm,
                ) {
                    Ok(pick) => {
                        flags.hr_outlier_gate_bypassed = pick.outlier_gated;
                        self.prev_hr = Some(pick.hr_bpm);
                        self.vitals.g_hr = pick.hr_bpm;
                        hr_out = Some(pick.hr_bpm);
                    }
                    Err(_) => flags.stage_error = true,
                }
            }
            Err(_) => flags.stage_error = true,
        }

        // RR only once the stability condition is met.
        let mut rr_out = None;
        if stable {
            let rr_vals: Vec<f64> = self
                .rr_window
                .iter()
                .filter(|&&(_, transient)| !transient)
                .map(|&(v, _)| v)
                .collect();
            let psd = match self.cfg.spectral.method {
                SpectralMethod::Fft => {
                    spectral::psd_fft(&rr_vals, self.fs_current, &self.cfg.spectral)
                }
                SpectralMethod::Welch => {
                    spectral::psd_welch(&rr_vals, self.fs_current, &self.cfg.spectral)
                }
            };
            match psd {
                Ok(psd) => match spectral::pick_rr(&psd, self.cfg.spectral.rr_band_hz) {
                    Some(rr) => {
                        self.vitals.g_br = rr;
                        rr_out = Some(rr);
                    }
                    None => flags.rr_no_peak = true,
                },
                Err(_) => flags.stage_error = true,
            }
        }

        EstimateRow {
            t_s: t_ms / 1000.0,
            hr_bpm: hr_out,
            rr_brpm: rr_out,
            stable,
        }
    }

    /// Final emission at end of stream, when ready and not already emitted
    /// on the last tick.
    pub fn flush(&mut self) -> Option<EstimateRow> {
        if self.buffer.state() == BufferState::Warming {
            return None;
        }
        let t_ms = self.last_frame_t_ms?;
        let mut flags = QualityFlags::default();
        let row = self.emit(t_ms, &mut flags);
        self.emissions += 1;
        Some(row)
    }

    pub fn report(&self, wall_s: f64, drops: u64, tick_intervals_ms: Vec<f64>) -> RunReport {
        RunReport {
            ticks: self.ticks,
            frames_processed: self.frames_processed,
            drops,
            resets: self.resets,
            emissions: self.emissions,
            stage_stats: STAGE_NAMES
                .iter()
                .zip(&self.stages)
                .map(|(&name, acc)| StageStat {
                    name,
                    count: acc.count,
                    mean_ms: if acc.count > 0 {
                        acc.total_ms / acc.count as f64
                    } else {
                        0.0
                    },
                    max_ms: acc.max_ms,
                })
                .collect(),
            wall_s,
            tick_intervals_ms,
        }
    }
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

const NEUTRAL: [u8; 3] = [128, 128, 128];
/// Red/green swing per unit of filtered BVP amplitude.
const TINT_GAIN: f64 = 40.0;

fn crop_to_landmarks(frame: &RgbFrame, landmarks: &LandmarkSet) -> RgbFrame {
    let xs = landmarks.points().iter().map(|p| p.0);
    let ys = landmarks.points().iter().map(|p| p.1);
    let min_x = xs.clone().fold(f64::INFINITY, f64::min);
    let max_x = xs.fold(f64::NEG_INFINITY, f64::max);
    let min_y = ys.clone().fold(f64::INFINITY, f64::min);
    let max_y = ys.fold(f64::NEG_INFINITY, f64::max);
    let margin = 0.15 * (max_x - min_x).max(max_y - min_y).max(1.0);

    let x0 = ((min_x - margin).floor().max(0.0) as usize).min(frame.width - 1);
    let y0 = ((min_y - margin).floor().max(0.0) as usize).min(frame.height - 1);
    let x1 = ((max_x + margin).ceil().max(0.0) as usize).clamp(x0 + 1, frame.width);
    let y1 = ((max_y + margin).ceil().max(0.0) as usize).clamp(y0 + 1, frame.height);

    let mut out = RgbFrame::filled(x1 - x0, y1 - y0, [0, 0, 0]);
    for y in y0..y1 {
        for x in x0..x1 {
            out.set_pixel(x - x0, y - y0, frame.pixel(x, y));
        }
    }
    out
}

/// Renders the region polygons tinted by the current filtered BVP amplitude
/// onto a neutral canvas. Without landmarks the canvas stays a plain
/// placeholder. Deterministic for equal inputs.
pub fn render_pulse_frame(
    landmarks: Option<&LandmarkSet>,
    regions: &[RegionSpec],
    bvp_value: f64,
    canvas: (usize, usize),
) -> RgbFrame {
    let (width, height) = canvas;
    let mut frame = RgbFrame::filled(width, height, NEUTRAL);
    let Some(landmarks) = landmarks else {
        return frame;
    };

    // Map the landmark bounding box onto the canvas with uniform scale.
    let xs = landmarks.points().iter().map(|p| p.0);
    let ys = landmarks.points().iter().map(|p| p.1);
    let min_x = xs.clone().fold(f64::INFINITY, f64::min);
    let max_x = xs.fold(f64::NEG_INFINITY, f64::max);
    let min_y = ys.clone().fold(f64::INFINITY, f64::min);
    let max_y = ys.fold(f64::NEG_INFINITY, f64::max);
    let span = (max_x - min_x).max(max_y - min_y).max(1e-9);
    let scale = 0.8 * width.min(height) as f64 / span;
    let off_x = width as f64 / 2.0 - scale * (min_x + max_x) / 2.0;
    let off_y = height as f64 / 2.0 - scale * (min_y + max_y) / 2.0;

    let delta = (TINT_GAIN * bvp_value).clamp(-96.0, 96.0);
    let tint = [
        (NEUTRAL[0] as f64 + delta).clamp(0.0, 255.0) as u8,
        (NEUTRAL[1] as f64 - delta).clamp(0.0, 255.0) as u8,
        NEUTRAL[2],
    ];

    for spec in regions {
        let polygon: Vec<(f64, f64)> = roi::region_polygon(spec, landmarks)
            .into_iter()
            .map(|(x, y)| (x * scale + off_x, y * scale + off_y))
            .collect();
        roi::for_each_covered_pixel(&polygon, width, height, |x, y| {
            frame.set_pixel(x, y, tint);
        });
    }
    frame
}

// ---------------------------------------------------------------------------
// Run loops
// ---------------------------------------------------------------------------

/// Logical-time replay: one frame per tick, clocked by frame timestamps.
/// Deterministic for a given source and config.
pub fn run_replay(
    source: FrameStream,
    cfg: &ProcessorConfig,
) -> Result<(RunReport, Vec<EstimateRow>)> {
    let mut processor = Processor::new(cfg.clone())?;
    let start = Instant::now();
    let mut estimates = Vec::new();
    let mut last_emitted_on_tick = false;
    for item in source {
        let rec = item?;
        let now_ms = rec.timestamp_ms;
        let outcome = processor.tick(Some(rec), now_ms);
        last_emitted_on_tick = outcome.emitted.is_some();
        if let Some(row) = outcome.emitted {
            estimates.push(row);
        }
    }
    if !last_emitted_on_tick {
        if let Some(row) = processor.flush() {
            estimates.push(row);
        }
    }
    let report = processor.report(start.elapsed().as_secs_f64(), 0, Vec::new());
    Ok((report, estimates))
}

/// Options for wall-clock runs.
pub struct WallClockOptions {
    pub stop: Arc<AtomicBool>,
    pub max_duration: Option<Duration>,
}

impl Default for WallClockOptions {
    fn default() -> Self {
        Self {
            stop: Arc::new(AtomicBool::new(false)),
            max_duration: None,
        }
    }
}

/// Wall-clock mode: a capture thread paces the source by its timestamps
/// into the latest-frame mailbox; the processing loop ticks at the nominal
/// period, publishing into `container` every tick.
pub fn run_wallclock(
    source: FrameStream,
    cfg: &ProcessorConfig,
    container: DataContainer,
    opts: WallClockOptions,
) -> Result<(RunReport, Vec<EstimateRow>)> {
    let mut processor = Processor::new(cfg.clone())?;
    let mailbox = Arc::new(FrameMailbox::new());

    let capture_mailbox = Arc::clone(&mailbox);
    let capture_stop = Arc::clone(&opts.stop);
    let capture = std::thread::Builder::new()
        .name("pg-capture".into())
        .spawn(move || {
            let start = Instant::now();
            for item in source {
                let Ok(rec) = item else { break };
                let target = Duration::from_secs_f64(rec.timestamp_ms / 1000.0);
                loop {
                    if capture_stop.load(Ordering::Relaxed) {
                        capture_mailbox.close();
                        return;
                    }
                    let elapsed = start.elapsed();
                    if elapsed >= target {
                        break;
                    }
                    std::thread::sleep((target - elapsed).min(Duration::from_millis(5)));
                }
                capture_mailbox.offer(rec);
            }
            capture_mailbox.close();
        })
        .expect("spawn capture thread");

    let period = Duration::from_secs_f64(cfg.tick.tick_period_ms / 1000.0);
    let start = Instant::now();
    let mut next_tick = start + period;
    let mut estimates = Vec::new();
    let mut intervals = Vec::new();
    let mut last_tick_at: Option<Instant> = None;
    let mut last_emitted_on_tick = false;

    loop {
        if opts.stop.load(Ordering::Relaxed) {
            break;
        }
        if let Some(max) = opts.max_duration {
            if start.elapsed() >= max {
                break;
            }
        }
        let now = Instant::now();
        if now < next_tick {
            std::thread::sleep(next_tick - now);
        }
        let tick_at = Instant::now();
        if let Some(prev) = last_tick_at {
            intervals.push((tick_at - prev).as_secs_f64() * 1000.0);
        }
        last_tick_at = Some(tick_at);
        next_tick += period;
        if next_tick < tick_at {
            // Fell behind; resynchronize instead of bursting.
            next_tick = tick_at + period;
        }

        let frame = mailbox.take();
        if frame.is_none() && mailbox.is_closed() {
            break;
        }
        let now_ms = start.elapsed().as_secs_f64() * 1000.0;
        let outcome = processor.tick(frame, now_ms);
        last_emitted_on_tick = outcome.emitted.is_some();
        if let Some(row) = outcome.emitted {
            estimates.push(row);
        }

        let (main_frame, pulse_frame) = if cfg.render_frames {
            let main = processor
                .last_main_frame()
                .unwrap_or_else(|| Arc::new(RgbFrame::filled(cfg.canvas.0, cfg.canvas.1, NEUTRAL)));
            let pulse = Arc::new(processor.render_pulse());
            (Some(main), Some(pulse))
        } else {
            (None, None)
        };
        container.publish(
            processor.vitals(),
            main_frame,
            pulse_frame,
            processor.frames_processed,
            now_ms,
        );
    }

    opts.stop.store(true, Ordering::Relaxed);
    if !last_emitted_on_tick {
        if let Some(row) = processor.flush() {
            estimates.push(row);
        }
    }
    capture.join().expect("capture thread panicked");

    let report = processor.report(start.elapsed().as_secs_f64(), mailbox.dropped(), intervals);
    Ok((report, estimates))
}
