//! HR/RR estimation from buffered BVP samples: windowed zero-padded DFT or
//! Welch periodogram averaging, plus peak picking with an outlier gate.
//!
//! Both estimators subtract the segment mean, apply a Hamming window, and
//! zero-pad before the transform. Power is one-sided and normalized so that
//! the bins sum to the windowed-signal energy divided by the window energy
//! (`sum c_i |X_i|^2 / (M sum w^2)` with `c_i = 2` except at DC/Nyquist),
//! which keeps single periodograms and Welch averages directly comparable.

use std::sync::{Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpectralMethod {
    /// Single windowed, zero-padded DFT over the whole analysis window.
    #[default]
    Fft,
    /// Averaged periodograms of overlapping segments.
    Welch,
}

impl std::fmt::Display for SpectralMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpectralMethod::Fft => write!(f, "fft"),
            SpectralMethod::Welch => write!(f, "welch"),
        }
    }
}

/// Analysis parameters. Defaults follow the deployed vitals chain: 5x
/// zero-padding for the full-window DFT, 256-sample Welch segments with
/// 200-sample overlap and 2048-point transforms, HR search in 0.75-2.5 Hz,
/// RR search in 0.1-0.7 Hz.
#[derive(Debug, Clone)]
pub struct SpectralConfig {
    pub method: SpectralMethod,
    pub zero_pad_factor: usize,
    pub welch_segment: usize,
    pub welch_overlap: usize,
    pub welch_fft_len: usize,
    pub hr_band_hz: (f64, f64),
    pub rr_band_hz: (f64, f64),
    /// Plausibility gate: candidate HR peaks further than this from the
    /// previous estimate are rejected unless nothing passes.
    pub hr_gate_bpm: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            method: SpectralMethod::Fft,
            zero_pad_factor: 5,
            welch_segment: 256,
            welch_overlap: 200,
            welch_fft_len: 2048,
            hr_band_hz: (0.75, 2.5),
            rr_band_hz: (0.1, 0.7),
            hr_gate_bpm: 12.0,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.zero_pad_factor == 0 {
            return Err(Error::Config("zero_pad_factor must be >= 1".into()));
        }
        if self.welch_overlap >= self.welch_segment {
            return Err(Error::Config(format!(
                "welch overlap {} must be < segment {}",
                self.welch_overlap, self.welch_segment
            )));
        }
        if self.welch_fft_len < self.welch_segment {
            return Err(Error::Config("welch fft length shorter than segment".into()));
        }
        for (lo, hi) in [self.hr_band_hz, self.rr_band_hz] {
            if !(0.0 < lo && lo < hi) {
                return Err(Error::Config(format!("invalid search band [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn welch_hop(&self) -> usize {
        self.welch_segment - self.welch_overlap
    }
}

/// One-sided power spectral density estimate.
#[derive(Debug, Clone)]
pub struct PsdEstimate {
    pub freqs_hz: Vec<f64>,
    pub power: Vec<f64>,
    pub method: SpectralMethod,
    pub fs_used_hz: f64,
    /// Set when Welch fell back to one full-length segment (input shorter
    /// than the configured segment size).
    pub single_segment_fallback: bool,
}

/// Effective sample rate over the most recent `horizon_s` of timestamps:
/// `(count - 1) / span`. Falls back to `nominal_hz` (flagged true) when
/// fewer than two timestamps land in the horizon.
pub fn recalc_fs(timestamps_ms: &[f64], horizon_s: f64, nominal_hz: f64) -> (f64, bool) {
    let Some(&last) = timestamps_ms.last() else {
        return (nominal_hz, true);
    };
    let cutoff = last - horizon_s * 1000.0;
    let start = timestamps_ms.partition_point(|&t| t < cutoff);
    let recent = &timestamps_ms[start..];
    if recent.len() < 2 {
        return (nominal_hz, true);
    }
    let span_s = (last - recent[0]) / 1000.0;
    if span_s <= 0.0 {
        return (nominal_hz, true);
    }
    ((recent.len() - 1) as f64 / span_s, false)
}

fn fft_forward(buf: &mut [Complex<f64>]) {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    let fft = {
        let mut planner = PLANNER
            .get_or_init(|| Mutex::new(FftPlanner::new()))
            .lock()
            .expect("fft planner poisoned");
        planner.plan_fft_forward(buf.len())
    };
    fft.process(buf);
}

fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let last = (len - 1) as f64;
    (0..len)
        .map(|k| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * k as f64 / last).cos())
        .collect()
}

fn check_signal(signal: &[f64]) -> Result<()> {
    if signal.len() < 2 {
        return Err(Error::NoSignal(format!(
            "need at least 2 samples, got {}",
            signal.len()
        )));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSample("non-finite sample in signal".into()));
    }
    if signal.iter().all(|&v| v == 0.0) {
        return Err(Error::NoSignal("signal is identically zero".into()));
    }
    Ok(())
}

/// Mean-removed, Hamming-windowed, zero-padded one-sided periodogram.
fn periodogram(segment: &[f64], fft_len: usize, fs: f64) -> (Vec<f64>, Vec<f64>) {
    let k = segment.len();
    let mean = segment.iter().sum::<f64>() / k as f64;
    let window = hamming(k);
    let window_energy: f64 = window.iter().map(|w| w * w).sum();

    let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
    for i in 0..k {
        buf[i].re = (segment[i] - mean) * window[i];
    }
    fft_forward(&mut buf);

    let half = fft_len / 2;
    let norm = 1.0 / (fft_len as f64 * window_energy);
    let mut freqs = Vec::with_capacity(half + 1);
    let mut power = Vec::with_capacity(half + 1);
    for i in 0..=half {
        let two_sided = i != 0 && !(fft_len % 2 == 0 && i == half);
        let scale = if two_sided { 2.0 } else { 1.0 };
        freqs.push(i as f64 * fs / fft_len as f64);
        power.push(scale * buf[i].norm_sqr() * norm);
    }
    (freqs, power)
}

/// PSD of the whole window: mean removal, Hamming, zero-pad to
/// `zero_pad_factor` times the window length, one DFT.
pub fn psd_fft(signal: &[f64], fs: f64, cfg: &SpectralConfig) -> Result<PsdEstimate> {
    check_signal(signal)?;
    let fft_len = signal.len() * cfg.zero_pad_factor;
    let (freqs_hz, power) = periodogram(signal, fft_len, fs);
    Ok(PsdEstimate {
        freqs_hz,
        power,
        method: SpectralMethod::Fft,
        fs_used_hz: fs,
        single_segment_fallback: false,
    })
}

/// Number of full Welch segments for a given input length (0 when the input
/// is shorter than one segment).
pub fn welch_segment_count(signal_len: usize, cfg: &SpectralConfig) -> usize {
    if signal_len < cfg.welch_segment {
        return 0;
    }
    (signal_len - cfg.welch_segment) / cfg.welch_hop() + 1
}

/// Welch PSD: overlapping segments, per-segment mean removal and Hamming
/// window, per-segment zero-padded transform, arithmetic-mean averaging.
/// Inputs shorter than one segment degrade to a single full-length segment
/// with `single_segment_fallback` set.
pub fn psd_welch(signal: &[f64], fs: f64, cfg: &SpectralConfig) -> Result<PsdEstimate> {
    check_signal(signal)?;
    let n_segments = welch_segment_count(signal.len(), cfg);

    if n_segments == 0 {
        let fft_len = cfg.welch_fft_len.max(signal.len());
        let (freqs_hz, power) = periodogram(signal, fft_len, fs);
        return Ok(PsdEstimate {
            freqs_hz,
            power,
            method: SpectralMethod::Welch,
            fs_used_hz: fs,
            single_segment_fallback: true,
        });
    }

    let hop = cfg.welch_hop();
    let mut freqs_hz = Vec::new();
    let mut accum: Vec<f64> = Vec::new();
    for s in 0..n_segments {
        let start = s * hop;
        let segment = &signal[start..start + cfg.welch_segment];
        let (freqs, power) = periodogram(segment, cfg.welch_fft_len, fs);
        if s == 0 {
            freqs_hz = freqs;
            accum = power;
        } else {
            for (acc, p) in accum.iter_mut().zip(&power) {
                *acc += p;
            }
        }
    }
    for p in accum.iter_mut() {
        *p /= n_segments as f64;
    }
    Ok(PsdEstimate {
        freqs_hz,
        power: accum,
        method: SpectralMethod::Welch,
        fs_used_hz: fs,
        single_segment_fallback: false,
    })
}

/// An accepted HR peak.
#[derive(Debug, Clone, Copy)]
pub struct HrPick {
    pub hr_bpm: f64,
    pub peak_power: f64,
    /// True when every candidate failed the plausibility gate and the raw
    /// band maximum was taken instead.
    pub outlier_gated: bool,
}

fn band_indices(psd: &PsdEstimate, band: (f64, f64)) -> Vec<usize> {
    (0..psd.freqs_hz.len())
        .filter(|&i| psd.freqs_hz[i] >= band.0 && psd.freqs_hz[i] <= band.1)
        .collect()
}

fn band_argmax(psd: &PsdEstimate, indices: &[usize]) -> usize {
    let mut best = indices[0];
    for &i in indices {
        if psd.power[i] > psd.power[best] {
            best = i;
        }
    }
    best
}

/// Picks the HR peak in `band`. Candidates are the in-band local maxima,
/// strongest first with ties broken toward lower frequency. When a previous
/// estimate exists, candidates further than `gate_bpm` away are rejected; if
/// nothing passes, the raw band maximum wins and the pick is flagged.
pub fn pick_hr(
    psd: &PsdEstimate,
    band: (f64, f64),
    prev_hr_bpm: Option<f64>,
    gate_bpm: f64,
) -> Result<HrPick> {
    let indices = band_indices(psd, band);
    if indices.is_empty() {
        return Err(Error::NoSignal(format!(
            "no PSD bins inside [{}, {}] Hz",
            band.0, band.1
        )));
    }

    let mut candidates: Vec<usize> = indices
        .iter()
        .copied()
        .filter(|&i| {
            let left = if i > 0 { psd.power[i - 1] } else { f64::NEG_INFINITY };
            let right = if i + 1 < psd.power.len() {
                psd.power[i + 1]
            } else {
                f64::NEG_INFINITY
            };
            psd.power[i] > left && psd.power[i] >= right
        })
        .collect();
    if candidates.is_empty() {
        // Monotone across the band: the edge maximum is the only candidate.
        candidates.push(band_argmax(psd, &indices));
    }
    candidates.sort_by(|&a, &b| {
        psd.power[b]
            .partial_cmp(&psd.power[a])
            .expect("psd power is finite")
            .then(a.cmp(&b))
    });

    if let Some(prev) = prev_hr_bpm {
        if let Some(&i) = candidates
            .iter()
            .find(|&&i| (60.0 * psd.freqs_hz[i] - prev).abs() <= gate_bpm)
        {
            return Ok(HrPick {
                hr_bpm: 60.0 * psd.freqs_hz[i],
                peak_power: psd.power[i],
                outlier_gated: false,
            });
        }
        let i = band_argmax(psd, &indices);
        return Ok(HrPick {
            hr_bpm: 60.0 * psd.freqs_hz[i],
            peak_power: psd.power[i],
            outlier_gated: true,
        });
    }

    let i = candidates[0];
    Ok(HrPick {
        hr_bpm: 60.0 * psd.freqs_hz[i],
        peak_power: psd.power[i],
        outlier_gated: false,
    })
}

/// Respiratory rate from the PSD of the low-passed signal: 60x the argmax
/// frequency in `band`, or `None` when the band is empty or flat.
pub fn pick_rr(psd: &PsdEstimate, band: (f64, f64)) -> Option<f64> {
    let indices = band_indices(psd, band);
    if indices.is_empty() {
        return None;
    }
    let best = band_argmax(psd, &indices);
    let p_max = psd.power[best];
    let p_min = indices.iter().map(|&i| psd.power[i]).fold(f64::INFINITY, f64::min);
    if p_max <= 0.0 || (p_max - p_min) <= 1e-12 * p_max {
        return None;
    }
    Some(60.0 * psd.freqs_hz[best])
}

/// Per-emission condition flags carried alongside the estimates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QualityFlags {
    pub fs_fallback: bool,
    pub hr_outlier_gate_bypassed: bool,
    pub welch_single_segment: bool,
    pub rr_no_peak: bool,
    pub roi_degenerate: bool,
    pub stage_error: bool,
}

/// HR/RR estimate for one emission.
#[derive(Debug, Clone, Copy, Default)]
pub struct VitalsEstimate {
    pub hr_bpm: Option<f64>,
    pub rr_brpm: Option<f64>,
    pub hr_peak_power: f64,
    pub flags: QualityFlags,
}
