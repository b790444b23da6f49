//! 61-tap linear-phase FIR filters with streaming block processing.
//!
//! Coefficients come from the windowed-sinc difference form: with
//! `m = n - (N-1)/2`, `phi = 2*pi*f_high/fs` and `lambda = 2*pi*f_low/fs`,
//! the center tap is `(phi - lambda)/pi` and every other tap is
//! `(sin(m*phi) - sin(m*lambda)) / (pi*m)`. A low-pass is the same design
//! with `lambda = 0`. An optional window (Lanczos or Hamming) multiplies the
//! taps; the default applies none.
//!
//! A persistent shift register carries the last `N-1` input samples across
//! calls, so chunked filtering is bit-identical to filtering the
//! concatenated stream in one call.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Tap count used by the vitals chain.
pub const DEFAULT_TAPS: usize = 61;

/// HR analysis band in Hz (45-240 bpm).
pub const HR_BANDPASS_HZ: (f64, f64) = (0.75, 4.0);
/// Narrower HR band used for the real-time display trace (48-120 bpm).
pub const HR_DISPLAY_HZ: (f64, f64) = (0.8, 2.0);
/// Respiratory low-pass cutoff in Hz (up to 42 breaths per minute).
pub const RR_LOWPASS_HZ: f64 = 0.7;

/// Window applied multiplicatively to the designed taps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterWindow {
    /// Pure truncated design, no window.
    #[default]
    None,
    Lanczos,
    Hamming,
}

impl FilterWindow {
    fn weight(self, n: usize, n_taps: usize) -> f64 {
        let last = (n_taps - 1) as f64;
        match self {
            FilterWindow::None => 1.0,
            FilterWindow::Lanczos => {
                let x = 2.0 * n as f64 / last - 1.0;
                if x == 0.0 {
                    1.0
                } else {
                    (PI * x).sin() / (PI * x)
                }
            }
            FilterWindow::Hamming => 0.54 - 0.46 * (2.0 * PI * n as f64 / last).cos(),
        }
    }
}

/// A designed FIR filter plus its streaming state.
#[derive(Debug, Clone)]
pub struct FirFilter {
    taps: Vec<f64>,
    /// Last `n_taps - 1` inputs, oldest first.
    register: Vec<f64>,
    f_low_hz: f64,
    f_high_hz: f64,
    fs_hz: f64,
    window: FilterWindow,
    /// Outputs produced since the register was last zeroed.
    outputs_since_reset: u64,
}

fn design_taps(
    f_low: f64,
    f_high: f64,
    fs: f64,
    n_taps: usize,
    window: FilterWindow,
) -> Result<Vec<f64>> {
    if n_taps < 3 || n_taps % 2 == 0 {
        return Err(Error::Config(format!(
            "tap count must be odd and >= 3, got {n_taps}"
        )));
    }
    if !(0.0 <= f_low && f_low < f_high && f_high < fs / 2.0) {
        return Err(Error::InvalidBand {
            low: f_low,
            high: f_high,
            fs,
        });
    }
    let phi = 2.0 * PI * f_high / fs;
    let lambda = 2.0 * PI * f_low / fs;
    let center = (n_taps - 1) / 2;

    // Compute the left half plus center, then mirror so linear-phase
    // symmetry is exact tap-for-tap.
    let mut taps = vec![0.0; n_taps];
    for n in 0..=center {
        let m = n as f64 - center as f64;
        let h = if n == center {
            (phi - lambda) / PI
        } else {
            ((m * phi).sin() - (m * lambda).sin()) / (PI * m)
        };
        let h = h * window.weight(n, n_taps);
        taps[n] = h;
        taps[n_taps - 1 - n] = h;
    }
    Ok(taps)
}

impl FirFilter {
    /// Designs a band-pass filter; `f_low = 0` degenerates to a low-pass.
    pub fn design_bandpass(
        f_low_hz: f64,
        f_high_hz: f64,
        fs_hz: f64,
        n_taps: usize,
        window: FilterWindow,
    ) -> Result<Self> {
        let taps = design_taps(f_low_hz, f_high_hz, fs_hz, n_taps, window)?;
        Ok(Self {
            register: vec![0.0; taps.len() - 1],
            taps,
            f_low_hz,
            f_high_hz,
            fs_hz,
            window,
            outputs_since_reset: 0,
        })
    }

    /// Designs a low-pass filter (band-pass with the lower edge at 0).
    pub fn design_lowpass(
        f_cut_hz: f64,
        fs_hz: f64,
        n_taps: usize,
        window: FilterWindow,
    ) -> Result<Self> {
        if f_cut_hz <= 0.0 {
            return Err(Error::InvalidBand {
                low: 0.0,
                high: f_cut_hz,
                fs: fs_hz,
            });
        }
        Self::design_bandpass(0.0, f_cut_hz, fs_hz, n_taps, window)
    }

    /// Re-designs the taps for the same band at a new sample rate. The shift
    /// register is preserved so the stream continues without a restart
    /// transient.
    pub fn redesign_for_fs(&mut self, fs_hz: f64) -> Result<()> {
        self.taps = design_taps(self.f_low_hz, self.f_high_hz, fs_hz, self.taps.len(), self.window)?;
        self.fs_hz = fs_hz;
        Ok(())
    }

    /// Filters a block, consuming and updating the shift register.
    /// `output.len() == input.len()`.
    pub fn process_block(&mut self, input: &[f64]) -> Vec<f64> {
        let n_taps = self.taps.len();
        let hist = n_taps - 1;

        let mut extended = Vec::with_capacity(hist + input.len());
        extended.extend_from_slice(&self.register);
        extended.extend_from_slice(input);

        let mut output = Vec::with_capacity(input.len());
        for k in 0..input.len() {
            let mut acc = 0.0;
            for (n, h) in self.taps.iter().enumerate() {
                acc += h * extended[hist + k - n];
            }
            output.push(acc);
        }

        self.register.copy_from_slice(&extended[extended.len() - hist..]);
        self.outputs_since_reset += input.len() as u64;
        output
    }

    /// Filters one sample; the flag is true while the output still depends
    /// on zero-initialized register slots (the first `n_taps - 1` outputs
    /// after a reset).
    pub fn process_sample(&mut self, x: f64) -> (f64, bool) {
        let transient = self.outputs_since_reset < (self.taps.len() - 1) as u64;
        let y = self.process_block(std::slice::from_ref(&x));
        (y[0], transient)
    }

    /// Zeroes the shift register and restarts transient accounting.
    pub fn reset_register(&mut self) {
        self.register.iter_mut().for_each(|v| *v = 0.0);
        self.outputs_since_reset = 0;
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Gain at 0 Hz (sum of taps).
    pub fn dc_gain(&self) -> f64 {
        self.taps.iter().sum()
    }

    pub fn band_hz(&self) -> (f64, f64) {
        (self.f_low_hz, self.f_high_hz)
    }

    pub fn fs_hz(&self) -> f64 {
        self.fs_hz
    }

    pub fn window(&self) -> FilterWindow {
        self.window
    }

    pub fn outputs_since_reset(&self) -> u64 {
        self.outputs_since_reset
    }
}

/// Magnitude response |H(e^{j 2 pi f / fs})| by direct summation.
pub fn magnitude_at(taps: &[f64], f_hz: f64, fs_hz: f64) -> f64 {
    let w = 2.0 * PI * f_hz / fs_hz;
    let mut re = 0.0;
    let mut im = 0.0;
    for (n, h) in taps.iter().enumerate() {
        re += h * (w * n as f64).cos();
        im -= h * (w * n as f64).sin();
    }
    (re * re + im * im).sqrt()
}
