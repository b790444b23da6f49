//! Rolling a* sample window and the warm-up/stability state machine.
//!
//! The buffer holds up to 360 samples (12 s at 30 fps) in a deque: new
//! samples push onto the back, the oldest falls off the front. The first HR
//! is available once 90 samples (3 s) have been collected; after 240
//! uninterrupted samples (8 s) the signal is marked stable, which gates RR
//! computation and the reliability flag. An interruption revokes stability
//! but keeps the buffered samples.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Thresholds governing the state machine.
#[derive(Debug, Clone, Copy)]
pub struct BufferPolicy {
    pub capacity: usize,
    pub first_hr_threshold: usize,
    pub stable_threshold: usize,
    pub hr_update_interval_ms: f64,
    pub window_s: f64,
}

impl Default for BufferPolicy {
    fn default() -> Self {
        Self {
            capacity: 360,
            first_hr_threshold: 90,
            stable_threshold: 240,
            hr_update_interval_ms: 1000.0,
            window_s: 12.0,
        }
    }
}

impl BufferPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.first_hr_threshold <= self.stable_threshold
            && self.stable_threshold <= self.capacity
        {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "buffer thresholds must satisfy first_hr <= stable <= capacity, got {} / {} / {}",
                self.first_hr_threshold, self.stable_threshold, self.capacity
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BufferState {
    Warming,
    HrReady,
    Stable,
}

/// Rolling window of (a*, timestamp_ms) samples.
#[derive(Debug, Clone)]
pub struct SignalBuffer {
    samples: VecDeque<(f64, f64)>,
    consecutive_uninterrupted: usize,
    last_hr_emit_ms: f64,
    policy: BufferPolicy,
}

impl Default for SignalBuffer {
    fn default() -> Self {
        Self::new(BufferPolicy::default())
    }
}

impl SignalBuffer {
    pub fn new(policy: BufferPolicy) -> Self {
        Self {
            samples: VecDeque::with_capacity(policy.capacity),
            consecutive_uninterrupted: 0,
            last_hr_emit_ms: f64::NEG_INFINITY,
            policy,
        }
    }

    /// State is a pure function of (length, consecutive_uninterrupted).
    pub fn state(&self) -> BufferState {
        if self.samples.len() < self.policy.first_hr_threshold {
            BufferState::Warming
        } else if self.consecutive_uninterrupted >= self.policy.stable_threshold {
            BufferState::Stable
        } else {
            BufferState::HrReady
        }
    }

    /// Appends a sample, evicting the oldest when full.
    pub fn push(&mut self, a_star: f64, timestamp_ms: f64) -> Result<()> {
        if let Some(&(_, last)) = self.samples.back() {
            if timestamp_ms <= last {
                return Err(Error::InvalidSample(format!(
                    "non-monotonic timestamp: {timestamp_ms} after {last}"
                )));
            }
        }
        if self.samples.len() == self.policy.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((a_star, timestamp_ms));
        self.consecutive_uninterrupted += 1;
        Ok(())
    }

    /// Records an interruption: restarts the uninterrupted counter, which
    /// demotes Stable to HrReady (or Warming when under-filled) while
    /// keeping the buffered samples.
    pub fn mark_interruption(&mut self) {
        self.consecutive_uninterrupted = 0;
    }

    /// True when an HR emission is due: at least HrReady and a full update
    /// interval elapsed since the last emission.
    pub fn should_emit_hr(&self, now_ms: f64) -> bool {
        self.state() >= BufferState::HrReady
            && now_ms - self.last_hr_emit_ms >= self.policy.hr_update_interval_ms
    }

    /// Caller records the emission time after acting on `should_emit_hr`.
    pub fn note_hr_emitted(&mut self, now_ms: f64) {
        self.last_hr_emit_ms = now_ms;
    }

    /// All buffered samples, oldest first. In HrReady that is the 90..359
    /// collected so far; in Stable the most recent full window.
    pub fn analysis_window(&self) -> Result<Vec<(f64, f64)>> {
        if self.state() == BufferState::Warming {
            return Err(Error::NotReady);
        }
        Ok(self.samples.iter().copied().collect())
    }

    /// Full reset back to Warming, dropping all samples.
    pub fn reset(&mut self) {
        self.samples.clear();
        self.consecutive_uninterrupted = 0;
        self.last_hr_emit_ms = f64::NEG_INFINITY;
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn consecutive_uninterrupted(&self) -> usize {
        self.consecutive_uninterrupted
    }

    pub fn policy(&self) -> &BufferPolicy {
        &self.policy
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.samples.iter().map(|&(_, t)| t).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(n: usize) -> SignalBuffer {
        let mut buf = SignalBuffer::default();
        for i in 0..n {
            buf.push(0.0, i as f64 * 33.0).unwrap();
        }
        buf
    }

    #[test]
    fn first_hr_at_ninety_samples() {
        let mut buf = filled(89);
        assert_eq!(buf.state(), BufferState::Warming);
        buf.push(0.0, 89.0 * 33.0).unwrap();
        assert_eq!(buf.state(), BufferState::HrReady);
    }

    #[test]
    fn stable_at_240_uninterrupted() {
        let buf = filled(239);
        assert_eq!(buf.state(), BufferState::HrReady);
        let buf = filled(240);
        assert_eq!(buf.state(), BufferState::Stable);
    }

    #[test]
    fn capacity_evicts_oldest() {
        let buf = filled(361);
        assert_eq!(buf.len(), 360);
        // Oldest sample (t=0) evicted; front is the second push.
        assert_eq!(buf.samples.front().unwrap().1, 33.0);
        assert_eq!(buf.state(), BufferState::Stable);
    }

    #[test]
    fn interruption_demotes_but_keeps_samples() {
        let mut buf = filled(300);
        assert_eq!(buf.state(), BufferState::Stable);
        buf.mark_interruption();
        assert_eq!(buf.state(), BufferState::HrReady);
        assert_eq!(buf.len(), 300);

        // Warming stays Warming.
        let mut warm = filled(50);
        warm.mark_interruption();
        assert_eq!(warm.state(), BufferState::Warming);

        // 240 further uninterrupted pushes restore Stable.
        for i in 0..240 {
            buf.push(0.0, (300 + i) as f64 * 33.0).unwrap();
            let expect = if i < 239 { BufferState::HrReady } else { BufferState::Stable };
            assert_eq!(buf.state(), expect, "push {i}");
        }
    }

    #[test]
    fn emission_cadence_is_one_second() {
        let mut buf = filled(90);
        assert!(buf.should_emit_hr(3000.0), "first emission fires immediately");
        buf.note_hr_emitted(3000.0);
        assert!(!buf.should_emit_hr(3500.0));
        assert!(buf.should_emit_hr(4000.0));

        let warm = filled(10);
        assert!(!warm.should_emit_hr(1e12));
    }

    #[test]
    fn analysis_window_contract() {
        let buf = filled(120);
        assert_eq!(buf.analysis_window().unwrap().len(), 120);

        let buf = filled(400);
        let window = buf.analysis_window().unwrap();
        assert_eq!(window.len(), 360);
        assert_eq!(buf.state(), BufferState::Stable);

        let warm = filled(89);
        assert!(matches!(warm.analysis_window(), Err(Error::NotReady)));
    }

    #[test]
    fn rejects_non_monotonic_timestamps() {
        let mut buf = SignalBuffer::default();
        buf.push(0.0, 0.0).unwrap();
        buf.push(0.0, 33.0).unwrap();
        assert!(buf.push(0.0, 33.0).is_err());
        assert!(buf.push(0.0, 32.0).is_err());
    }

    #[test]
    fn timestamps_stay_sorted_under_eviction() {
        let buf = filled(500);
        let ts = buf.timestamps();
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(ts.len(), 360);
    }

    #[test]
    fn reset_returns_to_warming() {
        let mut buf = filled(300);
        buf.note_hr_emitted(9000.0);
        buf.reset();
        assert_eq!(buf.len(), 0);
        assert_eq!(buf.state(), BufferState::Warming);
        assert!(buf.should_emit_hr(0.0) == false);
        buf.push(0.0, 0.0).unwrap();
        assert_eq!(buf.state(), BufferState::Warming);
    }
}
