//! Line-oriented `key=value` configuration, merged under CLI overrides.
//!
//! Recognized keys (all optional; `#` starts a comment):
//!
//! ```text
//! source=synthetic|trace|frames      trace=PATH  frames_dir=PATH
//! landmarks=PATH  ref=PATH  out=PATH
//! method=fft|welch  window=none|lanczos|hamming  taps=61
//! hr_filter_band=0.75,4.0  display_filter_band=0.8,2.0  rr_cutoff=0.7
//! hr_search_band=0.75,2.5  rr_search_band=0.1,0.7  gate_bpm=12
//! tick_period_ms=33.33  noface_reset=60  nominal_fs=30
//! alpha=0.5  beta=0.1
//! region.left_cheek=1,2,3,4,48,31,39   (also right_cheek, forehead)
//! rest_port=8080  stream_port=8081  bind=127.0.0.1
//! boundary=pulsegridframe  jpeg_quality=80  spo2=0  canvas=320x240
//! synthetic_hr=72  synthetic_rr=15  synthetic_fs=30  synthetic_duration=60
//! noise_std=0  drift=0  seed=1  duration_s=10
//! ```

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::filter::FilterWindow;
use crate::ingest::SyntheticConfig;
use crate::net::StreamConfig;
use crate::pipeline::ProcessorConfig;
use crate::roi::{RegionName, RegionSpec};
use crate::spectral::SpectralMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceKind {
    #[default]
    Synthetic,
    Trace,
    Frames,
}

/// Full application configuration.
#[derive(Debug, Clone, Default)]
pub struct Config {
    pub source: SourceKind,
    pub trace_path: Option<PathBuf>,
    pub frames_dir: Option<PathBuf>,
    pub landmarks_path: Option<PathBuf>,
    pub reference_path: Option<PathBuf>,
    pub out_path: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
    pub processor: ProcessorConfig,
    pub net: StreamConfig,
    /// Wall-clock run duration cap in seconds; unlimited when absent.
    pub duration_s: Option<f64>,
}

fn parse_pair(value: &str) -> Option<(f64, f64)> {
    let (a, b) = value.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

fn parse_indices(value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad landmark index '{v}'")))
        })
        .collect()
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                msg: format!("expected key=value, got '{line}'"),
            })?;
            cfg.apply(key.trim(), value.trim()).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad {what} '{value}'"));
        match key {
            "source" => {
                self.source = match value {
                    "synthetic" => SourceKind::Synthetic,
                    "trace" => SourceKind::Trace,
                    "frames" => SourceKind::Frames,
                    _ => return Err(bad("source")),
                }
            }
            "trace" => self.trace_path = Some(PathBuf::from(value)),
            "frames_dir" => self.frames_dir = Some(PathBuf::from(value)),
            "landmarks" => self.landmarks_path = Some(PathBuf::from(value)),
            "ref" => self.reference_path = Some(PathBuf::from(value)),
            "out" => self.out_path = Some(PathBuf::from(value)),
            "method" => {
                self.processor.spectral.method = match value {
                    "fft" => SpectralMethod::Fft,
                    "welch" => SpectralMethod::Welch,
                    _ => return Err(bad("method")),
                }
            }
            "window" => {
                self.processor.filter_window = match value {
                    "none" => FilterWindow::None,
                    "lanczos" => FilterWindow::Lanczos,
                    "hamming" => FilterWindow::Hamming,
                    _ => return Err(bad("window")),
                }
            }
            "taps" => self.processor.n_taps = value.parse().map_err(|_| bad("taps"))?,
            "hr_filter_band" => {
                self.processor.hr_filter_band_hz = parse_pair(value).ok_or_else(|| bad("band"))?
            }
            "display_filter_band" => {
                self.processor.display_filter_band_hz =
                    parse_pair(value).ok_or_else(|| bad("band"))?
            }
            "rr_cutoff" => {
                self.processor.rr_cutoff_hz = value.parse().map_err(|_| bad("rr_cutoff"))?
            }
            "hr_search_band" => {
                self.processor.spectral.hr_band_hz = parse_pair(value).ok_or_else(|| bad("band"))?
            }
            "rr_search_band" => {
                self.processor.spectral.rr_band_hz = parse_pair(value).ok_or_else(|| bad("band"))?
            }
            "gate_bpm" => {
                self.processor.spectral.hr_gate_bpm = value.parse().map_err(|_| bad("gate"))?
            }
            "tick_period_ms" => {
                self.processor.tick.tick_period_ms = value.parse().map_err(|_| bad("period"))?
            }
            "noface_reset" => {
                self.processor.tick.noface_reset_threshold =
                    value.parse().map_err(|_| bad("threshold"))?
            }
            "nominal_fs" => {
                self.processor.nominal_fs_hz = value.parse().map_err(|_| bad("fs"))?
            }
            "alpha" => self.processor.alpha = value.parse().map_err(|_| bad("alpha"))?,
            "beta" => self.processor.beta = value.parse().map_err(|_| bad("beta"))?,
            "region.left_cheek" | "region.right_cheek" | "region.forehead" => {
                let name = match key {
                    "region.left_cheek" => RegionName::LeftCheek,
                    "region.right_cheek" => RegionName::RightCheek,
                    _ => RegionName::Forehead,
                };
                let spec = RegionSpec::new(name, parse_indices(value)?)?;
                if let Some(slot) = self
                    .processor
                    .regions
                    .iter_mut()
                    .find(|r| r.name == name)
                {
                    *slot = spec;
                } else {
                    self.processor.regions.push(spec);
                }
            }
            "rest_port" => self.net.rest_port = value.parse().map_err(|_| bad("port"))?,
            "stream_port" => self.net.stream_port = value.parse().map_err(|_| bad("port"))?,
            "bind" => self.net.bind_addr = value.to_string(),
            "boundary" => self.net.boundary = value.to_string(),
            "jpeg_quality" => self.net.jpeg_quality = value.parse().map_err(|_| bad("quality"))?,
            "spo2" => self.processor.spo2_stub = value.parse().map_err(|_| bad("spo2"))?,
            "canvas" => {
                let (w, h) = value.split_once('x').ok_or_else(|| bad("canvas"))?;
                self.processor.canvas = (
                    w.trim().parse().map_err(|_| bad("canvas"))?,
                    h.trim().parse().map_err(|_| bad("canvas"))?,
                );
            }
            "synthetic_hr" => self.synthetic.hr_bpm = value.parse().map_err(|_| bad("hr"))?,
            "synthetic_rr" => self.synthetic.rr_brpm = value.parse().map_err(|_| bad("rr"))?,
            "synthetic_fs" => self.synthetic.fs_hz = value.parse().map_err(|_| bad("fs"))?,
            "synthetic_duration" => {
                self.synthetic.duration_s = value.parse().map_err(|_| bad("duration"))?
            }
            "noise_std" => self.synthetic.noise_std = value.parse().map_err(|_| bad("noise"))?,
            "drift" => {
                self.synthetic.baseline_drift_amp = value.parse().map_err(|_| bad("drift"))?
            }
            "seed" => self.synthetic.seed = value.parse().map_err(|_| bad("seed"))?,
            "duration_s" => self.duration_s = Some(value.parse().map_err(|_| bad("duration"))?),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_representative_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pg.conf");
        std::fs::write(
            &path,
            "# server setup\n\
             source=trace\n\
             trace=/data/t.csv\n\
             method=welch\n\
             window=lanczos\n\
             rest_port=9090\n\
             gate_bpm=10\n\
             region.left_cheek=1,2,3,4\n\
             canvas=160x120\n",
        )
        .unwrap();
        let cfg = Config::load(&path).unwrap();
        assert_eq!(cfg.source, SourceKind::Trace);
        assert_eq!(cfg.trace_path.as_deref(), Some(Path::new("/data/t.csv")));
        assert_eq!(cfg.processor.spectral.method, SpectralMethod::Welch);
        assert_eq!(cfg.processor.filter_window, FilterWindow::Lanczos);
        assert_eq!(cfg.net.rest_port, 9090);
        assert_eq!(cfg.processor.spectral.hr_gate_bpm, 10.0);
        assert_eq!(cfg.processor.canvas, (160, 120));
        let left = cfg
            .processor
            .regions
            .iter()
            .find(|r| r.name == RegionName::LeftCheek)
            .unwrap();
        assert_eq!(left.landmark_indices, vec![1, 2, 3, 4]);
    }

    #[test]
    fn rejects_bad_lines_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pg.conf");
        std::fs::write(&path, "method=fft\nnot a pair\n").unwrap();
        match Config::load(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }

        std::fs::write(&path, "method=magic\n").unwrap();
        assert!(Config::load(&path).is_err());

        std::fs::write(&path, "mystery=1\n").unwrap();
        assert!(Config::load(&path).is_err());
    }
}
