//! Landmark stabilization and region-mean extraction.
//!
//! Landmarks pass through an Alpha-Beta filter to damp frame-to-frame
//! jitter, then fixed cheek/forehead polygons are rasterized (scanline fill,
//! even-odd rule at pixel centers) and each region's mean RGB is taken.
//!
//! The polygons are a convention on the 68-point landmark scheme: the cheeks
//! are fixed index rings, the forehead is the quadrilateral spanned above
//! the eyebrow endpoints, extended upward by 0.6x the eyebrow-to-eye
//! distance.

use crate::error::{Error, Result};
use crate::ingest::{LandmarkSet, RgbFrame, NUM_LANDMARKS};

/// How far above the brow line the forehead quadrilateral extends, as a
/// fraction of the eyebrow-to-eye centroid distance.
pub const FOREHEAD_EXTENSION: f64 = 0.6;

const EYEBROW_RANGE: std::ops::RangeInclusive<usize> = 17..=26;
const EYE_RANGE: std::ops::RangeInclusive<usize> = 36..=47;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionName {
    LeftCheek,
    RightCheek,
    Forehead,
}

impl std::fmt::Display for RegionName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegionName::LeftCheek => write!(f, "left_cheek"),
            RegionName::RightCheek => write!(f, "right_cheek"),
            RegionName::Forehead => write!(f, "forehead"),
        }
    }
}

/// A named polygon over landmark indices.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub name: RegionName,
    pub landmark_indices: Vec<usize>,
}

impl RegionSpec {
    pub fn new(name: RegionName, landmark_indices: Vec<usize>) -> Result<Self> {
        if landmark_indices.len() < 3 {
            return Err(Error::Config(format!(
                "region {name} needs at least 3 landmark indices"
            )));
        }
        if let Some(&bad) = landmark_indices.iter().find(|&&i| i >= NUM_LANDMARKS) {
            return Err(Error::Config(format!(
                "region {name} index {bad} outside [0, {}]",
                NUM_LANDMARKS - 1
            )));
        }
        Ok(Self {
            name,
            landmark_indices,
        })
    }
}

/// The three fixed cheek/forehead regions.
pub fn default_regions() -> Vec<RegionSpec> {
    vec![
        RegionSpec::new(RegionName::LeftCheek, vec![1, 2, 3, 4, 48, 31, 39]).expect("static"),
        RegionSpec::new(RegionName::RightCheek, vec![15, 14, 13, 12, 54, 35, 42]).expect("static"),
        RegionSpec::new(RegionName::Forehead, EYEBROW_RANGE.collect()).expect("static"),
    ]
}

/// Resolves a region spec against concrete landmarks. Cheek polygons are
/// the indexed landmark ring; the forehead is a quadrilateral whose bottom
/// corners are the first and last indexed landmarks and whose top corners
/// sit `FOREHEAD_EXTENSION` times the eyebrow-to-eye distance above them.
pub fn region_polygon(spec: &RegionSpec, landmarks: &LandmarkSet) -> Vec<(f64, f64)> {
    match spec.name {
        RegionName::Forehead => {
            let brow_cy = EYEBROW_RANGE
                .map(|i| landmarks.get(i).1)
                .sum::<f64>()
                / EYEBROW_RANGE.count() as f64;
            let eye_cy = EYE_RANGE.map(|i| landmarks.get(i).1).sum::<f64>()
                / EYE_RANGE.count() as f64;
            let dy = FOREHEAD_EXTENSION * (eye_cy - brow_cy);
            let first = landmarks.get(*spec.landmark_indices.first().expect(">=3 indices"));
            let last = landmarks.get(*spec.landmark_indices.last().expect(">=3 indices"));
            vec![
                first,
                last,
                (last.0, last.1 - dy),
                (first.0, first.1 - dy),
            ]
        }
        _ => spec
            .landmark_indices
            .iter()
            .map(|&i| landmarks.get(i))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Alpha-Beta landmark stabilizer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct TrackedPoint {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
}

/// Per-landmark position/velocity tracker. The first observation
/// initializes positions directly with zero velocity; afterwards each step
/// predicts `x + v*dt`, then corrects by `alpha` (position) and `beta/dt`
/// (velocity) times the residual.
#[derive(Debug, Clone)]
pub struct AlphaBeta {
    alpha: f64,
    beta: f64,
    state: Option<Vec<TrackedPoint>>,
}

impl AlphaBeta {
    pub const DEFAULT_ALPHA: f64 = 0.5;
    pub const DEFAULT_BETA: f64 = 0.1;

    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(0.0 < alpha && alpha <= 1.0) {
            return Err(Error::Config(format!("alpha {alpha} outside (0, 1]")));
        }
        if !(0.0 < beta && beta <= 2.0) {
            return Err(Error::Config(format!("beta {beta} outside (0, 2]")));
        }
        Ok(Self {
            alpha,
            beta,
            state: None,
        })
    }

    pub fn with_defaults() -> Self {
        Self::new(Self::DEFAULT_ALPHA, Self::DEFAULT_BETA).expect("defaults valid")
    }

    pub fn reset(&mut self) {
        self.state = None;
    }

    /// Advances the tracker by one observation, `dt_frames` frames after
    /// the previous one, and returns the smoothed landmarks.
    pub fn step(&mut self, observed: &LandmarkSet, dt_frames: f64) -> Result<LandmarkSet> {
        if dt_frames <= 0.0 || !dt_frames.is_finite() {
            return Err(Error::InvalidSample(format!(
                "alpha-beta dt must be > 0, got {dt_frames}"
            )));
        }
        match &mut self.state {
            None => {
                self.state = Some(
                    observed
                        .points()
                        .iter()
                        .map(|&(x, y)| TrackedPoint { x, y, vx: 0.0, vy: 0.0 })
                        .collect(),
                );
                Ok(observed.clone())
            }
            Some(points) => {
                let mut smoothed = Vec::with_capacity(points.len());
                for (p, &(ox, oy)) in points.iter_mut().zip(observed.points()) {
                    let px = p.x + p.vx * dt_frames;
                    let py = p.y + p.vy * dt_frames;
                    let rx = ox - px;
                    let ry = oy - py;
                    p.x = px + self.alpha * rx;
                    p.y = py + self.alpha * ry;
                    p.vx += self.beta / dt_frames * rx;
                    p.vy += self.beta / dt_frames * ry;
                    smoothed.push((p.x, p.y));
                }
                LandmarkSet::new(smoothed)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Rasterization and region means
// ---------------------------------------------------------------------------

/// Mean RGB over one region, flagged when the polygon covered no pixels and
/// the clamped vertex fallback was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMean {
    pub rgb: [f64; 3],
    pub degenerate: bool,
}

/// Per-frame ROI output: one mean per configured region.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiSample {
    pub regions: Vec<RegionMean>,
    pub timestamp_ms: f64,
    pub frame_index: u64,
}

/// Visits every pixel whose center lies inside the polygon (even-odd rule),
/// clipped to `width` x `height`. Scanline fill over pixel-center rows.
pub fn for_each_covered_pixel<F: FnMut(usize, usize)>(
    polygon: &[(f64, f64)],
    width: usize,
    height: usize,
    mut visit: F,
) {
    if polygon.len() < 3 || width == 0 || height == 0 {
        return;
    }
    let y_min = polygon.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let y_max = polygon.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let row_lo = ((y_min - 0.5).ceil().max(0.0)) as usize;
    let row_hi = (y_max - 0.5).floor().min((height - 1) as f64);
    if row_hi < 0.0 {
        return;
    }
    let row_hi = row_hi as usize;

    let mut crossings: Vec<f64> = Vec::with_capacity(polygon.len());
    for y in row_lo..=row_hi {
        let yc = y as f64 + 0.5;
        crossings.clear();
        for i in 0..polygon.len() {
            let a = polygon[i];
            let b = polygon[(i + 1) % polygon.len()];
            if (a.1 <= yc) != (b.1 <= yc) {
                crossings.push(a.0 + (yc - a.1) * (b.0 - a.0) / (b.1 - a.1));
            }
        }
        crossings.sort_by(|u, v| u.partial_cmp(v).expect("finite crossings"));
        for span in crossings.chunks_exact(2) {
            // Pixel centers x + 0.5 in [span0, span1).
            let x_lo = ((span[0] - 0.5).ceil().max(0.0)) as usize;
            let x_hi_f = (span[1] - 0.5).ceil() - 1.0;
            if x_hi_f < 0.0 {
                continue;
            }
            let x_hi = (x_hi_f as usize).min(width - 1);
            for x in x_lo..=x_hi {
                visit(x, y);
            }
        }
    }
}

fn region_mean(frame: &RgbFrame, polygon: &[(f64, f64)]) -> RegionMean {
    let mut sum = [0.0f64; 3];
    let mut count = 0usize;
    for_each_covered_pixel(polygon, frame.width, frame.height, |x, y| {
        let px = frame.pixel(x, y);
        sum[0] += px[0] as f64;
        sum[1] += px[1] as f64;
        sum[2] += px[2] as f64;
        count += 1;
    });
    if count > 0 {
        return RegionMean {
            rgb: [
                sum[0] / count as f64,
                sum[1] / count as f64,
                sum[2] / count as f64,
            ],
            degenerate: false,
        };
    }
    // Zero coverage: fall back to the mean of the frame values at the
    // clamped polygon vertices and flag degeneracy.
    let mut sum = [0.0f64; 3];
    for &(x, y) in polygon {
        let xi = (x.floor().max(0.0) as usize).min(frame.width - 1);
        let yi = (y.floor().max(0.0) as usize).min(frame.height - 1);
        let px = frame.pixel(xi, yi);
        sum[0] += px[0] as f64;
        sum[1] += px[1] as f64;
        sum[2] += px[2] as f64;
    }
    let n = polygon.len() as f64;
    RegionMean {
        rgb: [sum[0] / n, sum[1] / n, sum[2] / n],
        degenerate: true,
    }
}

/// Rasterizes each region polygon and averages R, G, B over the covered
/// pixels.
pub fn extract_region_means(
    frame: &RgbFrame,
    landmarks: &LandmarkSet,
    regions: &[RegionSpec],
    timestamp_ms: f64,
    frame_index: u64,
) -> Result<RoiSample> {
    if regions.is_empty() {
        return Err(Error::Config("region list is empty".into()));
    }
    let means = regions
        .iter()
        .map(|spec| region_mean(frame, &region_polygon(spec, landmarks)))
        .collect();
    Ok(RoiSample {
        regions: means,
        timestamp_ms,
        frame_index,
    })
}

/// Unweighted mean of the non-degenerate region means.
pub fn combine_regions(sample: &RoiSample) -> Result<[f64; 3]> {
    let mut sum = [0.0f64; 3];
    let mut count = 0usize;
    for region in sample.regions.iter().filter(|r| !r.degenerate) {
        sum[0] += region.rgb[0];
        sum[1] += region.rgb[1];
        sum[2] += region.rgb[2];
        count += 1;
    }
    if count == 0 {
        return Err(Error::NoSignal("all regions degenerate".into()));
    }
    let n = count as f64;
    Ok([sum[0] / n, sum[1] / n, sum[2] / n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_landmarks() -> LandmarkSet {
        // 68 points laid out on an 8-wide grid, jittered off of half-pixel
        // boundaries.
        let points: Vec<(f64, f64)> = (0..NUM_LANDMARKS)
            .map(|i| (10.3 + (i % 8) as f64 * 3.1, 12.7 + (i / 8) as f64 * 2.9))
            .collect();
        LandmarkSet::new(points).unwrap()
    }

    #[test]
    fn default_regions_shape() {
        let regions = default_regions();
        assert_eq!(regions.len(), 3);
        let names: Vec<String> = regions.iter().map(|r| r.name.to_string()).collect();
        assert_eq!(names, vec!["left_cheek", "right_cheek", "forehead"]);
        for r in &regions {
            assert!(r.landmark_indices.iter().all(|&i| i < NUM_LANDMARKS));
            assert!(r.landmark_indices.len() >= 3);
        }
        // Pairwise disjoint index sets.
        for (i, a) in regions.iter().enumerate() {
            for b in &regions[i + 1..] {
                assert!(a
                    .landmark_indices
                    .iter()
                    .all(|ia| !b.landmark_indices.contains(ia)));
            }
        }
    }

    #[test]
    fn region_spec_validation() {
        assert!(RegionSpec::new(RegionName::LeftCheek, vec![0, 1]).is_err());
        assert!(RegionSpec::new(RegionName::LeftCheek, vec![0, 1, 68]).is_err());
        assert!(RegionSpec::new(RegionName::LeftCheek, vec![0, 1, 2]).is_ok());
    }

    #[test]
    fn forehead_extends_upward() {
        let lm = grid_landmarks();
        let spec = &default_regions()[2];
        let poly = region_polygon(spec, &lm);
        assert_eq!(poly.len(), 4);
        assert!(poly[2].1 < poly[1].1, "top corners must sit above the brow line");
        assert_eq!(poly[0], lm.get(17));
        assert_eq!(poly[1], lm.get(26));
    }

    #[test]
    fn alpha_one_beta_zero_is_identity() {
        // beta must be > 0 per the bounds; use the smallest positive beta
        // effect-free case via alpha=1: position copies the observation.
        let mut ab = AlphaBeta::new(1.0, 1e-12).unwrap();
        let lm = grid_landmarks();
        let first = ab.step(&lm, 1.0).unwrap();
        assert_eq!(first, lm, "first call initializes to the observation");
        for _ in 0..5 {
            let out = ab.step(&lm, 1.0).unwrap();
            for (a, b) in out.points().iter().zip(lm.points()) {
                assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn smoothing_reduces_variance_of_stationary_noise() {
        let mut ab = AlphaBeta::new(0.5, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = grid_landmarks();
        let mut raw_dev = 0.0;
        let mut smooth_dev = 0.0;
        let mut n = 0usize;
        for step in 0..100 {
            let noisy: Vec<(f64, f64)> = truth
                .points()
                .iter()
                .map(|&(x, y)| (x + rng.gen_range(-1.0..1.0), y + rng.gen_range(-1.0..1.0)))
                .collect();
            let noisy = LandmarkSet::new(noisy).unwrap();
            let smoothed = ab.step(&noisy, 1.0).unwrap();
            if step >= 10 {
                for ((sx, sy), (&(nx, ny), &(tx, ty))) in smoothed
                    .points()
                    .iter()
                    .zip(noisy.points().iter().zip(truth.points()))
                {
                    raw_dev += (nx - tx).powi(2) + (ny - ty).powi(2);
                    smooth_dev += (sx - tx).powi(2) + (sy - ty).powi(2);
                    n += 1;
                }
            }
        }
        assert!(n > 0);
        assert!(
            smooth_dev < raw_dev,
            "smoothed deviation {smooth_dev} must fall below raw {raw_dev}"
        );
    }

    #[test]
    fn alpha_beta_rejects_bad_dt() {
        let mut ab = AlphaBeta::with_defaults();
        let lm = grid_landmarks();
        assert!(ab.step(&lm, 0.0).is_err());
        assert!(ab.step(&lm, -1.0).is_err());
    }

    /// Brute-force even-odd point-in-polygon test at a pixel center.
    fn center_inside(polygon: &[(f64, f64)], x: usize, y: usize) -> bool {
        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
        let mut inside = false;
        for i in 0..polygon.len() {
            let a = polygon[i];
            let b = polygon[(i + 1) % polygon.len()];
            if (a.1 <= cy) != (b.1 <= cy) {
                let x_at = a.0 + (cy - a.1) * (b.0 - a.0) / (b.1 - a.1);
                if cx < x_at {
                    inside = !inside;
                }
            }
        }
        inside
    }

    #[test]
    fn scanline_matches_brute_force_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            // Random convex-ish fan around a center point.
            let cx = rng.gen_range(3.0..13.0);
            let cy = rng.gen_range(3.0..13.0);
            let k = rng.gen_range(3..8);
            let polygon: Vec<(f64, f64)> = (0..k)
                .map(|i| {
                    let ang = i as f64 / k as f64 * std::f64::consts::TAU;
                    let r = rng.gen_range(1.0..6.0);
                    (cx + r * ang.cos(), cy + r * ang.sin())
                })
                .collect();
            let mut got = Vec::new();
            for_each_covered_pixel(&polygon, 16, 16, |x, y| got.push((x, y)));
            let mut expect = Vec::new();
            for y in 0..16 {
                for x in 0..16 {
                    if center_inside(&polygon, x, y) {
                        expect.push((x, y));
                    }
                }
            }
            got.sort_unstable();
            expect.sort_unstable();
            assert_eq!(got, expect, "polygon {polygon:?}");
        }
    }

    #[test]
    fn uniform_frame_mean_is_the_fill_color() {
        let frame = RgbFrame::filled(16, 16, [100, 50, 25]);
        let poly = [(2.0, 2.0), (9.0, 2.0), (9.0, 9.0), (2.0, 9.0)];
        let mean = region_mean(&frame, &poly);
        assert!(!mean.degenerate);
        assert_eq!(mean.rgb, [100.0, 50.0, 25.0]);
    }

    #[test]
    fn half_frame_polygon_means_only_covered_half() {
        // 4x4 frame, left half (200,0,0), right half black; square polygon
        // over exactly the left half. Covered pixel centers enumerated by
        // brute force are x in {0,1}, all rows.
        let mut frame = RgbFrame::filled(4, 4, [0, 0, 0]);
        for y in 0..4 {
            for x in 0..2 {
                frame.set_pixel(x, y, [200, 0, 0]);
            }
        }
        let poly = [(0.0, 0.0), (2.0, 0.0), (2.0, 4.0), (0.0, 4.0)];
        let mut covered = Vec::new();
        for_each_covered_pixel(&poly, 4, 4, |x, y| covered.push((x, y)));
        assert_eq!(covered.len(), 8);
        assert!(covered.iter().all(|&(x, _)| x < 2));
        let mean = region_mean(&frame, &poly);
        assert_eq!(mean.rgb, [200.0, 0.0, 0.0]);
    }

    #[test]
    fn outside_polygon_flags_degenerate() {
        let frame = RgbFrame::filled(8, 8, [9, 9, 9]);
        let poly = [(100.0, 100.0), (110.0, 100.0), (105.0, 110.0)];
        let mean = region_mean(&frame, &poly);
        assert!(mean.degenerate);
        // Fallback samples clamped vertices, all inside the uniform frame.
        assert_eq!(mean.rgb, [9.0, 9.0, 9.0]);
    }

    #[test]
    fn translation_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut frame = RgbFrame::filled(32, 32, [0, 0, 0]);
        for y in 0..16 {
            for x in 0..16 {
                frame.set_pixel(x, y, [rng.gen(), rng.gen(), rng.gen()]);
            }
        }
        // Shift the content by (7, 5).
        let mut shifted = RgbFrame::filled(32, 32, [0, 0, 0]);
        for y in 0..16 {
            for x in 0..16 {
                shifted.set_pixel(x + 7, y + 5, frame.pixel(x, y));
            }
        }
        let poly = [(2.2, 3.1), (12.7, 2.4), (13.9, 13.5), (3.0, 12.8)];
        let poly_shifted: Vec<(f64, f64)> =
            poly.iter().map(|&(x, y)| (x + 7.0, y + 5.0)).collect();
        let a = region_mean(&frame, &poly);
        let b = region_mean(&shifted, &poly_shifted);
        assert_eq!(a.rgb, b.rgb);
    }

    #[test]
    fn means_bounded_by_frame_extrema() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut frame = RgbFrame::filled(16, 16, [0, 0, 0]);
        for y in 0..16 {
            for x in 0..16 {
                frame.set_pixel(x, y, [rng.gen(), rng.gen(), rng.gen()]);
            }
        }
        let poly = [(1.5, 1.5), (14.0, 2.5), (13.0, 14.0), (2.0, 13.0)];
        let mean = region_mean(&frame, &poly);
        for c in 0..3 {
            let mut lo = 255u8;
            let mut hi = 0u8;
            for y in 0..16 {
                for x in 0..16 {
                    lo = lo.min(frame.pixel(x, y)[c]);
                    hi = hi.max(frame.pixel(x, y)[c]);
                }
            }
            assert!(mean.rgb[c] >= lo as f64 && mean.rgb[c] <= hi as f64);
        }
    }

    #[test]
    fn combine_regions_rules() {
        let sample = RoiSample {
            regions: vec![RegionMean { rgb: [10.0, 20.0, 30.0], degenerate: false }],
            timestamp_ms: 0.0,
            frame_index: 0,
        };
        assert_eq!(combine_regions(&sample).unwrap(), [10.0, 20.0, 30.0]);

        let sample = RoiSample {
            regions: vec![
                RegionMean { rgb: [0.0, 0.0, 0.0], degenerate: false },
                RegionMean { rgb: [100.0, 100.0, 100.0], degenerate: false },
                RegionMean { rgb: [999.0, 999.0, 999.0], degenerate: true },
            ],
            timestamp_ms: 0.0,
            frame_index: 0,
        };
        assert_eq!(combine_regions(&sample).unwrap(), [50.0, 50.0, 50.0]);

        let sample = RoiSample {
            regions: vec![RegionMean { rgb: [1.0, 1.0, 1.0], degenerate: true }],
            timestamp_ms: 0.0,
            frame_index: 0,
        };
        assert!(combine_regions(&sample).is_err());
    }

    #[test]
    fn extract_full_chain_on_uniform_frame() {
        let frame = RgbFrame::filled(64, 64, [120, 90, 60]);
        let lm = grid_landmarks();
        let sample =
            extract_region_means(&frame, &lm, &default_regions(), 33.0, 1).unwrap();
        assert_eq!(sample.regions.len(), 3);
        for region in &sample.regions {
            assert_eq!(region.rgb, [120.0, 90.0, 60.0]);
        }
        assert!(extract_region_means(&frame, &lm, &[], 0.0, 0).is_err());
    }
}
