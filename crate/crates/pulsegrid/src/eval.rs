//! Accuracy metrics (MAE, RMSE, PCC) against reference HR series, plus the
//! per-stage timing benchmark.

use crate::error::{Error, Result};
use crate::ingest::{stream_from_vec, FrameRecord, ReferenceSeries};
use crate::pipeline::{run_replay, ProcessorConfig, StageStat};

/// MAE/RMSE/PCC over aligned estimate-reference pairs. `pcc` is `None`
/// (undefined, not zero) when either series is constant.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub mae_bpm: f64,
    pub rmse_bpm: f64,
    pub pcc: Option<f64>,
    pub n_points: usize,
}

/// Result of pairing estimates with interpolated reference values.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub pairs: Vec<(f64, f64)>,
    /// Estimates outside the reference time span.
    pub dropped: usize,
}

/// Pairs each estimate `(t, hr)` with the reference linearly interpolated at
/// `t`. Estimates outside the reference span are dropped and counted.
pub fn align_series(estimates: &[(f64, f64)], reference: &ReferenceSeries) -> Result<Alignment> {
    if estimates.is_empty() || reference.samples.is_empty() {
        return Err(Error::EmptyAlignment);
    }
    let ref_samples = &reference.samples;
    let t_first = ref_samples.first().expect("non-empty").0;
    let t_last = ref_samples.last().expect("non-empty").0;

    let mut pairs = Vec::new();
    let mut dropped = 0usize;
    for &(t, hr_est) in estimates {
        if t < t_first || t > t_last {
            dropped += 1;
            continue;
        }
        let idx = ref_samples.partition_point(|&(rt, _)| rt <= t);
        let hr_ref = if idx == 0 {
            ref_samples[0].1
        } else if idx == ref_samples.len() {
            ref_samples[ref_samples.len() - 1].1
        } else {
            let (t0, v0) = ref_samples[idx - 1];
            let (t1, v1) = ref_samples[idx];
            if t1 == t0 {
                v0
            } else {
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        };
        pairs.push((hr_est, hr_ref));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyAlignment);
    }
    Ok(Alignment { pairs, dropped })
}

/// MAE, RMSE, and Pearson correlation over `(estimate, reference)` pairs.
pub fn compute_metrics(pairs: &[(f64, f64)]) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::NoSignal("no pairs to score".into()));
    }
    let n = pairs.len() as f64;
    let mae = pairs.iter().map(|(e, r)| (e - r).abs()).sum::<f64>() / n;
    let rmse = (pairs.iter().map(|(e, r)| (e - r).powi(2)).sum::<f64>() / n).sqrt();

    let pcc = if pairs.len() >= 2 {
        let mean_e = pairs.iter().map(|(e, _)| e).sum::<f64>() / n;
        let mean_r = pairs.iter().map(|(_, r)| r).sum::<f64>() / n;
        let mut cov = 0.0;
        let mut var_e = 0.0;
        let mut var_r = 0.0;
        for &(e, r) in pairs {
            cov += (e - mean_e) * (r - mean_r);
            var_e += (e - mean_e).powi(2);
            var_r += (r - mean_r).powi(2);
        }
        if var_e > 0.0 && var_r > 0.0 {
            Some(cov / (var_e.sqrt() * var_r.sqrt()))
        } else {
            None
        }
    } else {
        None
    };

    Ok(MetricReport {
        mae_bpm: mae,
        rmse_bpm: rmse,
        pcc,
        n_points: pairs.len(),
    })
}

/// Aligned plain-text table plus machine-readable key=value lines for one or
/// more labelled reports.
pub fn format_report_table(rows: &[(String, MetricReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>10} {:>10} {:>8} {:>8}\n",
        "trace", "MAE bpm", "RMSE bpm", "PCC", "n"
    ));
    for (label, report) in rows {
        let pcc = report
            .pcc
            .map(|p| format!("{p:.3}"))
            .unwrap_or_else(|| "undef".to_string());
        out.push_str(&format!(
            "{:<24} {:>10.3} {:>10.3} {:>8} {:>8}\n",
            label, report.mae_bpm, report.rmse_bpm, pcc, report.n_points
        ));
    }
    out.push('\n');
    for (label, report) in rows {
        out.push_str(&format!(
            "trace={label} mae_bpm={:.6} rmse_bpm={:.6} pcc={} n={}\n",
            report.mae_bpm,
            report.rmse_bpm,
            report
                .pcc
                .map(|p| format!("{p:.6}"))
                .unwrap_or_else(|| "undefined".to_string()),
            report.n_points
        ));
    }
    out
}

/// Per-stage timings of a replay over `records`.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub frames: u64,
    pub stages: Vec<StageStat>,
    /// Amortized signal-chain cost per frame.
    pub total_ms_per_frame: f64,
    /// 1000 / total_ms_per_frame.
    pub effective_fps: f64,
    /// Frames over replay wall time.
    pub wall_fps: f64,
}

/// Replays `records` as fast as possible and reports per-stage mean/max
/// latency plus signal-chain throughput.
pub fn run_benchmark(cfg: &ProcessorConfig, records: Vec<FrameRecord>) -> Result<BenchReport> {
    if records.is_empty() {
        return Err(Error::Config("benchmark needs at least one frame".into()));
    }
    let (report, _) = run_replay(stream_from_vec(records), cfg)?;
    let frames = report.frames_processed;
    let total_ms_per_frame = report.signal_chain_ms_per_frame();
    Ok(BenchReport {
        frames,
        stages: report.stage_stats.clone(),
        total_ms_per_frame,
        effective_fps: if total_ms_per_frame > 0.0 {
            1000.0 / total_ms_per_frame
        } else {
            f64::INFINITY
        },
        wall_fps: if report.wall_s > 0.0 {
            frames as f64 / report.wall_s
        } else {
            f64::INFINITY
        },
    })
}

fn stage_label(name: &str) -> &'static str {
    match name {
        "roi_means" => "Skin Segmentation (ROI means)",
        "rgb_to_bvp" => "RGB to BVP",
        "buffering" => "Buffering",
        "filtering" => "Filtering",
        "spectral" => "Spectral Analysis",
        _ => "Other",
    }
}

pub fn format_bench_table(report: &BenchReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<30} {:>12} {:>10} {:>12}\n",
        "Module", "ms/frame", "calls", "max ms/call"
    ));
    for stage in &report.stages {
        let per_frame = stage.mean_ms * stage.count as f64 / report.frames as f64;
        out.push_str(&format!(
            "{:<30} {:>12.6} {:>10} {:>12.6}\n",
            stage_label(stage.name),
            per_frame,
            stage.count,
            stage.max_ms
        ));
    }
    out.push_str(&format!(
        "{:<30} {:>12.6}\n",
        "Total (signal chain)", report.total_ms_per_frame
    ));
    out.push_str(&format!(
        "frames={} effective_fps={:.0} wall_fps={:.0}\n",
        report.frames, report.effective_fps, report.wall_fps
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference(samples: &[(f64, f64)]) -> ReferenceSeries {
        ReferenceSeries {
            samples: samples.to_vec(),
        }
    }

    #[test]
    fn alignment_interpolates_linearly() {
        let refs = reference(&[(0.0, 60.0), (2.0, 62.0)]);
        let aligned = align_series(&[(1.0, 70.0)], &refs).unwrap();
        assert_eq!(aligned.pairs, vec![(70.0, 61.0)]);
        assert_eq!(aligned.dropped, 0);
    }

    #[test]
    fn alignment_drops_out_of_span() {
        let refs = reference(&[(0.0, 60.0), (2.0, 62.0)]);
        let aligned = align_series(&[(1.0, 70.0), (5.0, 80.0)], &refs).unwrap();
        assert_eq!(aligned.pairs.len(), 1);
        assert_eq!(aligned.dropped, 1);
        // count preserved: pairs + dropped = estimates
        assert_eq!(aligned.pairs.len() + aligned.dropped, 2);
    }

    #[test]
    fn disjoint_spans_error() {
        let refs = reference(&[(0.0, 60.0), (2.0, 62.0)]);
        assert!(matches!(
            align_series(&[(5.0, 70.0)], &refs),
            Err(Error::EmptyAlignment)
        ));
        assert!(align_series(&[], &refs).is_err());
    }

    #[test]
    fn metrics_identity_and_offset() {
        let report = compute_metrics(&[(60.0, 60.0), (70.0, 70.0)]).unwrap();
        assert_eq!(report.mae_bpm, 0.0);
        assert_eq!(report.rmse_bpm, 0.0);
        assert!((report.pcc.unwrap() - 1.0).abs() < 1e-12);

        let report = compute_metrics(&[(65.0, 60.0), (75.0, 70.0), (85.0, 80.0)]).unwrap();
        assert!((report.mae_bpm - 5.0).abs() < 1e-12);
        assert!((report.rmse_bpm - 5.0).abs() < 1e-12);
        assert!((report.pcc.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_hand_verified_case() {
        // |60-62| = 2, |70-66| = 4 -> MAE 3; RMSE sqrt((4+16)/2) = sqrt(10).
        let report = compute_metrics(&[(60.0, 62.0), (70.0, 66.0)]).unwrap();
        assert!((report.mae_bpm - 3.0).abs() < 1e-9);
        assert!((report.rmse_bpm - 10.0f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn constant_series_has_undefined_pcc() {
        let report = compute_metrics(&[(60.0, 61.0), (60.0, 63.0)]).unwrap();
        assert!(report.pcc.is_none());
        let report = compute_metrics(&[(60.0, 61.0)]).unwrap();
        assert!(report.pcc.is_none());
    }

    #[test]
    fn rmse_dominates_mae_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let n = rng.gen_range(1..50);
            let pairs: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.gen_range(40.0..180.0), rng.gen_range(40.0..180.0)))
                .collect();
            let report = compute_metrics(&pairs).unwrap();
            assert!(report.rmse_bpm >= report.mae_bpm - 1e-12);
        }
    }

    #[test]
    fn pcc_invariant_under_positive_affine_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pairs: Vec<(f64, f64)> = (0..40)
            .map(|_| (rng.gen_range(50.0..150.0), rng.gen_range(50.0..150.0)))
            .collect();
        let base = compute_metrics(&pairs).unwrap().pcc.unwrap();
        let scaled: Vec<(f64, f64)> = pairs.iter().map(|&(e, r)| (3.0 * e + 7.0, r)).collect();
        let transformed = compute_metrics(&scaled).unwrap().pcc.unwrap();
        assert!((base - transformed).abs() < 1e-9);
    }

    #[test]
    fn benchmark_reports_every_stage() {
        let records = crate::ingest::generate_synthetic(&crate::ingest::SyntheticConfig {
            duration_s: 40.0,
            ..Default::default()
        })
        .unwrap();
        let report = run_benchmark(&ProcessorConfig::default(), records).unwrap();
        assert_eq!(report.frames, 1200);
        assert_eq!(report.stages.len(), 5);
        let table = format_bench_table(&report);
        for label in [
            "Skin Segmentation (ROI means)",
            "RGB to BVP",
            "Buffering",
            "Filtering",
            "Spectral Analysis",
        ] {
            assert!(table.contains(label), "missing row {label} in:\n{table}");
        }
    }
}
