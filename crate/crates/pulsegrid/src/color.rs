//! RGB to CIE-Lab conversion for ROI mean triples.
//!
//! Only the per-region mean RGB values are converted, never whole frames.
//! The a* (green-red chrominance) component of a converted sample is the raw
//! blood-volume-pulse sample consumed by the rest of the signal chain.
//!
//! Chain: normalize to [0,1], sRGB gamma linearization, linear RGB -> XYZ,
//! scale XYZ so Y spans [0,100], normalize by the D65 white point, piecewise
//! cube-root transform, Lab outputs.

use crate::error::{Error, Result};

/// sRGB linearization threshold; the gamma branch applies strictly above it.
pub const GAMMA_THRESHOLD: f64 = 0.04045;
/// Divisor of the linear branch.
pub const LINEAR_DIVISOR: f64 = 12.92;
pub const GAMMA_OFFSET: f64 = 0.055;
pub const GAMMA_SCALE: f64 = 1.055;
pub const GAMMA_EXPONENT: f64 = 2.4;

/// Linear sRGB -> XYZ matrix (D65), row-major.
///
/// Full-precision coefficients. Their 4-decimal rounding is the commonly
/// printed matrix; the extra digits are required so that pure white lands on
/// the reference white point to well below the 1e-3 acceptance tolerance
/// (rows sum to 0.95047 / 1.0000001 / 1.08883).
pub const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

/// D65 reference white, on the Y = 100 scale.
pub const WHITE_POINT: [f64; 3] = [95.047, 100.000, 108.883];

/// Threshold of the piecewise cube-root transform.
pub const F_THRESHOLD: f64 = 0.008856;
pub const F_SLOPE: f64 = 7.787;
pub const F_OFFSET: f64 = 4.0 / 29.0;

/// A CIE-Lab triple derived from one ROI mean, tagged with its frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabSample {
    pub l_star: f64,
    pub a_star: f64,
    pub b_star: f64,
    pub timestamp_ms: f64,
    pub frame_index: u64,
}

fn linearize(channel: f64) -> f64 {
    let v = channel / 255.0;
    if v > GAMMA_THRESHOLD {
        ((v + GAMMA_OFFSET) / GAMMA_SCALE).powf(GAMMA_EXPONENT)
    } else {
        v / LINEAR_DIVISOR
    }
}

fn f_transform(v: f64) -> f64 {
    if v > F_THRESHOLD {
        v.cbrt()
    } else {
        F_SLOPE * v + F_OFFSET
    }
}

/// Converts a mean-RGB triple (components in [0,255], reals allowed) to
/// (L*, a*, b*).
pub fn rgb_to_lab(rgb: [f64; 3]) -> Result<(f64, f64, f64)> {
    for (i, &c) in rgb.iter().enumerate() {
        if !c.is_finite() || !(0.0..=255.0).contains(&c) {
            return Err(Error::InvalidSample(format!(
                "rgb component {i} out of range: {c}"
            )));
        }
    }
    let lin = [linearize(rgb[0]), linearize(rgb[1]), linearize(rgb[2])];

    // XYZ on the Y in [0,100] scale matching the white point.
    let mut xyz = [0.0f64; 3];
    for (row, out) in SRGB_TO_XYZ.iter().zip(xyz.iter_mut()) {
        *out = 100.0 * (row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]);
    }

    let fx = f_transform(xyz[0] / WHITE_POINT[0]);
    let fy = f_transform(xyz[1] / WHITE_POINT[1]);
    let fz = f_transform(xyz[2] / WHITE_POINT[2]);

    let l_star = 116.0 * fy - 16.0;
    let a_star = 500.0 * (fx - fy);
    let b_star = 200.0 * (fy - fz);
    Ok((l_star, a_star, b_star))
}

/// Converts an ROI mean into a tagged [`LabSample`].
pub fn lab_sample(rgb: [f64; 3], timestamp_ms: f64, frame_index: u64) -> Result<LabSample> {
    let (l_star, a_star, b_star) = rgb_to_lab(rgb)?;
    Ok(LabSample {
        l_star,
        a_star,
        b_star,
        timestamp_ms,
        frame_index,
    })
}

/// The raw BVP sample is the a* channel, unchanged.
pub fn bvp_sample(lab: &LabSample) -> f64 {
    lab.a_star
}
