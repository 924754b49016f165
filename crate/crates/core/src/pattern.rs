//! Procedural textured clips for demos, benchmarks, and harnesses.
//!
//! Multi-octave value noise gives frames a natural-image-like 1/f spectrum.
//! Clips drift a few pixels per frame and ramp global brightness so that
//! estimators see both motion and exposure variation.

use crate::video::{Colorspace, VideoTensor};

fn hash2(seed: u64, a: i64, b: i64, c: u64) -> f64 {
    // SplitMix-style lattice hash, uniform in [0, 1).
    let mut z = seed
        ^ (a as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (b as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ c.wrapping_mul(0x1656_67B1_9E37_79F9);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Smoothed value noise at continuous coordinates, one octave.
fn value_noise(seed: u64, octave: u64, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = smoothstep(x - x0);
    let fy = smoothstep(y - y0);
    let (xi, yi) = (x0 as i64, y0 as i64);
    let v00 = hash2(seed, xi, yi, octave);
    let v10 = hash2(seed, xi + 1, yi, octave);
    let v01 = hash2(seed, xi, yi + 1, octave);
    let v11 = hash2(seed, xi + 1, yi + 1, octave);
    let top = v00 + (v10 - v00) * fx;
    let bot = v01 + (v11 - v01) * fx;
    top + (bot - top) * fy
}

const OCTAVES: u64 = 5;

fn fractal_value(seed: u64, x: f64, y: f64) -> f64 {
    let mut amp = 1.0;
    let mut freq = 1.0 / 24.0;
    let mut total = 0.0;
    let mut norm = 0.0;
    for o in 0..OCTAVES {
        total += amp * value_noise(seed, o, x * freq, y * freq);
        norm += amp;
        amp *= 0.55;
        freq *= 2.0;
    }
    total / norm
}

/// A single natural-looking grayscale frame in [0, 1], encoded sRGB.
pub fn fractal_frame(height: usize, width: usize, seed: u64) -> VideoTensor {
    fractal_clip_ext(1, 1, height, width, seed, false)
}

/// A textured clip with per-frame drift and a global brightness ramp.
pub fn fractal_clip(frames: usize, channels: usize, height: usize, width: usize, seed: u64) -> VideoTensor {
    fractal_clip_ext(frames, channels, height, width, seed, true)
}

fn fractal_clip_ext(
    frames: usize,
    channels: usize,
    height: usize,
    width: usize,
    seed: u64,
    animate: bool,
) -> VideoTensor {
    let drift = (1.7, 0.9);
    VideoTensor::from_fn(frames, channels, height, width, Colorspace::EncodedSrgb, |t, c, y, x| {
        let (dx, dy) = if animate {
            (t as f64 * drift.0, t as f64 * drift.1)
        } else {
            (0.0, 0.0)
        };
        // Channels share the base field but add a decorrelated detail layer.
        let base = fractal_value(seed, x as f64 + dx, y as f64 + dy);
        let tint = value_noise(seed ^ 0xA5A5, 7 + c as u64, (x as f64 + dx) / 37.0, (y as f64 + dy) / 37.0);
        let v = 0.85 * base + 0.15 * tint;
        // Stretch contrast, then ramp brightness across frames.
        let stretched = 0.5 + (v - 0.5) * 2.4;
        let brightness = if animate && frames > 1 {
            0.62 + 0.38 * t as f64 / (frames - 1) as f64
        } else {
            1.0
        };
        (stretched * brightness).clamp(0.02, 0.98)
    })
    .expect("pattern dimensions are caller-controlled")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = fractal_clip(3, 3, 32, 40, 123);
        let b = fractal_clip(3, 3, 32, 40, 123);
        assert_eq!(a.data(), b.data());
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let c = fractal_clip(3, 3, 32, 40, 124);
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn has_texture_and_brightness_ramp() {
        let v = fractal_clip(5, 1, 64, 64, 11);
        let mean_t: Vec<f64> = (0..5)
            .map(|t| v.frame(t).iter().sum::<f64>() / v.frame(t).len() as f64)
            .collect();
        for w in mean_t.windows(2) {
            assert!(w[1] > w[0], "brightness should ramp: {mean_t:?}");
        }
        // Spatial variance well above zero.
        let m = v.mean();
        let var = v.data().iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.data().len() as f64;
        assert!(var > 0.01, "variance {var}");
    }
}
