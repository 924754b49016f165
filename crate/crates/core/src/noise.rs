//! Physics-based sensor noise: read, shot, quantization, and banding.
//!
//! Each generator is pure given (shape, parameters, seed) and draws from a
//! dedicated per-frame sub-stream, so frames can be generated in parallel
//! and the output is identical at any thread count. No clipping happens
//! here; values are clipped once at encode time.

use crate::parallel::{for_each_chunk, for_each_chunk_pair};
use crate::profile::DegradationProfile;
use crate::seed::{SeedSpec, StreamTag};
use crate::video::{Colorspace, VideoTensor};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

/// Which physical source produced a noise field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseSource {
    Read,
    Shot,
    Quantization,
    Banding,
}

/// A sampled noise field.
///
/// Read and quantization fields are full T x C x H x W; banding is compact,
/// T x C x 1 x W (per-column offsets, theta_b = 0) or T x C x H x 1
/// (per-row offsets, theta_b = 1), and broadcasts along the unit axis.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    source: NoiseSource,
    frames: usize,
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl NoiseField {
    pub fn source(&self) -> NoiseSource {
        self.source
    }

    /// Stored (compact) shape.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.frames, self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[((t * self.channels + c) * self.height + y) * self.width + x]
    }

    /// Adds the field to a video, broadcasting along any unit axis.
    pub fn add_to(&self, v: &mut VideoTensor) -> Result<()> {
        let (t, c, h, w) = v.shape();
        if self.frames != t
            || self.channels != c
            || (self.height != h && self.height != 1)
            || (self.width != w && self.width != 1)
        {
            return Err(Error::DimensionMismatch(format!(
                "noise field {:?} does not broadcast onto {}x{}x{}x{}",
                self.shape(),
                t,
                c,
                h,
                w
            )));
        }
        let broadcast_rows = self.height == 1 && h != 1;
        let broadcast_cols = self.width == 1 && w != 1;
        let plane = h * w;
        let field = &*self;
        for_each_chunk(v.data_mut(), plane, move |plane_idx, chunk| {
            let t = plane_idx / c;
            let ch = plane_idx % c;
            for y in 0..h {
                for x in 0..w {
                    let fy = if broadcast_rows { 0 } else { y };
                    let fx = if broadcast_cols { 0 } else { x };
                    chunk[y * w + x] += field.get(t, ch, fy, fx);
                }
            }
        });
        Ok(())
    }

    /// Expands the compact field to a full-shape tensor (diagnostics).
    pub fn to_tensor(&self, height: usize, width: usize) -> Result<VideoTensor> {
        let mut out = VideoTensor::filled(
            self.frames,
            self.channels,
            height,
            width,
            Colorspace::LinearRgb,
            0.0,
        )?;
        self.add_to(&mut out)?;
        Ok(out)
    }
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "{name} must be finite and non-negative, got {v}"
        )));
    }
    Ok(())
}

/// Read noise: i.i.d. zero-mean Gaussian samples with standard deviation
/// `sigma_r` over the full shape.
pub fn read_noise(
    shape: (usize, usize, usize, usize),
    sigma_r: f64,
    seed: &SeedSpec,
) -> Result<NoiseField> {
    check_rate("sigma_r", sigma_r)?;
    let (t, c, h, w) = shape;
    let mut data = vec![0.0f64; t * c * h * w];
    if sigma_r > 0.0 {
        let normal = Normal::new(0.0, sigma_r)
            .map_err(|e| Error::InvalidParameter(format!("sigma_r: {e}")))?;
        for_each_chunk(&mut data, c * h * w, |frame, chunk| {
            let mut rng = seed.stream(StreamTag::ReadNoise, frame as u64);
            for v in chunk.iter_mut() {
                *v = normal.sample(&mut rng);
            }
        });
    }
    Ok(NoiseField {
        source: NoiseSource::Read,
        frames: t,
        channels: c,
        height: h,
        width: w,
        data,
    })
}

/// Quantization noise: i.i.d. uniform samples on [0, lambda_q).
pub fn quantization_noise(
    shape: (usize, usize, usize, usize),
    lambda_q: f64,
    seed: &SeedSpec,
) -> Result<NoiseField> {
    check_rate("lambda_q", lambda_q)?;
    let (t, c, h, w) = shape;
    let mut data = vec![0.0f64; t * c * h * w];
    if lambda_q > 0.0 {
        for_each_chunk(&mut data, c * h * w, |frame, chunk| {
            let mut rng = seed.stream(StreamTag::QuantizationNoise, frame as u64);
            for v in chunk.iter_mut() {
                *v = rng.random_range(0.0..lambda_q);
            }
        });
    }
    Ok(NoiseField {
        source: NoiseSource::Quantization,
        frames: t,
        channels: c,
        height: h,
        width: w,
        data,
    })
}

/// Banding noise: one Gaussian(0, sigma_b^2) offset per (frame, channel,
/// column) when `theta_b` = 0 (vertical stripes), or per (frame, channel,
/// row) when `theta_b` = 1 (horizontal stripes). Stored compactly.
pub fn banding_noise(
    shape: (usize, usize, usize, usize),
    sigma_b: f64,
    theta_b: u8,
    seed: &SeedSpec,
) -> Result<NoiseField> {
    check_rate("sigma_b", sigma_b)?;
    if theta_b > 1 {
        return Err(Error::InvalidParameter(format!(
            "theta_b must be 0 or 1, got {theta_b}"
        )));
    }
    let (t, c, h, w) = shape;
    let (fh, fw) = if theta_b == 0 { (1, w) } else { (h, 1) };
    let mut data = vec![0.0f64; t * c * fh * fw];
    if sigma_b > 0.0 {
        let normal = Normal::new(0.0, sigma_b)
            .map_err(|e| Error::InvalidParameter(format!("sigma_b: {e}")))?;
        for_each_chunk(&mut data, c * fh * fw, |frame, chunk| {
            let mut rng = seed.stream(StreamTag::BandingNoise, frame as u64);
            for v in chunk.iter_mut() {
                *v = normal.sample(&mut rng);
            }
        });
    }
    Ok(NoiseField {
        source: NoiseSource::Banding,
        frames: t,
        channels: c,
        height: fh,
        width: fw,
        data,
    })
}

/// Shot noise: each sample is replaced by `K * Poisson(x / K)`.
///
/// Poisson draws are exact (inversion for small rates, rejection for large
/// ones, via `rand_distr`), never a Gaussian approximation. `gain_k` = 0
/// disables shot noise: the infinite-photon-count limit of K * Poisson(x/K)
/// is x, so the input passes through bit-exactly. Expectation is preserved.
pub fn apply_shot_noise(x: &VideoTensor, gain_k: f64, seed: &SeedSpec) -> Result<VideoTensor> {
    check_rate("gain_k", gain_k)?;
    x.require_colorspace(Colorspace::LinearRgb)?;
    if let Some(bad) = x.data().iter().find(|v| **v < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "shot noise requires non-negative intensities, got {bad}"
        )));
    }
    let mut out = x.clone();
    if gain_k == 0.0 {
        return Ok(out);
    }
    let chunk_len = x.channels() * x.plane_len();
    for_each_chunk_pair(out.data_mut(), x.data(), chunk_len, |frame, dst, src| {
        let mut rng = seed.stream(StreamTag::ShotNoise, frame as u64);
        for (d, s) in dst.iter_mut().zip(src) {
            *d = if *s == 0.0 {
                // Poisson(0) is identically zero.
                0.0
            } else {
                let poisson = Poisson::new(*s / gain_k).expect("positive rate");
                gain_k * poisson.sample(&mut rng)
            };
        }
    });
    Ok(out)
}

/// Applies the full noise stack of a profile to a darkened, blurred signal:
/// shot noise on the signal first (photon arrival precedes readout), then
/// additive read, quantization, and broadcast banding fields.
///
/// The additive decomposition `out - in` is available to callers for
/// diagnostics. All-zero noise parameters return the input bit-exactly.
pub fn total_noise(
    x: &VideoTensor,
    p: &DegradationProfile,
    seed: &SeedSpec,
) -> Result<VideoTensor> {
    p.check()?;
    let shape = x.shape();
    let mut out = apply_shot_noise(x, p.gain_k, seed)?;
    if p.sigma_read > 0.0 {
        read_noise(shape, p.sigma_read, seed)?.add_to(&mut out)?;
    }
    if p.lambda_q > 0.0 {
        quantization_noise(shape, p.lambda_q, seed)?.add_to(&mut out)?;
    }
    if p.sigma_band > 0.0 {
        banding_noise(shape, p.sigma_band, p.theta_band, seed)?.add_to(&mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_stats(data: &[f64]) -> (f64, f64) {
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn zero_parameters_are_exact_zero_or_identity() {
        let seed = SeedSpec::new(1);
        let shape = (2, 1, 8, 8);
        assert!(read_noise(shape, 0.0, &seed)
            .unwrap()
            .data()
            .iter()
            .all(|v| *v == 0.0));
        assert!(quantization_noise(shape, 0.0, &seed)
            .unwrap()
            .data()
            .iter()
            .all(|v| *v == 0.0));
        assert!(banding_noise(shape, 0.0, 0, &seed)
            .unwrap()
            .data()
            .iter()
            .all(|v| *v == 0.0));

        let x = VideoTensor::filled(2, 1, 8, 8, Colorspace::LinearRgb, 0.4).unwrap();
        let out = apply_shot_noise(&x, 0.0, &seed).unwrap();
        assert_eq!(x.data(), out.data());

        let out = total_noise(&x, &DegradationProfile::NEUTRAL, &seed).unwrap();
        assert_eq!(x.data(), out.data());
    }

    #[test]
    fn invalid_parameters_rejected() {
        let seed = SeedSpec::new(1);
        assert!(read_noise((1, 1, 4, 4), -0.1, &seed).is_err());
        assert!(quantization_noise((1, 1, 4, 4), f64::NAN, &seed).is_err());
        assert!(banding_noise((1, 1, 4, 4), 0.1, 2, &seed).is_err());
        let x = VideoTensor::filled(1, 1, 2, 2, Colorspace::LinearRgb, 0.5).unwrap();
        assert!(apply_shot_noise(&x, -1.0, &seed).is_err());
        let neg =
            VideoTensor::new(1, 1, 1, 2, Colorspace::LinearRgb, vec![0.5, -0.1]).unwrap();
        assert!(apply_shot_noise(&neg, 0.01, &seed).is_err());
    }

    #[test]
    fn read_noise_moments() {
        let seed = SeedSpec::new(77);
        let field = read_noise((4, 1, 500, 500), 0.02, &seed).unwrap();
        let (mean, var) = sample_stats(field.data());
        let n = field.data().len() as f64;
        assert!(mean.abs() < 3.0 * 0.02 / n.sqrt(), "mean {mean}");
        let std = var.sqrt();
        assert!((std - 0.02).abs() < 0.01 * 0.02, "std {std}");
    }

    #[test]
    fn quantization_noise_moments_and_support() {
        let seed = SeedSpec::new(78);
        let lambda = 1.0 / 255.0;
        let field = quantization_noise((4, 1, 500, 500), lambda, &seed).unwrap();
        assert!(field.data().iter().all(|v| (0.0..lambda).contains(v)));
        let (mean, var) = sample_stats(field.data());
        let n = field.data().len() as f64;
        let target_var = lambda * lambda / 12.0;
        assert!((mean - lambda / 2.0).abs() < 3.0 * target_var.sqrt() / n.sqrt());
        assert!((var - target_var).abs() < 0.02 * target_var);
    }

    #[test]
    fn shot_noise_mean_and_variance() {
        let seed = SeedSpec::new(79);
        let x = VideoTensor::filled(4, 1, 500, 500, Colorspace::LinearRgb, 0.5).unwrap();
        let k = 0.01;
        let out = apply_shot_noise(&x, k, &seed).unwrap();
        let residual: Vec<f64> = out.data().iter().zip(x.data()).map(|(o, i)| o - i).collect();
        let (mean, var) = sample_stats(&residual);
        let n = residual.len() as f64;
        // E[out] = x, Var = K * x.
        assert!(mean.abs() < 3.0 * (k * 0.5 / n).sqrt(), "mean {mean}");
        assert!((var - k * 0.5).abs() < 0.02 * k * 0.5, "var {var}");
    }

    #[test]
    fn shot_noise_zero_signal_stays_zero() {
        let seed = SeedSpec::new(80);
        let x = VideoTensor::filled(1, 1, 16, 16, Colorspace::LinearRgb, 0.0).unwrap();
        let out = apply_shot_noise(&x, 0.05, &seed).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn banding_is_constant_within_bands() {
        let seed = SeedSpec::new(81);
        let shape = (2, 3, 24, 32);
        // theta_b = 0: per-column offsets, constant down each column.
        let f0 = banding_noise(shape, 0.015, 0, &seed).unwrap();
        assert_eq!(f0.shape(), (2, 3, 1, 32));
        let full0 = f0.to_tensor(24, 32).unwrap();
        for t in 0..2 {
            for c in 0..3 {
                for x in 0..32 {
                    let v = full0.get(t, c, 0, x);
                    for y in 1..24 {
                        assert_eq!(full0.get(t, c, y, x), v);
                    }
                }
                // Adjacent columns differ almost surely.
                let distinct = (1..32)
                    .filter(|&x| full0.get(t, c, 0, x) != full0.get(t, c, 0, x - 1))
                    .count();
                assert!(distinct > 28);
            }
        }
        // theta_b = 1: per-row offsets.
        let f1 = banding_noise(shape, 0.015, 1, &seed).unwrap();
        assert_eq!(f1.shape(), (2, 3, 24, 1));
        let full1 = f1.to_tensor(24, 32).unwrap();
        for y in 0..24 {
            let v = full1.get(0, 0, y, 0);
            for x in 1..32 {
                assert_eq!(full1.get(0, 0, y, x), v);
            }
        }
    }

    #[test]
    fn banding_std_matches_parameter() {
        let seed = SeedSpec::new(82);
        // 100 frames x 1000 rows = 1e5 band draws.
        let field = banding_noise((100, 1, 1000, 4), 0.02, 1, &seed).unwrap();
        let (_, var) = sample_stats(field.data());
        let std = var.sqrt();
        assert!((std - 0.02).abs() < 0.01 * 0.02, "std {std}");
    }

    #[test]
    fn generators_are_deterministic() {
        let seed = SeedSpec::new(5);
        let a = read_noise((3, 2, 32, 32), 0.01, &seed).unwrap();
        let b = read_noise((3, 2, 32, 32), 0.01, &seed).unwrap();
        assert_eq!(a.data(), b.data());
        let c = read_noise((3, 2, 32, 32), 0.01, &SeedSpec::new(6)).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn read_only_profile_residual_matches_read_stats() {
        let seed = SeedSpec::new(9);
        let mut p = DegradationProfile::NEUTRAL;
        p.sigma_read = 0.03;
        let x = VideoTensor::filled(4, 1, 400, 400, Colorspace::LinearRgb, 0.25).unwrap();
        let out = total_noise(&x, &p, &seed).unwrap();
        let residual: Vec<f64> = out.data().iter().zip(x.data()).map(|(o, i)| o - i).collect();
        let (mean, var) = sample_stats(&residual);
        let n = residual.len() as f64;
        assert!(mean.abs() < 3.0 * 0.03 / n.sqrt());
        assert!((var.sqrt() - 0.03).abs() < 0.01 * 0.03);
    }

    #[test]
    fn full_profile_residual_variance_decomposes() {
        let seed = SeedSpec::new(10);
        let p = DegradationProfile {
            epsilon: 0.0,
            sigma_read: 0.03,
            gain_k: 0.01,
            lambda_q: 1.0 / 255.0,
            sigma_band: 0.01,
            theta_band: 0,
            sigma_hx: 0.0,
            sigma_hy: 0.0,
            theta_h: 0.0,
        };
        let x_val = 0.5;
        let x = VideoTensor::filled(4, 1, 512, 512, Colorspace::LinearRgb, x_val).unwrap();
        let out = total_noise(&x, &p, &seed).unwrap();
        let residual: Vec<f64> = out.data().iter().zip(x.data()).map(|(o, i)| o - i).collect();
        let (_, var) = sample_stats(&residual);
        let expected = p.gain_k * x_val
            + p.sigma_read * p.sigma_read
            + p.lambda_q * p.lambda_q / 12.0
            + p.sigma_band * p.sigma_band;
        assert!(
            (var - expected).abs() < 0.03 * expected,
            "var {var} vs expected {expected}"
        );
    }

    #[test]
    fn frame_substreams_uncorrelated() {
        let seed = SeedSpec::new(12);
        let field = read_noise((2, 1, 256, 256), 0.02, &seed).unwrap();
        let n = 256 * 256;
        let a = &field.data()[..n];
        let b = &field.data()[n..];
        let (ma, _) = sample_stats(a);
        let (mb, _) = sample_stats(b);
        let cov = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / n as f64;
        let corr = cov / (0.02 * 0.02);
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "corr {corr}");
    }
}
