//! Realism and fidelity metrics: KL divergence between intensity or
//! residual histograms, PSNR, SSIM, and the maximum-intensity-difference
//! measure used for blur-model comparisons.

use crate::video::VideoTensor;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Additive smoothing mass added to every bin of the second KLD operand so
/// empty bins do not produce infinities.
pub const KLD_SMOOTHING: f64 = 1e-8;

/// Default bin count for intensity and residual histograms.
pub const DEFAULT_HISTOGRAM_BINS: usize = 256;

/// A normalized histogram over strictly increasing bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<u64>,
    masses: Vec<f64>,
}

impl Histogram {
    /// Builds a histogram with `bins` uniform bins over [lo, hi]; samples
    /// outside the range are clamped into the edge bins.
    pub fn uniform<I: IntoIterator<Item = f64>>(bins: usize, lo: f64, hi: f64, samples: I) -> Result<Self> {
        if bins == 0 || !(lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "histogram needs bins > 0 and lo < hi, got {bins} bins on [{lo}, {hi}]"
            )));
        }
        let mut counts = vec![0u64; bins];
        let scale = bins as f64 / (hi - lo);
        let mut total = 0u64;
        for s in samples {
            let bin = (((s - lo) * scale).floor() as isize).clamp(0, bins as isize - 1) as usize;
            counts[bin] += 1;
            total += 1;
        }
        if total == 0 {
            return Err(Error::InvalidParameter("histogram needs at least one sample".into()));
        }
        let masses = counts.iter().map(|c| *c as f64 / total as f64).collect();
        let edges = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
        Ok(Self {
            edges,
            counts,
            masses,
        })
    }

    /// Builds directly from probability masses (normalized to sum 1).
    pub fn from_masses(edges: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if edges.len() != masses.len() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} edges do not bound {} masses",
                edges.len(),
                masses.len()
            )));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("bin edges must be strictly increasing".into()));
        }
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidParameter("masses must be finite and non-negative".into()));
        }
        let sum: f64 = masses.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidParameter("masses must not all be zero".into()));
        }
        let masses = masses.into_iter().map(|m| m / sum).collect();
        Ok(Self {
            edges,
            counts: Vec::new(),
            masses,
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn bins(&self) -> usize {
        self.masses.len()
    }
}

/// Per-pixel intensity histogram of a clip, 256 uniform bins on [0, 1].
pub fn intensity_histogram(v: &VideoTensor, bins: usize) -> Result<Histogram> {
    Histogram::uniform(bins, 0.0, 1.0, v.data().iter().copied())
}

/// Histogram of per-pixel differences (a - b), uniform bins on [-1, 1].
pub fn residual_histogram(a: &VideoTensor, b: &VideoTensor, bins: usize) -> Result<Histogram> {
    check_pair(a, b)?;
    Histogram::uniform(
        bins,
        -1.0,
        1.0,
        a.data().iter().zip(b.data()).map(|(x, y)| x - y),
    )
}

/// Kullback-Leibler divergence D(p || q) in nats.
///
/// Requires identical bin edges. `q` receives [`KLD_SMOOTHING`] additive
/// mass per bin (then renormalized) so the divergence stays finite; the sum
/// runs over bins with p > 0. Non-negative, zero iff p == q, and not
/// symmetric in its arguments.
pub fn kld(p: &Histogram, q: &Histogram) -> Result<f64> {
    if p.edges != q.edges {
        return Err(Error::DimensionMismatch(
            "KLD operands must share bin edges".into(),
        ));
    }
    let q_total: f64 = q.masses.iter().sum::<f64>() + KLD_SMOOTHING * q.bins() as f64;
    let mut sum = 0.0;
    for (pi, qi) in p.masses.iter().zip(&q.masses) {
        if *pi > 0.0 {
            let q_smoothed = (qi + KLD_SMOOTHING) / q_total;
            sum += pi * (pi / q_smoothed).ln();
        }
    }
    Ok(sum.max(0.0))
}

fn check_pair(a: &VideoTensor, b: &VideoTensor) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.colorspace() != b.colorspace() {
        return Err(Error::ColorspaceMismatch {
            expected: a.colorspace(),
            actual: b.colorspace(),
        });
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB for unit-peak data:
/// `10 log10(1 / MSE)`. Identical inputs report `f64::INFINITY`.
pub fn psnr(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    check_pair(a, b)?;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * mse.log10())
}

/// Maximum absolute difference as a percentage of the unit value range.
pub fn max_intensity_diff(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    check_pair(a, b)?;
    let max = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max);
    Ok(100.0 * max)
}

/// SSIM window: 11 x 11 Gaussian, sigma 1.5.
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn ssim_window_weights() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = (dx * dx + dy * dy) as f64;
            w.push((-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let sum: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Per-frame grayscale (channel mean) plane.
fn gray_plane(v: &VideoTensor, t: usize) -> Vec<f64> {
    let (_, c, h, w) = v.shape();
    let mut plane = vec![0.0f64; h * w];
    for ch in 0..c {
        for (dst, src) in plane.iter_mut().zip(v.plane(t, ch)) {
            *dst += src;
        }
    }
    let inv = 1.0 / c as f64;
    for p in plane.iter_mut() {
        *p *= inv;
    }
    plane
}

/// Mean structural similarity over all full 11 x 11 windows of every frame.
///
/// Standard windowed SSIM with Gaussian weights and stabilizers
/// C1 = (0.01)^2, C2 = (0.03)^2 on unit-range data; frames are converted to
/// grayscale by channel mean.
pub fn ssim(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    check_pair(a, b)?;
    let (frames, _, h, w) = a.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::DimensionMismatch(format!(
            "frames {h}x{w} smaller than {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let weights = ssim_window_weights();
    let r = SSIM_WINDOW / 2;
    let mut total = 0.0;
    let mut windows = 0usize;
    for t in 0..frames {
        let pa = gray_plane(a, t);
        let pb = gray_plane(b, t);
        for cy in r..h - r {
            for cx in r..w - r {
                let mut mu_a = 0.0;
                let mut mu_b = 0.0;
                let mut aa = 0.0;
                let mut bb = 0.0;
                let mut ab = 0.0;
                let mut wi = 0;
                for dy in 0..SSIM_WINDOW {
                    let y = cy + dy - r;
                    for dx in 0..SSIM_WINDOW {
                        let x = cx + dx - r;
                        let va = pa[y * w + x];
                        let vb = pb[y * w + x];
                        let wt = weights[wi];
                        wi += 1;
                        mu_a += wt * va;
                        mu_b += wt * vb;
                        aa += wt * va * va;
                        bb += wt * vb * vb;
                        ab += wt * va * vb;
                    }
                }
                let var_a = aa - mu_a * mu_a;
                let var_b = bb - mu_b * mu_b;
                let cov = ab - mu_a * mu_b;
                let score = ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2));
                total += score;
                windows += 1;
            }
        }
    }
    Ok(total / windows as f64)
}
