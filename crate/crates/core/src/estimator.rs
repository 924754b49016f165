//! Calibration-free recovery of a degradation profile from a paired
//! (degraded, clean) clip.
//!
//! Estimation runs exposure -> blur -> noise, each stage conditioning the
//! next:
//!
//! * exposure from per-frame means (blur, shot, read, and banding noise all
//!   preserve the mean; the uniform quantization offset appears as the
//!   regression intercept);
//! * the blur kernel by regularized least squares on correlation tables, a
//!   support-constrained Tikhonov deconvolution accumulated over frames,
//!   followed by a moment fit;
//! * system gain and the signal-independent noise floor by mean-variance
//!   regression of residuals against the predicted clean signal, with
//!   banding split off structurally from row/column mean variances.
//!
//! Read and quantization noise are not identifiable separately from second
//! moments; they are reported jointly as the noise floor, and the recovered
//! profile carries the floor in `sigma_read` with `lambda_q` = 0.

use crate::blur::{convolve, fit_kernel_moments, kernel_radius, BlurKernel, KernelParams};
use crate::profile::DegradationProfile;
use crate::video::{Colorspace, VideoTensor};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Minimum mean squared gradient of the clean clip for deconvolution.
pub const TEXTURE_FLOOR: f64 = 1e-6;

/// Default Tikhonov ridge, relative to the mean diagonal of the normal
/// equations.
pub const DEFAULT_TIKHONOV: f64 = 1e-2;

/// The paper-form angular penalty `1 - cos(|theta - theta'|)`, in [0, 2].
///
/// Zero iff the angles are equal (mod 2 pi); a half-turn difference scores
/// the maximum 2 even though blur kernels are bidirectional.
pub fn angular_distance(theta: f64, theta_prime: f64) -> f64 {
    1.0 - (theta - theta_prime).abs().cos()
}

/// Angular penalty respecting the pi-periodicity of bidirectional kernels:
/// `1 - cos(2 |theta - theta'|)`, in [0, 2], zero at half-turn separation.
pub fn angular_distance_bidirectional(theta: f64, theta_prime: f64) -> f64 {
    1.0 - (2.0 * (theta - theta_prime).abs()).cos()
}

/// Distance between two orientation axes (lines), mod pi, in [0, pi/2].
pub fn axis_angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Maps a blur triple to the major-axis form (sigma_major >= sigma_minor,
/// angle = major-axis orientation in [0, pi)).
pub fn canonical_blur_triple(sigma_hx: f64, sigma_hy: f64, theta_h: f64) -> (f64, f64, f64) {
    if sigma_hx >= sigma_hy {
        (sigma_hx, sigma_hy, theta_h.rem_euclid(PI))
    } else {
        (sigma_hy, sigma_hx, (theta_h + FRAC_PI_2).rem_euclid(PI))
    }
}

/// Diagnostics of the mean-variance regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDiagnostics {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    /// RMS of bin variances around the fitted line.
    pub residual_rms: f64,
    pub bin_counts: Vec<usize>,
    pub bin_mean_intensity: Vec<f64>,
    pub bin_variance: Vec<f64>,
}

/// Diagnostics of the exposure stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureDiagnostics {
    /// Frame-mean regression estimate (the standalone operation).
    pub epsilon_mean_based: f64,
    /// Pixelwise refinement against the blurred reference.
    pub epsilon_refined: f64,
    /// Twice the regression intercept: the mean-based estimate of lambda_q.
    pub lambda_mean_hat: f64,
}

/// Row/column excess variances used for banding separation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandingDiagnostics {
    pub excess_column: f64,
    pub excess_row: f64,
    pub detection_threshold: f64,
}

/// Recovered profile with per-stage diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub profile_hat: DegradationProfile,
    /// Combined signal-independent variance: sigma_r^2 + lambda_q^2/12 + sigma_b^2.
    pub noise_floor_hat: f64,
    pub kernel_hat: BlurKernel,
    pub exposure: ExposureDiagnostics,
    pub regression: RegressionDiagnostics,
    pub banding: BandingDiagnostics,
}

impl EstimationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn check_paired(low: &VideoTensor, high: &VideoTensor) -> Result<()> {
    low.require_colorspace(Colorspace::LinearRgb)?;
    high.require_colorspace(Colorspace::LinearRgb)?;
    if !low.same_shape(high) {
        return Err(Error::DimensionMismatch(format!(
            "low {:?} vs high {:?}",
            low.shape(),
            high.shape()
        )));
    }
    Ok(())
}

/// Estimates the exposure adjustment in stops from paired clips.
///
/// Blur (unit-sum kernel), shot noise, read noise, and banding all preserve
/// frame means, so `mean(low) ~= 2^eps * mean(high) + lambda_q / 2`.
/// When frame brightness varies, regressing per-frame means separates the
/// scale from the quantization offset; otherwise the uncorrected global
/// mean ratio is used.
pub fn estimate_exposure(low: &VideoTensor, high: &VideoTensor) -> Result<f64> {
    check_paired(low, high)?;
    let global_high = high.mean();
    if global_high <= 0.0 {
        return Err(Error::InvalidParameter(
            "zero-mean clean input: exposure undefined".into(),
        ));
    }
    let frames = low.frames();
    let frame_mean = |v: &VideoTensor, t: usize| {
        v.frame(t).iter().sum::<f64>() / v.frame(t).len() as f64
    };
    let xs: Vec<f64> = (0..frames).map(|t| frame_mean(high, t)).collect();
    let ys: Vec<f64> = (0..frames).map(|t| frame_mean(low, t)).collect();

    let spread = xs.iter().cloned().fold(f64::MIN, f64::max)
        - xs.iter().cloned().fold(f64::MAX, f64::min);
    let slope = if frames >= 3 && spread > 1e-9 * global_high {
        let (slope, intercept) = line_fit(&xs, &ys);
        if intercept < 0.0 {
            fit_through_origin(&xs, &ys)
        } else {
            slope
        }
    } else {
        low.mean() / global_high
    };
    if !(slope > 0.0) {
        return Err(Error::InsufficientDynamicRange(format!(
            "non-positive exposure ratio {slope}"
        )));
    }
    Ok(slope.log2())
}

fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return (0.0, my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn fit_through_origin(xs: &[f64], ys: &[f64]) -> f64 {
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let den: f64 = xs.iter().map(|x| x * x).sum();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Result of blur estimation.
#[derive(Debug, Clone)]
pub struct BlurEstimate {
    pub kernel: BlurKernel,
    pub sigma_hx: f64,
    pub sigma_hy: f64,
    pub theta_h: f64,
}

/// Recovers the blur kernel from paired clips by Tikhonov-regularized
/// least squares over its support, then fits (sigma_hx, sigma_hy, theta_h)
/// from the kernel moments (major-axis convention).
///
/// The normal equations are assembled from auto- and cross-correlation
/// tables of the mean-removed planes, computed with FFTs and accumulated
/// over every frame and channel; this is the frequency-domain Wiener
/// estimator constrained to a (2k+1)^2 support. The ridge is
/// `tikhonov` (default [`DEFAULT_TIKHONOV`]) times the mean diagonal.
pub fn estimate_blur(
    low: &VideoTensor,
    high: &VideoTensor,
    epsilon_hat: f64,
) -> Result<BlurEstimate> {
    estimate_blur_with(low, high, epsilon_hat, DEFAULT_TIKHONOV)
}

pub fn estimate_blur_with(
    low: &VideoTensor,
    high: &VideoTensor,
    epsilon_hat: f64,
    tikhonov: f64,
) -> Result<BlurEstimate> {
    check_paired(low, high)?;
    let (frames, channels, h, w) = low.shape();

    let grad = gradient_energy(high);
    if grad < TEXTURE_FLOOR {
        return Err(Error::InsufficientTexture(format!(
            "mean gradient energy {grad:.3e} below floor {TEXTURE_FLOOR:.1e}"
        )));
    }

    // Support radius: wide enough for the default sampling bounds, shrunk
    // for small frames so the correlation window stays inside the plane.
    let max_radius = (h.min(w) - 1) / 5;
    let radius = kernel_radius(4.0).min(max_radius).max(1);
    let side = 2 * radius + 1;
    let taps = side * side;
    let lag_half = 2 * radius;
    let scale = epsilon_hat.exp2();

    // Least squares over interior equations only (margin 2k): there the
    // synthesized clip is an exact linear convolution of the reference, so
    // boundary padding never contaminates the system. Lag tables are exact
    // sums over that fixed window, computed as FFT correlations of the
    // masked plane against the full plane (covariance method).
    if h <= 4 * radius + 1 || w <= 4 * radius + 1 {
        return Err(Error::DimensionMismatch(format!(
            "frames {h}x{w} too small for kernel support radius {radius}"
        )));
    }
    let lag_side = 2 * lag_half + 1;
    let mut auto_acc = vec![0.0f64; lag_side * lag_side];
    let mut cross_acc = vec![0.0f64; lag_side * lag_side];
    let mut corr = CorrelationPlan::new(h, w, lag_half);
    for t in 0..frames {
        for c in 0..channels {
            let mut s_plane: Vec<f64> = high.plane(t, c).iter().map(|v| v * scale).collect();
            let mut l_plane: Vec<f64> = low.plane(t, c).to_vec();
            remove_mean(&mut s_plane);
            remove_mean(&mut l_plane);
            corr.accumulate_masked(&s_plane, &s_plane, &mut auto_acc);
            corr.accumulate_masked(&l_plane, &s_plane, &mut cross_acc);
        }
    }

    // Normal equations over the kernel support:
    //   M[q, q'] = auto[q - q'],  rhs[q] = cross[-q].
    let k = radius as isize;
    let lag_at = |table: &[f64], dy: isize, dx: isize| -> f64 {
        table[((dy + lag_half as isize) * lag_side as isize + dx + lag_half as isize) as usize]
    };
    let offsets: Vec<(isize, isize)> = (-k..=k)
        .flat_map(|dy| (-k..=k).map(move |dx| (dy, dx)))
        .collect();
    let mut m = DMatrix::<f64>::zeros(taps, taps);
    let mut rhs = DVector::<f64>::zeros(taps);
    for (i, &(ay, ax)) in offsets.iter().enumerate() {
        rhs[i] = lag_at(&cross_acc, -ay, -ax);
        for (j, &(by, bx)) in offsets.iter().enumerate() {
            m[(i, j)] = lag_at(&auto_acc, ay - by, ax - bx);
        }
    }
    let mean_diag = m.diagonal().sum() / taps as f64;
    if !(mean_diag > 0.0) {
        return Err(Error::InsufficientTexture(
            "clean clip has no variance after mean removal".into(),
        ));
    }

    // The lag-window approximation can leave the system slightly
    // indefinite, so solve through an eigenvalue-clipped decomposition:
    // every mode weaker than the ridge is regularized to it.
    let ridge = tikhonov.max(1e-8) * mean_diag;
    let eigen = SymmetricEigen::new(m);
    let mut coeffs = eigen.eigenvectors.tr_mul(&rhs);
    for (c, lambda) in coeffs.iter_mut().zip(eigen.eigenvalues.iter()) {
        *c /= lambda.max(ridge);
    }
    let solution = &eigen.eigenvectors * coeffs;

    let kernel = clean_kernel(radius, solution.as_slice())?;
    let (sigma_hx, sigma_hy, theta_h) = fit_kernel_moments(&kernel);
    Ok(BlurEstimate {
        kernel,
        sigma_hx,
        sigma_hy,
        theta_h,
    })
}

/// Background-subtracts and thresholds a raw deconvolved kernel.
fn clean_kernel(radius: usize, raw: &[f64]) -> Result<BlurKernel> {
    let side = 2 * radius + 1;
    // Border ring median approximates the noise floor of the solution.
    let mut ring = Vec::with_capacity(4 * side);
    for i in 0..side {
        ring.push(raw[i]);
        ring.push(raw[(side - 1) * side + i]);
        ring.push(raw[i * side]);
        ring.push(raw[i * side + side - 1]);
    }
    ring.sort_by(|a, b| a.total_cmp(b));
    let background = ring[ring.len() / 2];
    let mut weights: Vec<f64> = raw.iter().map(|v| v - background).collect();
    let peak = weights.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return Err(Error::InsufficientDynamicRange(
            "deconvolved kernel has no positive mass".into(),
        ));
    }
    for wv in weights.iter_mut() {
        if *wv < 1e-3 * peak {
            *wv = 0.0;
        }
    }
    BlurKernel::from_weights(radius, weights, KernelParams::Empirical)
}

fn remove_mean(plane: &mut [f64]) {
    let mean = plane.iter().sum::<f64>() / plane.len() as f64;
    for v in plane.iter_mut() {
        *v -= mean;
    }
}

fn gradient_energy(v: &VideoTensor) -> f64 {
    let (frames, channels, h, w) = v.shape();
    let mut acc = 0.0;
    let mut n = 0usize;
    for t in 0..frames {
        for c in 0..channels {
            let p = v.plane(t, c);
            for y in 0..h - 1 {
                for x in 0..w - 1 {
                    let gx = p[y * w + x + 1] - p[y * w + x];
                    let gy = p[(y + 1) * w + x] - p[y * w + x];
                    acc += gx * gx + gy * gy;
                    n += 1;
                }
            }
        }
    }
    acc / n as f64
}

/// FFT-based linear correlation of a masked plane against a full plane,
/// restricted to lags within +-half.
struct CorrelationPlan {
    h: usize,
    w: usize,
    half: usize,
    fh: usize,
    fw: usize,
    planner: FftPlanner<f64>,
}

impl CorrelationPlan {
    fn new(h: usize, w: usize, half: usize) -> Self {
        let fh = (h + 2 * half + 1).next_power_of_two();
        let fw = (w + 2 * half + 1).next_power_of_two();
        Self {
            h,
            w,
            half,
            fh,
            fw,
            planner: FftPlanner::new(),
        }
    }

    /// Adds `corr[d] = sum_{p in interior} a[p] * b[p + d]` for |d| <= half
    /// onto `acc`, where the interior excludes a `half`-wide margin so every
    /// product stays inside the frame.
    fn accumulate_masked(&mut self, a: &[f64], b: &[f64], acc: &mut [f64]) {
        let (h, w, fh, fw, half) = (self.h, self.w, self.fh, self.fw, self.half);
        let mut fa = vec![Complex::new(0.0, 0.0); fh * fw];
        let mut fb = vec![Complex::new(0.0, 0.0); fh * fw];
        for y in 0..h {
            for x in 0..w {
                if y >= half && y < h - half && x >= half && x < w - half {
                    fa[y * fw + x].re = a[y * w + x];
                }
                fb[y * fw + x].re = b[y * w + x];
            }
        }
        fft2(&mut self.planner, &mut fa, fh, fw, false);
        fft2(&mut self.planner, &mut fb, fh, fw, false);
        // Correlation theorem: corr(a, b)[d] = IFFT(conj(A) . B)[d].
        for (va, vb) in fa.iter_mut().zip(&fb) {
            *va = va.conj() * vb;
        }
        fft2(&mut self.planner, &mut fa, fh, fw, true);
        let norm = 1.0 / (fh * fw) as f64;
        let half = half as isize;
        let side = 2 * half + 1;
        for dy in -half..=half {
            for dx in -half..=half {
                let iy = dy.rem_euclid(fh as isize) as usize;
                let ix = dx.rem_euclid(fw as isize) as usize;
                let idx = ((dy + half) * side + dx + half) as usize;
                acc[idx] += fa[iy * fw + ix].re * norm;
            }
        }
    }
}

fn fft2(planner: &mut FftPlanner<f64>, data: &mut [Complex<f64>], h: usize, w: usize, inverse: bool) {
    let row_fft = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    for row in data.chunks_mut(w) {
        row_fft.process(row);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }
}

/// Result of noise estimation.
#[derive(Debug, Clone)]
pub struct NoiseEstimate {
    pub gain_k_hat: f64,
    pub noise_floor_hat: f64,
    pub sigma_band_hat: f64,
    pub theta_band_hat: u8,
    pub epsilon_refined: f64,
    pub lambda_mean_hat: f64,
    pub regression: RegressionDiagnostics,
    pub banding: BandingDiagnostics,
}

const NOISE_BINS: usize = 12;
const MIN_BIN_SAMPLES: usize = 20;

/// Estimates system gain, the signal-independent noise floor, and banding
/// from the residual between the degraded clip and its predicted clean
/// signal `s = 2^eps * (kernel * high) + lambda_q/2`.
///
/// The exposure scale is first refined by pixelwise regression of `low`
/// against the blurred reference (sharper than frame means once the kernel
/// is known); residual variance is then regressed against `s` over
/// equal-count intensity bins: slope -> gain K, intercept -> noise floor,
/// both projected to be non-negative. Banding is separated by comparing
/// per-column and per-row mean variances against the i.i.d. prediction.
pub fn estimate_noise(
    low: &VideoTensor,
    high: &VideoTensor,
    epsilon_hat: f64,
    kernel_hat: &BlurKernel,
) -> Result<NoiseEstimate> {
    check_paired(low, high)?;
    let (frames, channels, h, w) = low.shape();
    let blurred = convolve(high, kernel_hat)?;
    let margin = kernel_hat.radius();
    if h <= 2 * margin + 4 || w <= 2 * margin + 4 {
        return Err(Error::DimensionMismatch(format!(
            "frames {h}x{w} too small for kernel margin {margin}"
        )));
    }

    // Pixelwise exposure refinement over the interior.
    let mut sum_x = 0.0;
    let mut sum_y = 0.0;
    let mut n = 0.0f64;
    for t in 0..frames {
        for c in 0..channels {
            let b = blurred.plane(t, c);
            let l = low.plane(t, c);
            for y in margin..h - margin {
                for x in margin..w - margin {
                    sum_x += b[y * w + x];
                    sum_y += l[y * w + x];
                    n += 1.0;
                }
            }
        }
    }
    let mean_x = sum_x / n;
    let mean_y = sum_y / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for t in 0..frames {
        for c in 0..channels {
            let b = blurred.plane(t, c);
            let l = low.plane(t, c);
            for y in margin..h - margin {
                for x in margin..w - margin {
                    let dx = b[y * w + x] - mean_x;
                    sxx += dx * dx;
                    sxy += dx * (l[y * w + x] - mean_y);
                }
            }
        }
    }
    if sxx <= 0.0 {
        return Err(Error::InsufficientDynamicRange(
            "blurred reference has no variance in the interior".into(),
        ));
    }
    let mut scale = sxy / sxx;
    let mut offset = mean_y - scale * mean_x;
    if offset < 0.0 {
        // Refit through the origin: the quantization offset cannot be
        // negative.
        offset = 0.0;
        let mut num = 0.0;
        let mut den = 0.0;
        for t in 0..frames {
            for c in 0..channels {
                let b = blurred.plane(t, c);
                let l = low.plane(t, c);
                for y in margin..h - margin {
                    for x in margin..w - margin {
                        num += b[y * w + x] * l[y * w + x];
                        den += b[y * w + x] * b[y * w + x];
                    }
                }
            }
        }
        if den > 0.0 {
            scale = num / den;
        }
        if !(scale > 0.0) {
            scale = epsilon_hat.exp2();
        }
    }
    if !(scale > 0.0) {
        return Err(Error::InsufficientDynamicRange(format!(
            "non-positive refined exposure scale {scale}"
        )));
    }
    let epsilon_refined = scale.log2();
    let lambda_mean_hat = (2.0 * offset).max(0.0);

    // Residuals and per-plane banding statistics over the interior.
    let rows = h - 2 * margin;
    let cols = w - 2 * margin;
    let mut excess_col_sum = 0.0;
    let mut excess_row_sum = 0.0;
    let mut excess_col_sq = 0.0;
    let mut excess_row_sq = 0.0;
    let mut vpx_mean = 0.0;
    let planes = (frames * channels) as f64;
    let mut s_all: Vec<f64> = Vec::with_capacity(frames * channels * rows * cols);
    let mut r_all: Vec<f64> = Vec::with_capacity(frames * channels * rows * cols);
    for t in 0..frames {
        for c in 0..channels {
            let b = blurred.plane(t, c);
            let l = low.plane(t, c);
            let mut col_means = vec![0.0f64; cols];
            let mut row_means = vec![0.0f64; rows];
            let mut plane_sum = 0.0;
            let mut plane_sq = 0.0;
            for y in 0..rows {
                for x in 0..cols {
                    let idx = (y + margin) * w + x + margin;
                    let s = (scale * b[idx] + offset).max(0.0);
                    let r = l[idx] - s;
                    s_all.push(s);
                    r_all.push(r);
                    col_means[x] += r;
                    row_means[y] += r;
                    plane_sum += r;
                    plane_sq += r * r;
                }
            }
            let count = (rows * cols) as f64;
            let plane_mean = plane_sum / count;
            let vpx = (plane_sq / count - plane_mean * plane_mean).max(0.0);
            vpx_mean += vpx / planes;
            for m in col_means.iter_mut() {
                *m /= rows as f64;
            }
            for m in row_means.iter_mut() {
                *m /= cols as f64;
            }
            let vcol = variance(&col_means);
            let vrow = variance(&row_means);
            let ec = vcol - vpx / rows as f64;
            let er = vrow - vpx / cols as f64;
            excess_col_sum += ec;
            excess_row_sum += er;
            excess_col_sq += ec * ec;
            excess_row_sq += er * er;
        }
    }
    let excess_col = excess_col_sum / planes;
    let excess_row = excess_row_sum / planes;
    // Detection threshold: 3 x the larger of the empirical spread across
    // planes and the chi-square sampling error under no banding.
    let emp_se = |sum: f64, sq: f64| {
        if planes > 1.0 {
            ((sq / planes - (sum / planes) * (sum / planes)).max(0.0) / planes).sqrt()
        } else {
            0.0
        }
    };
    let theo_col = vpx_mean / rows as f64 * (2.0 / (cols as f64 - 1.0)).sqrt() / planes.sqrt();
    let theo_row = vpx_mean / cols as f64 * (2.0 / (rows as f64 - 1.0)).sqrt() / planes.sqrt();
    let thr_col = 3.0 * emp_se(excess_col_sum, excess_col_sq).max(theo_col);
    let thr_row = 3.0 * emp_se(excess_row_sum, excess_row_sq).max(theo_row);
    let threshold = thr_col.max(thr_row);

    let (sigma_band_hat, theta_band_hat) = if excess_col >= excess_row {
        if excess_col > thr_col && excess_col > 0.0 {
            ((excess_col / (1.0 - 1.0 / rows as f64)).sqrt(), 0u8)
        } else {
            (0.0, 0)
        }
    } else if excess_row > thr_row && excess_row > 0.0 {
        ((excess_row / (1.0 - 1.0 / cols as f64)).sqrt(), 1u8)
    } else {
        (0.0, 0)
    };

    // Equal-count binning of residual variance against predicted intensity.
    let mut order: Vec<u32> = (0..s_all.len() as u32).collect();
    order.sort_by(|&a, &b| s_all[a as usize].total_cmp(&s_all[b as usize]));
    let total = order.len();
    let per_bin = total / NOISE_BINS;
    if per_bin < MIN_BIN_SAMPLES {
        return Err(Error::InsufficientDynamicRange(format!(
            "{total} interior samples is too few for {NOISE_BINS} bins"
        )));
    }
    let mut bin_counts = Vec::with_capacity(NOISE_BINS);
    let mut bin_mean = Vec::with_capacity(NOISE_BINS);
    let mut bin_var = Vec::with_capacity(NOISE_BINS);
    for b in 0..NOISE_BINS {
        let start = b * per_bin;
        let end = if b + 1 == NOISE_BINS {
            total
        } else {
            (b + 1) * per_bin
        };
        let idx = &order[start..end];
        let nb = idx.len() as f64;
        let ms = idx.iter().map(|&i| s_all[i as usize]).sum::<f64>() / nb;
        let mr = idx.iter().map(|&i| r_all[i as usize]).sum::<f64>() / nb;
        let vr = idx
            .iter()
            .map(|&i| {
                let d = r_all[i as usize] - mr;
                d * d
            })
            .sum::<f64>()
            / (nb - 1.0);
        bin_counts.push(idx.len());
        bin_mean.push(ms);
        bin_var.push(vr);
    }
    let s_spread = bin_mean[NOISE_BINS - 1] - bin_mean[0];
    let usable = bin_mean
        .windows(2)
        .filter(|w| w[1] > w[0] + 1e-15)
        .count()
        + 1;
    if usable < 3 || s_spread <= 0.0 {
        return Err(Error::InsufficientDynamicRange(format!(
            "only {usable} distinct intensity bins"
        )));
    }

    // Iteratively reweighted least squares: Var(sample variance) scales
    // with the squared true variance, so weights come from the current fit.
    let mut slope = 0.0;
    let mut intercept = bin_var.iter().sum::<f64>() / NOISE_BINS as f64;
    let mut slope_se = 0.0;
    for _ in 0..3 {
        let mut wsum = 0.0;
        let mut wx = 0.0;
        let mut wy = 0.0;
        for b in 0..NOISE_BINS {
            let model = (slope * bin_mean[b] + intercept).max(1e-12);
            let w = bin_counts[b] as f64 / (model * model);
            wsum += w;
            wx += w * bin_mean[b];
            wy += w * bin_var[b];
        }
        let xbar = wx / wsum;
        let ybar = wy / wsum;
        let mut sxx_w = 0.0;
        let mut sxy_w = 0.0;
        for b in 0..NOISE_BINS {
            let model = (slope * bin_mean[b] + intercept).max(1e-12);
            let w = bin_counts[b] as f64 / (model * model);
            sxx_w += w * (bin_mean[b] - xbar) * (bin_mean[b] - xbar);
            sxy_w += w * (bin_mean[b] - xbar) * (bin_var[b] - ybar);
        }
        if sxx_w <= 0.0 {
            break;
        }
        slope = sxy_w / sxx_w;
        intercept = ybar - slope * xbar;
        // Non-negativity projections.
        if slope < 0.0 {
            slope = 0.0;
            intercept = ybar;
        }
        if intercept < 0.0 {
            intercept = 0.0;
            let mut num = 0.0;
            let mut den = 0.0;
            for b in 0..NOISE_BINS {
                let model = (slope * bin_mean[b] + 1e-12).max(1e-12);
                let w = bin_counts[b] as f64 / (model * model);
                num += w * bin_mean[b] * bin_var[b];
                den += w * bin_mean[b] * bin_mean[b];
            }
            slope = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
        }
        slope_se = (2.0 / sxx_w).sqrt();
    }
    let residual_rms = (bin_mean
        .iter()
        .zip(&bin_var)
        .map(|(s, v)| {
            let d = v - (slope * s + intercept);
            d * d
        })
        .sum::<f64>()
        / NOISE_BINS as f64)
        .sqrt();

    Ok(NoiseEstimate {
        gain_k_hat: slope.max(0.0),
        noise_floor_hat: intercept.max(0.0),
        sigma_band_hat,
        theta_band_hat,
        epsilon_refined,
        lambda_mean_hat,
        regression: RegressionDiagnostics {
            slope: slope.max(0.0),
            intercept: intercept.max(0.0),
            slope_std_error: slope_se,
            residual_rms,
            bin_counts,
            bin_mean_intensity: bin_mean,
            bin_variance: bin_var,
        },
        banding: BandingDiagnostics {
            excess_column: excess_col,
            excess_row: excess_row,
            detection_threshold: threshold,
        },
    })
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Nearest angle in [0, pi/2], treating orientations as pi-periodic lines.
/// Valid profiles can only express major axes in the first quadrant.
fn project_axis_angle(phi: f64) -> f64 {
    let phi = phi.rem_euclid(PI);
    if phi <= FRAC_PI_2 {
        phi
    } else if PI - phi < phi - FRAC_PI_2 {
        0.0
    } else {
        FRAC_PI_2
    }
}

/// Full profile recovery: exposure, then blur, then noise.
pub fn estimate_profile(low: &VideoTensor, high: &VideoTensor) -> Result<EstimationReport> {
    let epsilon_mean_based = estimate_exposure(low, high)?;
    let blur = estimate_blur(low, high, epsilon_mean_based)?;
    let noise = estimate_noise(low, high, epsilon_mean_based, &blur.kernel)?;

    let sigma_band_sq = noise.sigma_band_hat * noise.sigma_band_hat;
    let profile_hat = DegradationProfile {
        epsilon: noise.epsilon_refined,
        sigma_read: (noise.noise_floor_hat - sigma_band_sq).max(0.0).sqrt(),
        gain_k: noise.gain_k_hat,
        // Not separable from read noise via second moments; folded into the
        // floor by convention.
        lambda_q: 0.0,
        sigma_band: noise.sigma_band_hat,
        theta_band: noise.theta_band_hat,
        sigma_hx: blur.sigma_hx.max(blur.sigma_hy),
        sigma_hy: blur.sigma_hx.min(blur.sigma_hy),
        theta_h: project_axis_angle(blur.theta_h),
    };
    debug_assert!(profile_hat.is_valid(), "estimator produced {profile_hat:?}");

    Ok(EstimationReport {
        profile_hat,
        noise_floor_hat: noise.noise_floor_hat,
        kernel_hat: blur.kernel,
        exposure: ExposureDiagnostics {
            epsilon_mean_based,
            epsilon_refined: noise.epsilon_refined,
            lambda_mean_hat: noise.lambda_mean_hat,
        },
        regression: noise.regression,
        banding: noise.banding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorspace::linearize;
    use crate::pattern;
    use crate::profile::DegradationProfile;
    use crate::synthesis::{degrade, SynthesisRequest};
    use crate::video::Colorspace;
    use crate::SeedSpec;

    fn textured_linear_clip(frames: usize, h: usize, w: usize, seed: u64) -> VideoTensor {
        linearize(&pattern::fractal_clip(frames, 3, h, w, seed)).unwrap()
    }

    fn synthesize(high: &VideoTensor, p: &DegradationProfile, seed: u64) -> VideoTensor {
        let mut req = SynthesisRequest::new(high.clone(), *p, SeedSpec::new(seed));
        req.output_space = Colorspace::LinearRgb;
        degrade(&req).unwrap().video
    }

    #[test]
    fn angular_distance_table() {
        assert_eq!(angular_distance(0.7, 0.7), 0.0);
        assert!((angular_distance(0.0, FRAC_PI_2) - 1.0).abs() < 1e-12);
        assert!((angular_distance(0.0, PI) - 2.0).abs() < 1e-12);
        // Symmetry.
        assert_eq!(angular_distance(0.3, 1.1), angular_distance(1.1, 0.3));
        // Bidirectional variant is pi-periodic.
        assert!(angular_distance_bidirectional(0.0, PI).abs() < 1e-12);
        assert!((angular_distance_bidirectional(0.0, FRAC_PI_2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn axis_distance_wraps() {
        assert!((axis_angle_distance(0.05, PI - 0.05) - 0.1).abs() < 1e-12);
        assert!(axis_angle_distance(1.0, 1.0) < 1e-15);
    }

    #[test]
    fn exposure_identical_clips_is_zero() {
        let v = textured_linear_clip(4, 48, 48, 1);
        assert!(estimate_exposure(&v, &v).unwrap().abs() < 1e-9);
    }

    #[test]
    fn exposure_pure_darkening_is_exact() {
        let v = textured_linear_clip(4, 48, 48, 2);
        let dark = v.map(|x| 0.25 * x);
        let eps = estimate_exposure(&dark, &v).unwrap();
        assert!((eps + 2.0).abs() < 1e-6, "eps = {eps}");
    }

    #[test]
    fn exposure_zero_mean_clean_rejected() {
        let z = VideoTensor::filled(2, 1, 8, 8, Colorspace::LinearRgb, 0.0).unwrap();
        assert!(estimate_exposure(&z, &z).is_err());
    }

    #[test]
    fn exposure_full_severity_within_tenth_stop() {
        let high = textured_linear_clip(5, 96, 96, 3);
        let p = DegradationProfile {
            epsilon: -3.0,
            sigma_read: 0.025,
            gain_k: 0.01,
            lambda_q: 0.5 / 255.0,
            sigma_band: 0.01,
            theta_band: 0,
            sigma_hx: 2.0,
            sigma_hy: 1.0,
            theta_h: 0.5,
        };
        let low = synthesize(&high, &p, 11);
        let eps = estimate_exposure(&low, &high).unwrap();
        assert!((eps + 3.0).abs() < 0.1, "eps = {eps}");
    }

    #[test]
    fn blur_recovery_with_mild_noise() {
        let high = textured_linear_clip(5, 128, 128, 4);
        let p = DegradationProfile {
            epsilon: -1.0,
            sigma_read: 0.002,
            gain_k: 0.0005,
            lambda_q: 0.0,
            sigma_band: 0.0,
            theta_band: 0,
            sigma_hx: 2.0,
            sigma_hy: 0.5,
            theta_h: std::f64::consts::FRAC_PI_4,
        };
        let low = synthesize(&high, &p, 21);
        let est = estimate_blur(&low, &high, -1.0).unwrap();
        assert!((est.sigma_hx - 2.0).abs() < 0.2, "sx = {}", est.sigma_hx);
        assert!((est.sigma_hy - 0.5).abs() < 0.05 + 0.05, "sy = {}", est.sigma_hy);
        let dtheta = axis_angle_distance(est.theta_h, std::f64::consts::FRAC_PI_4);
        assert!(dtheta < 5.0f64.to_radians(), "dtheta = {dtheta}");
    }

    #[test]
    fn blur_no_blur_recovers_near_delta() {
        let high = textured_linear_clip(4, 96, 96, 5);
        let mut p = DegradationProfile::NEUTRAL;
        p.epsilon = -1.0;
        p.sigma_read = 0.005;
        let low = synthesize(&high, &p, 22);
        let est = estimate_blur(&low, &high, -1.0).unwrap();
        assert!(est.sigma_hx < 0.2, "sx = {}", est.sigma_hx);
        assert!(est.sigma_hy < 0.2, "sy = {}", est.sigma_hy);
    }

    #[test]
    fn blur_isotropic_recovers_equal_sigmas() {
        let high = textured_linear_clip(5, 128, 128, 6);
        let mut p = DegradationProfile::NEUTRAL;
        p.epsilon = -1.0;
        p.sigma_read = 0.002;
        p.sigma_hx = 1.5;
        p.sigma_hy = 1.5;
        let low = synthesize(&high, &p, 23);
        let est = estimate_blur(&low, &high, -1.0).unwrap();
        assert!((est.sigma_hx - 1.5).abs() < 0.075, "sx = {}", est.sigma_hx);
        assert!((est.sigma_hy - 1.5).abs() < 0.075, "sy = {}", est.sigma_hy);
        assert!((est.sigma_hx - est.sigma_hy).abs() < 0.05 * est.sigma_hx);
    }

    #[test]
    fn blur_flat_clip_hits_texture_floor() {
        let flat = VideoTensor::filled(3, 1, 64, 64, Colorspace::LinearRgb, 0.4).unwrap();
        assert!(matches!(
            estimate_blur(&flat, &flat, 0.0),
            Err(Error::InsufficientTexture(_))
        ));
    }

    #[test]
    fn noise_free_pair_regresses_to_zero() {
        let high = textured_linear_clip(4, 96, 96, 7);
        let mut p = DegradationProfile::NEUTRAL;
        p.epsilon = -1.0;
        let low = synthesize(&high, &p, 31);
        let kernel = crate::blur::BlurKernel::identity();
        let est = estimate_noise(&low, &high, -1.0, &kernel).unwrap();
        assert!(est.gain_k_hat < 1e-6, "K = {}", est.gain_k_hat);
        assert!(est.noise_floor_hat < 1e-8, "floor = {}", est.noise_floor_hat);
        assert_eq!(est.sigma_band_hat, 0.0);
    }

    #[test]
    fn noise_gain_and_floor_recovered() {
        let high = textured_linear_clip(8, 128, 128, 8);
        let p = DegradationProfile {
            epsilon: 0.0,
            sigma_read: 0.02,
            gain_k: 0.01,
            lambda_q: 0.0,
            sigma_band: 0.0,
            theta_band: 0,
            sigma_hx: 0.0,
            sigma_hy: 0.0,
            theta_h: 0.0,
        };
        let low = synthesize(&high, &p, 32);
        let est = estimate_noise(&low, &high, 0.0, &crate::blur::BlurKernel::identity()).unwrap();
        assert!(
            (est.gain_k_hat - 0.01).abs() < 0.001,
            "K = {}",
            est.gain_k_hat
        );
        let floor = 0.02f64 * 0.02;
        assert!(
            (est.noise_floor_hat - floor).abs() < 0.1 * floor,
            "floor = {} vs {floor}",
            est.noise_floor_hat
        );
    }

    #[test]
    fn banding_detected_with_orientation() {
        let high = textured_linear_clip(6, 128, 128, 9);
        let p = DegradationProfile {
            epsilon: -1.0,
            sigma_read: 0.0,
            gain_k: 0.0,
            lambda_q: 0.0,
            sigma_band: 0.02,
            theta_band: 0,
            sigma_hx: 0.0,
            sigma_hy: 0.0,
            theta_h: 0.0,
        };
        let low = synthesize(&high, &p, 33);
        let est = estimate_noise(&low, &high, -1.0, &crate::blur::BlurKernel::identity()).unwrap();
        assert_eq!(est.theta_band_hat, 0);
        assert!(
            (est.sigma_band_hat - 0.02).abs() < 0.15 * 0.02,
            "sigma_b = {}",
            est.sigma_band_hat
        );

        let mut p1 = p;
        p1.theta_band = 1;
        let low1 = synthesize(&high, &p1, 34);
        let est1 = estimate_noise(&low1, &high, -1.0, &crate::blur::BlurKernel::identity()).unwrap();
        assert_eq!(est1.theta_band_hat, 1);
    }

    #[test]
    fn gain_slope_monotone_in_true_k() {
        let high = textured_linear_clip(4, 96, 96, 10);
        let mut last = -1.0;
        for (i, k) in [0.002, 0.005, 0.01, 0.015, 0.02].iter().enumerate() {
            let mut p = DegradationProfile::NEUTRAL;
            p.gain_k = *k;
            let low = synthesize(&high, &p, 40 + i as u64);
            let est =
                estimate_noise(&low, &high, 0.0, &crate::blur::BlurKernel::identity()).unwrap();
            assert!(est.gain_k_hat > last, "K sweep not monotone at {k}");
            last = est.gain_k_hat;
        }
    }

    #[test]
    fn clean_pair_profile_is_neutral() {
        let high = textured_linear_clip(5, 96, 96, 12);
        let report = estimate_profile(&high, &high).unwrap();
        let p = report.profile_hat;
        assert!(p.epsilon.abs() < 0.02, "eps = {}", p.epsilon);
        assert!(p.gain_k < 1e-5);
        assert!(p.sigma_read < 1e-3);
        assert!(p.sigma_hx < 0.2);
        assert!(p.is_valid());
    }

    #[test]
    fn report_round_trips_through_json() {
        let high = textured_linear_clip(4, 64, 64, 13);
        let mut p = DegradationProfile::NEUTRAL;
        p.epsilon = -2.0;
        p.sigma_read = 0.01;
        p.sigma_hx = 1.0;
        p.sigma_hy = 1.0;
        let low = synthesize(&high, &p, 50);
        let report = estimate_profile(&low, &high).unwrap();
        let json = report.to_json().unwrap();
        let parsed = EstimationReport::from_json(&json).unwrap();
        assert_eq!(report, parsed);
    }

    #[test]
    fn full_recovery_on_one_severe_profile() {
        let high = textured_linear_clip(5, 128, 128, 14);
        let p = DegradationProfile {
            epsilon: -4.0,
            sigma_read: 0.02,
            gain_k: 0.012,
            lambda_q: 1.0 / 255.0,
            sigma_band: 0.008,
            theta_band: 1,
            sigma_hx: 2.5,
            sigma_hy: 1.2,
            theta_h: 1.1,
        };
        let low = synthesize(&high, &p, 51);
        let report = estimate_profile(&low, &high).unwrap();
        let hat = report.profile_hat;
        assert!((hat.epsilon - p.epsilon).abs() < 0.1, "eps {}", hat.epsilon);
        assert!(
            (hat.gain_k - p.gain_k).abs() < 0.1 * p.gain_k,
            "K {}",
            hat.gain_k
        );
        let (tx, _, tphi) = canonical_blur_triple(p.sigma_hx, p.sigma_hy, p.theta_h);
        let (ex, _, ephi) = canonical_blur_triple(hat.sigma_hx, hat.sigma_hy, hat.theta_h);
        assert!((ex - tx).abs() < 0.1 * tx, "major {ex} vs {tx}");
        assert!(
            axis_angle_distance(ephi, tphi) < 5.0f64.to_radians(),
            "theta {ephi} vs {tphi}"
        );
        assert_eq!(hat.theta_band, 1);
        assert!(hat.is_valid());
    }
}
