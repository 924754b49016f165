//! Blur kernels and convolution.
//!
//! The joint motion+defocus blur is a single anisotropic Gaussian PSF built
//! from (sigma_hx, sigma_hy, theta_h). A traditional composite kernel
//! (anti-aliased motion line convolved with an isotropic Gaussian) is kept
//! for equivalence comparisons. Kernels are normalized to unit sum and
//! applied per frame with replicate boundary padding.

use crate::parallel::for_each_chunk_pair;
use crate::video::{Colorspace, VideoTensor};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Below this spread the discrete kernel degenerates to a delta; it is also
/// the clamp that keeps the covariance inverse well conditioned.
pub const SIGMA_MIN: f64 = 1e-3;

/// Parameters that generated a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelParams {
    MultivariateGaussian {
        sigma_hx: f64,
        sigma_hy: f64,
        theta_h: f64,
    },
    Composite {
        motion_len: f64,
        motion_angle: f64,
        defocus_sigma: f64,
    },
    /// Recovered by deconvolution rather than built from parameters.
    Empirical,
}

/// A normalized 2-D point-spread function on a (2k+1) x (2k+1) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlurKernel {
    radius: usize,
    weights: Vec<f64>,
    params: KernelParams,
}

impl BlurKernel {
    /// Wraps raw weights; clamps negatives to zero and normalizes to unit sum.
    pub fn from_weights(radius: usize, mut weights: Vec<f64>, params: KernelParams) -> Result<Self> {
        let side = 2 * radius + 1;
        if weights.len() != side * side {
            return Err(Error::DimensionMismatch(format!(
                "kernel weights length {} does not match side {side}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter("non-finite kernel weight".into()));
        }
        for w in weights.iter_mut() {
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidParameter("kernel has zero mass".into()));
        }
        for w in weights.iter_mut() {
            *w /= sum;
        }
        Ok(Self {
            radius,
            weights,
            params,
        })
    }

    /// The 1x1 identity kernel.
    pub fn identity() -> Self {
        Self {
            radius: 0,
            weights: vec![1.0],
            params: KernelParams::MultivariateGaussian {
                sigma_hx: 0.0,
                sigma_hy: 0.0,
                theta_h: 0.0,
            },
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Side length 2k+1.
    pub fn size(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Weight at offsets (dy, dx) from the center, each in [-k, k].
    #[inline]
    pub fn get(&self, dy: isize, dx: isize) -> f64 {
        let k = self.radius as isize;
        self.weights[((dy + k) * (2 * k + 1) + (dx + k)) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Centroid (x, y) in offset coordinates; ~ (0, 0) for centered kernels.
    pub fn centroid(&self) -> (f64, f64) {
        let k = self.radius as isize;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for dy in -k..=k {
            for dx in -k..=k {
                let w = self.get(dy, dx);
                cx += w * dx as f64;
                cy += w * dy as f64;
            }
        }
        (cx, cy)
    }

    /// Central second-moment matrix [[mxx, mxy], [mxy, myy]].
    pub fn second_moments(&self) -> [[f64; 2]; 2] {
        let (cx, cy) = self.centroid();
        let k = self.radius as isize;
        let mut mxx = 0.0;
        let mut mxy = 0.0;
        let mut myy = 0.0;
        for dy in -k..=k {
            for dx in -k..=k {
                let w = self.get(dy, dx);
                let x = dx as f64 - cx;
                let y = dy as f64 - cy;
                mxx += w * x * x;
                mxy += w * x * y;
                myy += w * y * y;
            }
        }
        [[mxx, mxy], [mxy, myy]]
    }
}

/// Covariance of the multivariate Gaussian PSF, kept in rotated-diagonal
/// form so the quadratic form never inverts a near-singular matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceSpec {
    pub sigma_hx: f64,
    pub sigma_hy: f64,
    pub theta_h: f64,
}

impl CovarianceSpec {
    pub fn new(sigma_hx: f64, sigma_hy: f64, theta_h: f64) -> Self {
        Self {
            sigma_hx,
            sigma_hy,
            theta_h,
        }
    }

    /// Rotation matrix R.
    pub fn rotation(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.theta_h.sin_cos();
        [[c, -s], [s, c]]
    }

    /// Sigma = R diag(sx^2, sy^2) R^T.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.theta_h.sin_cos();
        let (vx, vy) = (self.sigma_hx * self.sigma_hx, self.sigma_hy * self.sigma_hy);
        [
            [c * c * vx + s * s * vy, s * c * (vx - vy)],
            [s * c * (vx - vy), s * s * vx + c * c * vy],
        ]
    }

    /// Quadratic form r^T Sigma^-1 r for r = (dx, dy), evaluated through the
    /// rotated frame.
    #[inline]
    pub fn quad_form(&self, dx: f64, dy: f64) -> f64 {
        let (s, c) = self.theta_h.sin_cos();
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        let sx = self.sigma_hx.max(SIGMA_MIN);
        let sy = self.sigma_hy.max(SIGMA_MIN);
        (u / sx) * (u / sx) + (v / sy) * (v / sy)
    }
}

fn check_sigma(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "{name} must be finite and non-negative, got {v}"
        )));
    }
    Ok(())
}

/// Builds the multivariate Gaussian joint blur kernel.
///
/// Weights are point evaluations of exp(-q/2) on the integer offset grid,
/// normalized to unit sum. The support radius is ceil(3 * max(spread)),
/// at least 1, which captures > 99.7% of the Gaussian mass. Spreads below
/// [`SIGMA_MIN`] collapse to the discrete delta.
pub fn build_mvg_kernel(sigma_hx: f64, sigma_hy: f64, theta_h: f64) -> Result<BlurKernel> {
    check_sigma("sigma_hx", sigma_hx)?;
    check_sigma("sigma_hy", sigma_hy)?;
    if !theta_h.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "theta_h must be finite, got {theta_h}"
        )));
    }
    let cov = CovarianceSpec::new(sigma_hx, sigma_hy, theta_h);
    let radius = kernel_radius(sigma_hx.max(sigma_hy));
    let k = radius as isize;
    let side = 2 * radius + 1;
    let mut weights = Vec::with_capacity(side * side);
    for dy in -k..=k {
        for dx in -k..=k {
            weights.push((-0.5 * cov.quad_form(dx as f64, dy as f64)).exp());
        }
    }
    BlurKernel::from_weights(
        radius,
        weights,
        KernelParams::MultivariateGaussian {
            sigma_hx,
            sigma_hy,
            theta_h,
        },
    )
}

/// Support radius for a Gaussian of the given maximum spread.
pub fn kernel_radius(sigma_max: f64) -> usize {
    ((3.0 * sigma_max).ceil() as usize).max(1)
}

/// Builds the traditional composite kernel: an anti-aliased line PSF of the
/// given length and angle (linear motion), convolved with an isotropic
/// Gaussian (defocus), renormalized to unit sum.
pub fn build_reference_kernel(
    motion_len: f64,
    motion_angle: f64,
    defocus_sigma: f64,
) -> Result<BlurKernel> {
    check_sigma("motion_len", motion_len)?;
    check_sigma("defocus_sigma", defocus_sigma)?;
    if !motion_angle.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "motion_angle must be finite, got {motion_angle}"
        )));
    }

    let radius = ((motion_len / 2.0 + 3.0 * defocus_sigma).ceil() as usize).max(1);
    let k = radius as isize;
    let side = 2 * radius + 1;

    // Anti-aliased line: splat densely sampled points of the centered
    // segment with bilinear weights.
    let mut line = vec![0.0f64; side * side];
    if motion_len < 1e-9 {
        line[(radius * side) + radius] = 1.0;
    } else {
        let samples = (64.0f64).max(64.0 * motion_len.ceil()) as usize;
        let (sin_a, cos_a) = motion_angle.sin_cos();
        let w = 1.0 / samples as f64;
        for i in 0..samples {
            // Midpoint positions along the segment, t in (-1/2, 1/2).
            let t = (i as f64 + 0.5) / samples as f64 - 0.5;
            let x = t * motion_len * cos_a;
            let y = t * motion_len * sin_a;
            let x0 = x.floor();
            let y0 = y.floor();
            let fx = x - x0;
            let fy = y - y0;
            let ix = x0 as isize;
            let iy = y0 as isize;
            for (oy, wy) in [(0isize, 1.0 - fy), (1, fy)] {
                for (ox, wx) in [(0isize, 1.0 - fx), (1, fx)] {
                    let gx = ix + ox + k;
                    let gy = iy + oy + k;
                    if gx >= 0 && gy >= 0 && (gx as usize) < side && (gy as usize) < side {
                        line[gy as usize * side + gx as usize] += w * wx * wy;
                    }
                }
            }
        }
    }

    let weights = if defocus_sigma < SIGMA_MIN {
        line
    } else {
        // Dense small-grid convolution with the defocus Gaussian.
        let g = build_mvg_kernel(defocus_sigma, defocus_sigma, 0.0)?;
        let gk = g.radius() as isize;
        let mut out = vec![0.0f64; side * side];
        for oy in -k..=k {
            for ox in -k..=k {
                let mut acc = 0.0;
                for gy in -gk..=gk {
                    for gx in -gk..=gk {
                        let sy = oy - gy;
                        let sx = ox - gx;
                        if sy >= -k && sy <= k && sx >= -k && sx <= k {
                            acc += g.get(gy, gx) * line[((sy + k) * side as isize + sx + k) as usize];
                        }
                    }
                }
                out[((oy + k) * side as isize + ox + k) as usize] = acc;
            }
        }
        out
    };

    BlurKernel::from_weights(
        radius,
        weights,
        KernelParams::Composite {
            motion_len,
            motion_angle,
            defocus_sigma,
        },
    )
}

/// Composite parameters whose analytic second moments match an MVG kernel:
/// a line of length L has variance L^2/12 along its axis, and defocus adds
/// sigma^2 isotropically. Expects sigma_hx >= sigma_hy.
pub fn matched_composite_params(sigma_hx: f64, sigma_hy: f64, theta_h: f64) -> (f64, f64, f64) {
    let along = (sigma_hx * sigma_hx - sigma_hy * sigma_hy).max(0.0);
    let motion_len = (12.0 * along).sqrt();
    (motion_len, theta_h, sigma_hy)
}

/// Per-frame, per-channel 2-D convolution with replicate boundary padding.
///
/// True convolution (kernel flipped); every kernel built in this module is
/// centro-symmetric, so this coincides with correlation. Output dimensions
/// equal input dimensions and the same kernel is applied to every frame.
pub fn convolve(v: &VideoTensor, kernel: &BlurKernel) -> Result<VideoTensor> {
    v.require_colorspace(Colorspace::LinearRgb)?;
    let (_, _, h, w) = v.shape();
    if kernel.size() > h || kernel.size() > w {
        return Err(Error::KernelLargerThanFrame {
            kernel: kernel.size(),
            height: h,
            width: w,
        });
    }
    let mut out = v.clone();
    let plane = v.plane_len();
    let k = kernel.radius() as isize;
    let input = v.data();
    for_each_chunk_pair(out.data_mut(), input, plane, |_, dst, src| {
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = 0.0;
                for dy in -k..=k {
                    // Replicate padding: clamp source coordinates.
                    let sy = (y - dy).clamp(0, h as isize - 1) as usize;
                    for dx in -k..=k {
                        let sx = (x - dx).clamp(0, w as isize - 1) as usize;
                        acc += kernel.get(dy, dx) * src[sy * w + sx];
                    }
                }
                dst[y as usize * w + x as usize] = acc;
            }
        }
    });
    Ok(out)
}

/// Recovers (sigma_hx, sigma_hy, theta_h) from a kernel's second moments.
///
/// The eigendecomposition of the central second-moment matrix gives the
/// principal spreads and orientation; a fixed-point refinement against
/// [`build_mvg_kernel`] then removes the bias that point sampling and
/// truncation of the continuous Gaussian leave in the raw moments (at
/// sigma = 0.5 the raw discrete moment underestimates sigma by ~7%).
///
/// Returns the major-axis convention: sigma_hx >= sigma_hy with theta_h the
/// major-axis orientation in [0, pi); near-delta kernels return (0, 0, 0)
/// and isotropic kernels report theta = 0.
pub fn fit_kernel_moments(kernel: &BlurKernel) -> (f64, f64, f64) {
    let target = moment_eigen(&kernel.second_moments());
    fit_from_eigen(target)
}

#[derive(Debug, Clone, Copy)]
struct MomentEigen {
    /// Major/minor eigenvalues of the second-moment matrix.
    var_major: f64,
    var_minor: f64,
    /// Major-axis angle in [0, pi).
    angle: f64,
}

fn moment_eigen(m: &[[f64; 2]; 2]) -> MomentEigen {
    let (mxx, mxy, myy) = (m[0][0], m[0][1], m[1][1]);
    let mean = 0.5 * (mxx + myy);
    let diff = 0.5 * (mxx - myy);
    let root = (diff * diff + mxy * mxy).sqrt();
    let var_major = (mean + root).max(0.0);
    let var_minor = (mean - root).max(0.0);
    let mut angle = 0.5 * (2.0 * mxy).atan2(mxx - myy);
    if angle < 0.0 {
        angle += std::f64::consts::PI;
    }
    if angle >= std::f64::consts::PI {
        angle -= std::f64::consts::PI;
    }
    MomentEigen {
        var_major,
        var_minor,
        angle,
    }
}

const DELTA_VARIANCE: f64 = 1e-12;
const ISOTROPY_REL_TOL: f64 = 1e-9;

fn fit_from_eigen(target: MomentEigen) -> (f64, f64, f64) {
    if target.var_major < DELTA_VARIANCE {
        return (0.0, 0.0, 0.0);
    }
    let isotropic =
        (target.var_major - target.var_minor) <= ISOTROPY_REL_TOL * target.var_major;

    let mut sx = target.var_major.sqrt();
    let mut sy = target.var_minor.sqrt().max(0.0);
    let mut theta = if isotropic { 0.0 } else { target.angle };

    for _ in 0..30 {
        let model = match build_mvg_kernel(sx, sy, theta) {
            Ok(k) => moment_eigen(&k.second_moments()),
            Err(_) => break,
        };
        let rx = if model.var_major > 0.0 {
            (target.var_major / model.var_major).sqrt()
        } else {
            1.0
        };
        let ry = if model.var_minor > DELTA_VARIANCE {
            (target.var_minor / model.var_minor).sqrt()
        } else {
            1.0
        };
        let mut dtheta = 0.0;
        if !isotropic {
            dtheta = target.angle - model.angle;
            // Angles are pi-periodic lines.
            if dtheta > std::f64::consts::FRAC_PI_2 {
                dtheta -= std::f64::consts::PI;
            } else if dtheta < -std::f64::consts::FRAC_PI_2 {
                dtheta += std::f64::consts::PI;
            }
        }
        sx = (sx * rx).clamp(0.0, 16.0);
        sy = (sy * ry).clamp(0.0, 16.0);
        theta += dtheta;
        theta = theta.rem_euclid(std::f64::consts::PI);
        if (rx - 1.0).abs() < 1e-10 && (ry - 1.0).abs() < 1e-10 && dtheta.abs() < 1e-10 {
            break;
        }
    }

    if isotropic {
        let s = 0.5 * (sx + sy);
        return (s, s, 0.0);
    }
    if sy < SIGMA_MIN {
        sy = 0.0;
    }
    (sx, sy, theta)
}
