//! End-to-end degradation: linearize, darken, blur, add noise, re-encode.
//!
//! One profile governs a whole clip: the same kernel and noise parameters
//! apply to every frame. Values are clipped to [0, 1] exactly once, after
//! the noise stage and before encoding; linear output is left unclipped so
//! residual statistics stay testable.

use crate::blur::{build_mvg_kernel, convolve};
use crate::colorspace::{encode, linearize};
use crate::noise::total_noise;
use crate::parallel::map_indexed;
use crate::profile::{DegradationProfile, ProfileSet};
use crate::seed::{SeedSpec, StreamTag};
use crate::video::{Colorspace, VideoTensor};
use crate::{Error, Result};

/// One synthesis job.
#[derive(Debug, Clone)]
pub struct SynthesisRequest {
    pub input: VideoTensor,
    pub profile: DegradationProfile,
    pub seed: SeedSpec,
    /// Space of the returned clip. `EncodedSrgb` clips to [0, 1] and
    /// re-encodes; `LinearRgb` returns the unclipped noisy signal.
    pub output_space: Colorspace,
    /// Keep the post-exposure, post-blur, and pre-encode stages.
    pub emit_intermediates: bool,
}

impl SynthesisRequest {
    pub fn new(input: VideoTensor, profile: DegradationProfile, seed: SeedSpec) -> Self {
        Self {
            input,
            profile,
            seed,
            output_space: Colorspace::EncodedSrgb,
            emit_intermediates: false,
        }
    }
}

/// Intermediate stages of one synthesis pass, all linear.
#[derive(Debug, Clone)]
pub struct SynthesisStages {
    pub exposed: VideoTensor,
    pub blurred: VideoTensor,
    pub noisy: VideoTensor,
}

#[derive(Debug, Clone)]
pub struct SynthesisOutput {
    pub video: VideoTensor,
    pub stages: Option<SynthesisStages>,
}

/// Scales every sample by `2^epsilon`. No clipping at this stage.
pub fn adjust_exposure(v: &VideoTensor, epsilon: f64) -> Result<VideoTensor> {
    v.require_colorspace(Colorspace::LinearRgb)?;
    if !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be finite, got {epsilon}"
        )));
    }
    let scale = epsilon.exp2();
    Ok(v.map(|x| x * scale))
}

/// Runs the full degradation for one clip.
///
/// Stage order: linearize (if needed), exposure, blur, noise, then clip and
/// encode when encoded output is requested. Exposure sits inside the
/// convolution and the noise outside it.
pub fn degrade(req: &SynthesisRequest) -> Result<SynthesisOutput> {
    req.profile.check()?;
    let linear = match req.input.colorspace() {
        Colorspace::EncodedSrgb => linearize(&req.input)?,
        Colorspace::LinearRgb => req.input.clone(),
    };
    let exposed = adjust_exposure(&linear, req.profile.epsilon)?;
    let kernel = build_mvg_kernel(
        req.profile.sigma_hx,
        req.profile.sigma_hy,
        req.profile.theta_h,
    )?;
    let blurred = convolve(&exposed, &kernel)?;
    let noisy = total_noise(&blurred, &req.profile, &req.seed)?;

    let video = match req.output_space {
        Colorspace::EncodedSrgb => encode(&noisy.clamped(0.0, 1.0))?,
        Colorspace::LinearRgb => noisy.clone(),
    };
    let stages = req.emit_intermediates.then(|| SynthesisStages {
        exposed,
        blurred,
        noisy,
    });
    Ok(SynthesisOutput { video, stages })
}

/// Degrades each clip with a profile drawn from the set.
///
/// Clip `i` uses draw index `i` and a derived per-clip seed, so the profile
/// assignment sequence and every output are reproducible for a fixed master
/// seed, independent of scheduling.
pub fn batch_degrade(
    inputs: &[VideoTensor],
    set: &ProfileSet,
    seed: &SeedSpec,
) -> Result<Vec<(VideoTensor, DegradationProfile)>> {
    if set.is_empty() {
        return Err(Error::EmptyProfileSet);
    }
    let results = map_indexed(inputs.len(), |i| -> Result<(VideoTensor, DegradationProfile)> {
        let profile = set.draw(seed, i as u64)?.profile;
        let req = SynthesisRequest::new(inputs[i].clone(), profile, seed.derive(StreamTag::Clip, i as u64));
        Ok((degrade(&req)?.video, profile))
    });
    results.into_iter().collect()
}
