//! sRGB transfer characteristic.
//!
//! All physical degradations operate on linear intensity, where pixel value
//! is proportional to scene exposure. Encoded inputs are linearized with the
//! standard piecewise sRGB curve and re-encoded on output. The exposure
//! scale commutes with any linear channel-mixing matrix, so no XYZ hop is
//! needed; the transfer curve alone establishes linearity.

use crate::parallel::for_each_chunk;
use crate::video::{Colorspace, VideoTensor};
use crate::Result;

/// Direction of the piecewise sRGB transfer characteristic.
///
/// `Linearize` and `Encode` are mutual inverses on [0, 1]; both map 0 to 0
/// and 1 to 1 exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferCurve {
    Linearize,
    Encode,
}

impl TransferCurve {
    /// Applies the curve to one sample, clamping the input to [0, 1].
    pub fn apply(self, v: f64) -> f64 {
        match self {
            TransferCurve::Linearize => srgb_to_linear(v),
            TransferCurve::Encode => linear_to_srgb(v),
        }
    }
}

// IEC 61966-2-1 constants.
const SRGB_ENCODED_BREAK: f64 = 0.04045;
const SRGB_LINEAR_BREAK: f64 = 0.0031308;
const SRGB_SLOPE: f64 = 12.92;
const SRGB_OFFSET: f64 = 0.055;
const SRGB_GAMMA: f64 = 2.4;

/// Inverse transfer characteristic: encoded sRGB sample to linear intensity.
pub fn srgb_to_linear(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v <= SRGB_ENCODED_BREAK {
        v / SRGB_SLOPE
    } else {
        ((v + SRGB_OFFSET) / (1.0 + SRGB_OFFSET)).powf(SRGB_GAMMA)
    }
}

/// Forward transfer characteristic: linear intensity to encoded sRGB.
pub fn linear_to_srgb(v: f64) -> f64 {
    if v >= 1.0 {
        // 1.055 * 1.0 - 0.055 rounds below 1.0 in f64; pin the endpoint.
        1.0
    } else if v <= SRGB_LINEAR_BREAK {
        v.max(0.0) * SRGB_SLOPE
    } else {
        (1.0 + SRGB_OFFSET) * v.powf(1.0 / SRGB_GAMMA) - SRGB_OFFSET
    }
}

/// Converts an encoded-sRGB clip to linear intensity.
///
/// Samples are clamped to [0, 1] on ingestion.
pub fn linearize(v: &VideoTensor) -> Result<VideoTensor> {
    v.require_colorspace(Colorspace::EncodedSrgb)?;
    let mut out = v.clone();
    let plane = out.plane_len();
    for_each_chunk(out.data_mut(), plane, |_, chunk| {
        for s in chunk.iter_mut() {
            *s = srgb_to_linear(*s);
        }
    });
    out.set_colorspace(Colorspace::LinearRgb);
    Ok(out)
}

/// Converts a linear clip to encoded sRGB, clipping to [0, 1] first.
pub fn encode(v: &VideoTensor) -> Result<VideoTensor> {
    v.require_colorspace(Colorspace::LinearRgb)?;
    let mut out = v.clone();
    let plane = out.plane_len();
    for_each_chunk(out.data_mut(), plane, |_, chunk| {
        for s in chunk.iter_mut() {
            *s = linear_to_srgb(*s);
        }
    });
    out.set_colorspace(Colorspace::EncodedSrgb);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Error, VideoTensor};

    #[test]
    fn endpoints_exact() {
        assert_eq!(srgb_to_linear(0.0), 0.0);
        assert_eq!(srgb_to_linear(1.0), 1.0);
        assert_eq!(linear_to_srgb(0.0), 0.0);
        assert_eq!(linear_to_srgb(1.0), 1.0);
    }

    #[test]
    fn encoded_half_maps_to_known_linear() {
        // Direct evaluation of ((0.5 + 0.055) / 1.055)^2.4.
        let expected = (0.555f64 / 1.055).powf(2.4);
        assert!((srgb_to_linear(0.5) - expected).abs() < 1e-15);
        assert!((expected - 0.2140).abs() < 5e-5);
        assert!((linear_to_srgb(expected) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn round_trip_dense_grid() {
        for i in 0..=10_000 {
            let x = i as f64 / 10_000.0;
            let rt = linear_to_srgb(srgb_to_linear(x));
            assert!((rt - x).abs() < 1e-6, "x = {x}, rt = {rt}");
        }
    }

    #[test]
    fn strictly_increasing() {
        let mut prev_lin = -1.0;
        let mut prev_enc = -1.0;
        for i in 0..=4096 {
            let x = i as f64 / 4096.0;
            let lin = srgb_to_linear(x);
            let enc = linear_to_srgb(x);
            assert!(lin > prev_lin);
            assert!(enc > prev_enc);
            prev_lin = lin;
            prev_enc = enc;
        }
    }

    #[test]
    fn out_of_range_clamps() {
        assert_eq!(linear_to_srgb(1.3), 1.0);
        assert_eq!(linear_to_srgb(-0.2), 0.0);
        assert_eq!(srgb_to_linear(2.0), 1.0);
    }

    #[test]
    fn wrong_colorspace_rejected() {
        let linear = VideoTensor::filled(1, 1, 2, 2, Colorspace::LinearRgb, 0.5).unwrap();
        assert!(matches!(
            linearize(&linear),
            Err(Error::ColorspaceMismatch { .. })
        ));
        let encoded = VideoTensor::filled(1, 1, 2, 2, Colorspace::EncodedSrgb, 0.5).unwrap();
        assert!(matches!(
            encode(&encoded),
            Err(Error::ColorspaceMismatch { .. })
        ));
    }

    #[test]
    fn video_round_trip_tags_colorspace() {
        let v = VideoTensor::from_fn(2, 3, 4, 4, Colorspace::EncodedSrgb, |t, c, y, x| {
            ((t + c + y + x) as f64 / 12.0).min(1.0)
        })
        .unwrap();
        let lin = linearize(&v).unwrap();
        assert_eq!(lin.colorspace(), Colorspace::LinearRgb);
        let back = encode(&lin).unwrap();
        assert_eq!(back.colorspace(), Colorspace::EncodedSrgb);
        for (a, b) in v.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
