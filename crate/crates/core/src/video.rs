//! Dense T x C x H x W frame stacks with a declared colorspace.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Interpretation of the stored sample values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Colorspace {
    /// Gamma-encoded sRGB, nominal range [0, 1].
    EncodedSrgb,
    /// Linear intensity, nominal range [0, 1]. Exposure, blur, and noise
    /// operate only on this space.
    LinearRgb,
}

/// A video clip stored as a dense `[t][c][y][x]` array of f64 samples.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    frames: usize,
    channels: usize,
    height: usize,
    width: usize,
    colorspace: Colorspace,
    data: Vec<f64>,
}

impl VideoTensor {
    /// Wraps a data buffer, checking dimensions and finiteness.
    pub fn new(
        frames: usize,
        channels: usize,
        height: usize,
        width: usize,
        colorspace: Colorspace,
        data: Vec<f64>,
    ) -> Result<Self> {
        if frames == 0 || channels == 0 || height == 0 || width == 0 {
            return Err(Error::DimensionMismatch(format!(
                "dimensions must be positive, got {frames}x{channels}x{height}x{width}"
            )));
        }
        let expected = frames * channels * height * width;
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "data length {} does not match {frames}x{channels}x{height}x{width} = {expected}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite sample at flat index {bad}"
            )));
        }
        Ok(Self {
            frames,
            channels,
            height,
            width,
            colorspace,
            data,
        })
    }

    /// Constant-valued clip.
    pub fn filled(
        frames: usize,
        channels: usize,
        height: usize,
        width: usize,
        colorspace: Colorspace,
        value: f64,
    ) -> Result<Self> {
        Self::new(
            frames,
            channels,
            height,
            width,
            colorspace,
            vec![value; frames * channels * height * width],
        )
    }

    /// Builds a clip by evaluating `f(t, c, y, x)` at every sample.
    pub fn from_fn(
        frames: usize,
        channels: usize,
        height: usize,
        width: usize,
        colorspace: Colorspace,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(frames * channels * height * width);
        for t in 0..frames {
            for c in 0..channels {
                for y in 0..height {
                    for x in 0..width {
                        data.push(f(t, c, y, x));
                    }
                }
            }
        }
        Self::new(frames, channels, height, width, colorspace, data)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.frames, self.channels, self.height, self.width)
    }

    pub fn colorspace(&self) -> Colorspace {
        self.colorspace
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn set_colorspace(&mut self, colorspace: Colorspace) {
        self.colorspace = colorspace;
    }

    #[inline]
    pub fn index(&self, t: usize, c: usize, y: usize, x: usize) -> usize {
        ((t * self.channels + c) * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(t, c, y, x)]
    }

    /// Number of samples in one H x W plane.
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    /// One (frame, channel) plane as a contiguous slice.
    pub fn plane(&self, t: usize, c: usize) -> &[f64] {
        let start = (t * self.channels + c) * self.plane_len();
        &self.data[start..start + self.plane_len()]
    }

    /// All channels of one frame as a contiguous slice.
    pub fn frame(&self, t: usize) -> &[f64] {
        let len = self.channels * self.plane_len();
        &self.data[t * len..(t + 1) * len]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Returns a copy with every sample clamped to `[lo, hi]`.
    pub fn clamped(&self, lo: f64, hi: f64) -> Self {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v = v.clamp(lo, hi);
        }
        out
    }

    /// Element-wise map. The caller must keep values finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v = f(*v);
        }
        out
    }

    /// Requires the tensor to be in `expected` space.
    pub fn require_colorspace(&self, expected: Colorspace) -> Result<()> {
        if self.colorspace != expected {
            return Err(Error::ColorspaceMismatch {
                expected,
                actual: self.colorspace,
            });
        }
        Ok(())
    }
}
