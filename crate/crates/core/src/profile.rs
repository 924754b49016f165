//! Degradation profiles: the nine-parameter vector controlling one
//! synthesis pass, uniform sampling within bounds, and persisted profile
//! sets with reproducible draws.

use crate::seed::{SeedSpec, StreamTag};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

/// The nine degradation parameters applied to one clip.
///
/// All sigma/lambda values are in linear-intensity units; blur spreads are
/// in pixels. `epsilon` is in photographic stops (negative darkens).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationProfile {
    /// Exposure adjustment in stops; the clip is scaled by `2^epsilon`.
    pub epsilon: f64,
    /// Read-noise standard deviation.
    pub sigma_read: f64,
    /// Overall system gain; shot-noise variance at intensity x is `gain_k * x`.
    pub gain_k: f64,
    /// Upper bound of the uniform quantization-noise interval.
    pub lambda_q: f64,
    /// Banding-noise standard deviation.
    pub sigma_band: f64,
    /// Banding orientation: 0 = per-column offsets, 1 = per-row offsets.
    pub theta_band: u8,
    /// Blur spread along the kernel x-axis.
    pub sigma_hx: f64,
    /// Blur spread along the kernel y-axis.
    pub sigma_hy: f64,
    /// Blur kernel orientation in radians, within [0, pi).
    pub theta_h: f64,
}

impl DegradationProfile {
    /// Identity profile: no exposure change, no blur, no noise.
    pub const NEUTRAL: Self = Self {
        epsilon: 0.0,
        sigma_read: 0.0,
        gain_k: 0.0,
        lambda_q: 0.0,
        sigma_band: 0.0,
        theta_band: 0,
        sigma_hx: 0.0,
        sigma_hy: 0.0,
        theta_h: 0.0,
    };

    /// Field names in serialization order.
    pub const FIELD_NAMES: [&'static str; 9] = [
        "epsilon",
        "sigma_read",
        "gain_k",
        "lambda_q",
        "sigma_band",
        "theta_band",
        "sigma_hx",
        "sigma_hy",
        "theta_h",
    ];

    pub fn validate(&self) -> Vec<Violation> {
        validate_profile(self)
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Validation as a `Result`, for call sites that bail on bad profiles.
    pub fn check(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidProfile(violations))
        }
    }

    /// One whitespace-separated record in field order, full precision.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{} {} {} {} {} {} {} {} {}",
            self.epsilon,
            self.sigma_read,
            self.gain_k,
            self.lambda_q,
            self.sigma_band,
            self.theta_band,
            self.sigma_hx,
            self.sigma_hy,
            self.theta_h
        );
        s
    }

    /// Parses a record produced by [`to_record`](Self::to_record); any text
    /// after the ninth field is returned as the source label.
    pub fn from_record(line: &str, line_no: usize) -> Result<(Self, Option<String>)> {
        let mut fields = line.split_whitespace();
        let mut next = |name: &str| -> Result<f64> {
            fields
                .next()
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("missing field {name}"),
                })?
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    line: line_no,
                    message: format!("bad value for {name}: {e}"),
                })
        };
        let epsilon = next("epsilon")?;
        let sigma_read = next("sigma_read")?;
        let gain_k = next("gain_k")?;
        let lambda_q = next("lambda_q")?;
        let sigma_band = next("sigma_band")?;
        let theta_band_raw = next("theta_band")?;
        let sigma_hx = next("sigma_hx")?;
        let sigma_hy = next("sigma_hy")?;
        let theta_h = next("theta_h")?;
        if theta_band_raw != 0.0 && theta_band_raw != 1.0 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("theta_band must be 0 or 1, got {theta_band_raw}"),
            });
        }
        let rest: Vec<&str> = fields.collect();
        let label = if rest.is_empty() {
            None
        } else {
            Some(rest.join(" "))
        };
        Ok((
            Self {
                epsilon,
                sigma_read,
                gain_k,
                lambda_q,
                sigma_band,
                theta_band: theta_band_raw as u8,
                sigma_hx,
                sigma_hy,
                theta_h,
            },
            label,
        ))
    }
}

/// One violated profile constraint, identified by field name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

fn violation(field: &'static str, message: impl Into<String>) -> Violation {
    Violation {
        field,
        message: message.into(),
    }
}

/// Checks every profile invariant; returns the empty list iff all hold.
///
/// Total function: any finite or non-finite input yields a verdict, never
/// an error.
pub fn validate_profile(p: &DegradationProfile) -> Vec<Violation> {
    let mut out = Vec::new();
    for (field, value) in [
        ("sigma_read", p.sigma_read),
        ("gain_k", p.gain_k),
        ("lambda_q", p.lambda_q),
        ("sigma_band", p.sigma_band),
        ("sigma_hx", p.sigma_hx),
        ("sigma_hy", p.sigma_hy),
    ] {
        if !value.is_finite() {
            out.push(violation(field, "must be finite"));
        } else if value < 0.0 {
            out.push(violation(field, format!("must be non-negative, got {value}")));
        }
    }
    if !p.epsilon.is_finite() {
        out.push(violation("epsilon", "must be finite"));
    }
    if p.theta_band > 1 {
        out.push(violation(
            "theta_band",
            format!("must be 0 or 1, got {}", p.theta_band),
        ));
    }
    if !p.theta_h.is_finite() {
        out.push(violation("theta_h", "must be finite"));
    } else if !(0.0..std::f64::consts::PI).contains(&p.theta_h) {
        out.push(violation(
            "theta_h",
            format!("must be in [0, pi), got {}", p.theta_h),
        ));
    } else if p.sigma_hx.is_finite() && p.sigma_hy.is_finite() {
        // Bidirectional kernels: the orientation range is tied to which
        // spread dominates. Isotropic kernels accept any angle.
        let half = std::f64::consts::FRAC_PI_2;
        if p.sigma_hx > p.sigma_hy && p.theta_h > half {
            out.push(violation(
                "theta_h",
                format!(
                    "must be in [0, pi/2] when sigma_hx > sigma_hy, got {}",
                    p.theta_h
                ),
            ));
        }
        if p.sigma_hx < p.sigma_hy && p.theta_h < half {
            out.push(violation(
                "theta_h",
                format!(
                    "must be in [pi/2, pi) when sigma_hx < sigma_hy, got {}",
                    p.theta_h
                ),
            ));
        }
    }
    out
}

/// Closed sampling interval for one profile field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldBounds {
    pub lo: f64,
    pub hi: f64,
}

impl FieldBounds {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn validate(&self, field: &str) -> Result<()> {
        if !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{field} bounds must be finite, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.lo > self.hi {
            return Err(Error::InvalidParameter(format!(
                "{field} bounds reversed: lo {} > hi {}",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..self.hi)
        }
    }
}

/// Sampling intervals for the eight continuous profile fields.
/// `theta_band` is always drawn from {0, 1} equiprobably.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileBounds {
    pub epsilon: FieldBounds,
    pub sigma_read: FieldBounds,
    pub gain_k: FieldBounds,
    pub lambda_q: FieldBounds,
    pub sigma_band: FieldBounds,
    pub sigma_hx: FieldBounds,
    pub sigma_hy: FieldBounds,
    pub theta_h: FieldBounds,
}

impl Default for ProfileBounds {
    /// Default sampling ranges spanning visible to severe degradation at
    /// 8-bit scale. These are tunable conventions, not measurements.
    fn default() -> Self {
        Self {
            epsilon: FieldBounds::new(-6.0, -1.0),
            sigma_read: FieldBounds::new(0.0, 0.05),
            gain_k: FieldBounds::new(0.0, 0.02),
            lambda_q: FieldBounds::new(0.0, 1.0 / 255.0),
            sigma_band: FieldBounds::new(0.0, 0.02),
            sigma_hx: FieldBounds::new(0.1, 4.0),
            sigma_hy: FieldBounds::new(0.1, 4.0),
            theta_h: FieldBounds::new(0.0, std::f64::consts::PI),
        }
    }
}

impl ProfileBounds {
    pub fn validate(&self) -> Result<()> {
        for (field, b) in self.fields() {
            b.validate(field)?;
        }
        Ok(())
    }

    fn fields(&self) -> [(&'static str, FieldBounds); 8] {
        [
            ("epsilon", self.epsilon),
            ("sigma_read", self.sigma_read),
            ("gain_k", self.gain_k),
            ("lambda_q", self.lambda_q),
            ("sigma_band", self.sigma_band),
            ("sigma_hx", self.sigma_hx),
            ("sigma_hy", self.sigma_hy),
            ("theta_h", self.theta_h),
        ]
    }

    fn field_mut(&mut self, name: &str) -> Option<&mut FieldBounds> {
        match name {
            "epsilon" => Some(&mut self.epsilon),
            "sigma_read" => Some(&mut self.sigma_read),
            "gain_k" => Some(&mut self.gain_k),
            "lambda_q" => Some(&mut self.lambda_q),
            "sigma_band" => Some(&mut self.sigma_band),
            "sigma_hx" => Some(&mut self.sigma_hx),
            "sigma_hy" => Some(&mut self.sigma_hy),
            "theta_h" => Some(&mut self.theta_h),
            _ => None,
        }
    }

    /// Writes the bounds file: a header line, then `field lo hi` per line.
    pub fn to_writer(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "field lo hi")?;
        for (field, b) in self.fields() {
            writeln!(w, "{field} {} {}", b.lo, b.hi)?;
        }
        Ok(())
    }

    pub fn from_reader(r: impl Read) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut bounds = Self::default();
        let mut seen = [false; 8];
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if i == 0 && trimmed.starts_with("field") {
                continue;
            }
            let parts: Vec<&str> = trimmed.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected `field lo hi`, got {} fields", parts.len()),
                });
            }
            let lo: f64 = parts[1].parse().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad lo: {e}"),
            })?;
            let hi: f64 = parts[2].parse().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad hi: {e}"),
            })?;
            let idx = DegradationProfile::FIELD_NAMES
                .iter()
                .filter(|n| **n != "theta_band")
                .position(|n| *n == parts[0]);
            match (idx, bounds.field_mut(parts[0])) {
                (Some(idx), Some(slot)) => {
                    *slot = FieldBounds::new(lo, hi);
                    seen[idx] = true;
                }
                _ => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("unknown field {}", parts[0]),
                    })
                }
            }
        }
        if !seen.iter().all(|s| *s) {
            let missing: Vec<&str> = DegradationProfile::FIELD_NAMES
                .iter()
                .filter(|n| **n != "theta_band")
                .enumerate()
                .filter(|(i, _)| !seen[*i])
                .map(|(_, n)| *n)
                .collect();
            return Err(Error::Parse {
                line: 0,
                message: format!("bounds file missing fields: {}", missing.join(", ")),
            });
        }
        bounds.validate()?;
        Ok(bounds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.to_writer(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(fs::File::open(path)?)
    }
}

/// Draws one profile uniformly within `bounds`.
///
/// Each continuous field is sampled independently; `theta_band` is a fair
/// coin. The orientation constraint is then established by swapping
/// (sigma_hx, sigma_hy) when the drawn angle disagrees with the sigma
/// ordering, which preserves the marginal distribution of kernel shapes
/// without rejection loops. Same (bounds, seed, index) always yields the
/// same profile.
pub fn sample_uniform_profile(
    bounds: &ProfileBounds,
    seed: &SeedSpec,
    index: u64,
) -> Result<DegradationProfile> {
    bounds.validate()?;
    let mut rng = seed.stream(StreamTag::ProfileSample, index);
    let epsilon = bounds.epsilon.sample(&mut rng);
    let sigma_read = bounds.sigma_read.sample(&mut rng);
    let gain_k = bounds.gain_k.sample(&mut rng);
    let lambda_q = bounds.lambda_q.sample(&mut rng);
    let sigma_band = bounds.sigma_band.sample(&mut rng);
    let theta_band = u8::from(rng.random::<bool>());
    let mut sigma_hx = bounds.sigma_hx.sample(&mut rng);
    let mut sigma_hy = bounds.sigma_hy.sample(&mut rng);
    let theta_h = bounds.theta_h.sample(&mut rng);

    let half = std::f64::consts::FRAC_PI_2;
    if (sigma_hx > sigma_hy && theta_h > half) || (sigma_hx < sigma_hy && theta_h < half) {
        std::mem::swap(&mut sigma_hx, &mut sigma_hy);
    }

    let profile = DegradationProfile {
        epsilon,
        sigma_read,
        gain_k,
        lambda_q,
        sigma_band,
        theta_band,
        sigma_hx,
        sigma_hy,
        theta_h,
    };
    debug_assert!(profile.is_valid(), "sampler produced {profile:?}");
    Ok(profile)
}

/// One stored profile with free-text provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub profile: DegradationProfile,
    pub label: Option<String>,
}

/// An ordered, persisted collection of degradation profiles.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileSet {
    entries: Vec<ProfileEntry>,
}

impl ProfileSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, profile: DegradationProfile, label: Option<String>) {
        self.entries.push(ProfileEntry { profile, label });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ProfileEntry] {
        &self.entries
    }

    /// Uniformly selects one stored profile; reproducible under a fixed
    /// seed, with `index` advancing the draw sequence.
    pub fn draw(&self, seed: &SeedSpec, index: u64) -> Result<&ProfileEntry> {
        if self.entries.is_empty() {
            return Err(Error::EmptyProfileSet);
        }
        let mut rng = seed.stream(StreamTag::ProfileDraw, index);
        let pick = rng.random_range(0..self.entries.len());
        Ok(&self.entries[pick])
    }

    /// Writes the set as line-delimited records with a header naming the
    /// fields. An optional trailing label column carries provenance.
    pub fn to_writer(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{}", DegradationProfile::FIELD_NAMES.join(" "))?;
        for entry in &self.entries {
            match &entry.label {
                Some(label) => writeln!(w, "{} {}", entry.profile.to_record(), label)?,
                None => writeln!(w, "{}", entry.profile.to_record())?,
            }
        }
        Ok(())
    }

    pub fn from_reader(r: impl Read) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut set = ProfileSet::new();
        let mut first = true;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if first {
                first = false;
                if trimmed.starts_with("epsilon") {
                    continue;
                }
            }
            let (profile, label) = DegradationProfile::from_record(trimmed, i + 1)?;
            set.push(profile, label);
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.to_writer(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(fs::File::open(path)?)
    }
}
