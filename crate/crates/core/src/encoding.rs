//! Click encodings: turning click lists into dense positive/negative guidance
//! channels, either as fixed-radius disks or as an inverted, truncated
//! distance transform.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageproc::distance_transform;
use crate::types::{BinaryMask, Click, Polarity, ProbMap};

pub const DEFAULT_DISK_RADIUS: u32 = 5;
pub const DEFAULT_DT_CAP: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingScheme {
    Disk,
    DistanceTransform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub scheme: EncodingScheme,
    pub disk_radius: u32,
    pub dt_cap: f64,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            scheme: EncodingScheme::Disk,
            disk_radius: DEFAULT_DISK_RADIUS,
            dt_cap: DEFAULT_DT_CAP,
        }
    }
}

impl EncodingConfig {
    pub fn disk(radius: u32) -> Self {
        Self {
            scheme: EncodingScheme::Disk,
            disk_radius: radius,
            ..Self::default()
        }
    }

    pub fn distance_transform(cap: f64) -> Self {
        Self {
            scheme: EncodingScheme::DistanceTransform,
            dt_cap: cap,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_cap > 0.0 && self.dt_cap.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "distance transform cap must be positive, got {}",
                self.dt_cap
            )));
        }
        Ok(())
    }

    pub fn encode(&self, clicks: &[Click], height: usize, width: usize) -> Result<GuidanceChannels> {
        self.validate()?;
        match self.scheme {
            EncodingScheme::Disk => encode_disks(clicks, height, width, self.disk_radius),
            EncodingScheme::DistanceTransform => {
                encode_distance_transform(clicks, height, width, self.dt_cap)
            }
        }
    }
}

/// Parses `disk:R` or `dt:CAP` (a bare `disk` / `dt` uses the default).
impl FromStr for EncodingConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let bad = || Error::InvalidArgument(format!("bad encoding `{s}`, expected disk:R or dt:CAP"));
        let cfg = match kind {
            "disk" => EncodingConfig::disk(arg.map(str::parse).transpose().map_err(|_| bad())?.unwrap_or(DEFAULT_DISK_RADIUS)),
            "dt" => EncodingConfig::distance_transform(
                arg.map(str::parse).transpose().map_err(|_| bad())?.unwrap_or(DEFAULT_DT_CAP),
            ),
            _ => return Err(bad()),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for EncodingConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.scheme {
            EncodingScheme::Disk => write!(f, "disk:{}", self.disk_radius),
            EncodingScheme::DistanceTransform => write!(f, "dt:{}", self.dt_cap),
        }
    }
}

/// The positive and negative click channels, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceChannels {
    pub pos: ProbMap,
    pub neg: ProbMap,
}

impl GuidanceChannels {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            pos: ProbMap::zeros(height, width),
            neg: ProbMap::zeros(height, width),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.pos.dims()
    }
}

/// Distinct click pixels of one polarity, bounds-checked.
fn seeds(clicks: &[Click], polarity: Polarity, height: usize, width: usize) -> Result<BTreeSet<(usize, usize)>> {
    let mut out = BTreeSet::new();
    for c in clicks {
        c.check_bounds(height, width)?;
        if c.polarity == polarity {
            out.insert((c.row, c.col));
        }
    }
    Ok(out)
}

fn disk_channel(centers: &BTreeSet<(usize, usize)>, height: usize, width: usize, radius: u32) -> ProbMap {
    let mut data = vec![0.0; height * width];
    let r = radius as isize;
    let r2 = r * r;
    for &(cr, cc) in centers {
        for dr in -r..=r {
            let row = cr as isize + dr;
            if row < 0 || row >= height as isize {
                continue;
            }
            for dc in -r..=r {
                let col = cc as isize + dc;
                if col < 0 || col >= width as isize || dr * dr + dc * dc > r2 {
                    continue;
                }
                data[row as usize * width + col as usize] = 1.0;
            }
        }
    }
    ProbMap::from_vec(height, width, data).expect("sized above")
}

/// A pixel is 1 iff it lies within Euclidean distance `radius` of a click of
/// the channel's polarity.
pub fn encode_disks(clicks: &[Click], height: usize, width: usize, radius: u32) -> Result<GuidanceChannels> {
    Ok(GuidanceChannels {
        pos: disk_channel(&seeds(clicks, Polarity::Positive, height, width)?, height, width, radius),
        neg: disk_channel(&seeds(clicks, Polarity::Negative, height, width)?, height, width, radius),
    })
}

/// `1 - min(d, cap) / cap` where `d` is the distance to the nearest click
/// pixel of the channel's polarity: 1 on the click, fading to 0 at `cap`.
pub fn dt_channel(centers: &BTreeSet<(usize, usize)>, height: usize, width: usize, cap: f64) -> ProbMap {
    if centers.is_empty() {
        return ProbMap::zeros(height, width);
    }
    let mut src = BinaryMask::new(height, width);
    for &(r, c) in centers {
        src.set(r, c, true);
    }
    let dist = distance_transform(&src);
    let data = dist.data().iter().map(|&d| 1.0 - d.min(cap) / cap).collect();
    ProbMap::from_vec(height, width, data).expect("values within [0, 1]")
}

pub fn encode_distance_transform(clicks: &[Click], height: usize, width: usize, cap: f64) -> Result<GuidanceChannels> {
    if !(cap > 0.0) {
        return Err(Error::InvalidArgument(format!("cap must be positive, got {cap}")));
    }
    Ok(GuidanceChannels {
        pos: dt_channel(&seeds(clicks, Polarity::Positive, height, width)?, height, width, cap),
        neg: dt_channel(&seeds(clicks, Polarity::Negative, height, width)?, height, width, cap),
    })
}

pub(crate) fn click_seeds(clicks: &[Click], polarity: Polarity, height: usize, width: usize) -> Result<BTreeSet<(usize, usize)>> {
    seeds(clicks, polarity, height, width)
}
