//! Ground profiles: flat, stairs, and smoothed random height fields.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::EnvError;
use crate::rbd::Terrain;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TerrainKind {
    Flat,
    Stairs,
    Rough,
}

impl TerrainKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Flat => "flat",
            Self::Stairs => "stairs",
            Self::Rough => "rough",
        }
    }
}

impl fmt::Display for TerrainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TerrainKind {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "flat" => Ok(Self::Flat),
            "stairs" => Ok(Self::Stairs),
            "rough" => Ok(Self::Rough),
            _ => Err(EnvError::Invalid(format!("unknown terrain kind `{s}`"))),
        }
    }
}

pub const STEP_HEIGHT_RANGE: (f64, f64) = (0.05, 0.2);
pub const STEP_DEPTH_RANGE: (f64, f64) = (0.25, 0.4);

/// Generation parameters. Stair dimensions are drawn uniformly from their
/// `[lo, hi]` ranges; equal bounds fix them.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainParams {
    pub kind: TerrainKind,
    pub step_height: (f64, f64),
    pub step_depth: (f64, f64),
    /// Stairs and rough patches begin here, m.
    pub start_x: f64,
    /// Peak height of the rough field, m.
    pub amplitude: f64,
    /// m
    pub correlation_length: f64,
    pub friction: f64,
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            kind: TerrainKind::Flat,
            step_height: STEP_HEIGHT_RANGE,
            step_depth: STEP_DEPTH_RANGE,
            start_x: 1.0,
            amplitude: 0.03,
            correlation_length: 0.3,
            friction: 0.5,
        }
    }
}

impl TerrainParams {
    pub fn flat(friction: f64) -> Self {
        Self {
            friction,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let within = |name: &str, (lo, hi): (f64, f64), (min, max): (f64, f64)| {
            if lo <= hi && lo >= min && hi <= max {
                Ok(())
            } else {
                Err(EnvError::Invalid(format!(
                    "{name} range [{lo}, {hi}] outside [{min}, {max}]"
                )))
            }
        };
        if self.kind == TerrainKind::Stairs {
            within("step height", self.step_height, STEP_HEIGHT_RANGE)?;
            within("step depth", self.step_depth, STEP_DEPTH_RANGE)?;
        }
        if self.kind == TerrainKind::Rough
            && !(self.amplitude >= 0.0 && self.correlation_length > 0.0)
        {
            return Err(EnvError::Invalid(
                "rough terrain needs amplitude >= 0 and correlation length > 0".into(),
            ));
        }
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            return Err(EnvError::Invalid(format!("friction {}", self.friction)));
        }
        Ok(())
    }
}

const FIELD_SPACING: f64 = 0.05;
const FIELD_LENGTH: f64 = 16.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TerrainProfile {
    pub kind: TerrainKind,
    pub step_height: f64,
    pub step_depth: f64,
    pub start_x: f64,
    pub amplitude: f64,
    pub correlation_length: f64,
    /// Rough-field samples every `FIELD_SPACING` m from `start_x`.
    pub heights: Vec<f64>,
    pub friction: f64,
}

impl TerrainProfile {
    pub fn flat(friction: f64) -> Self {
        Self {
            kind: TerrainKind::Flat,
            step_height: 0.0,
            step_depth: 0.0,
            start_x: 0.0,
            amplitude: 0.0,
            correlation_length: 0.0,
            heights: Vec::new(),
            friction,
        }
    }
}

impl Terrain for TerrainProfile {
    fn height(&self, x: f64) -> f64 {
        match self.kind {
            TerrainKind::Flat => 0.0,
            TerrainKind::Stairs => {
                if x < self.start_x {
                    0.0
                } else {
                    self.step_height * (((x - self.start_x) / self.step_depth).floor() + 1.0)
                }
            }
            TerrainKind::Rough => {
                let s = (x - self.start_x) / FIELD_SPACING;
                if s <= 0.0 || self.heights.is_empty() {
                    return 0.0;
                }
                let i = s.floor() as usize;
                if i + 1 >= self.heights.len() {
                    return *self.heights.last().unwrap();
                }
                let w = s - i as f64;
                self.heights[i] * (1.0 - w) + self.heights[i + 1] * w
            }
        }
    }

    fn friction(&self) -> f64 {
        self.friction
    }
}

fn draw(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo < hi {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Deterministic for a given stream state.
pub fn generate_terrain(rng: &mut Rng, params: &TerrainParams) -> Result<TerrainProfile, EnvError> {
    params.validate()?;
    let mut profile = TerrainProfile::flat(params.friction);
    profile.kind = params.kind;
    profile.start_x = params.start_x;
    match params.kind {
        TerrainKind::Flat => {}
        TerrainKind::Stairs => {
            profile.step_height = draw(rng, params.step_height);
            profile.step_depth = draw(rng, params.step_depth);
        }
        TerrainKind::Rough => {
            profile.amplitude = params.amplitude;
            profile.correlation_length = params.correlation_length;
            let n = (FIELD_LENGTH / FIELD_SPACING) as usize;
            let sigma = params.correlation_length / FIELD_SPACING;
            let half = (3.0 * sigma).ceil() as isize;
            let kernel: Vec<f64> = (-half..=half)
                .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
                .collect();
            let noise: Vec<f64> = (0..n + kernel.len())
                .map(|_| StandardNormal.sample(rng))
                .collect();
            let mut field: Vec<f64> = (0..n)
                .map(|i| kernel.iter().zip(&noise[i..]).map(|(k, e)| k * e).sum())
                .collect();
            let peak = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let ramp = (0.5 / FIELD_SPACING) as usize;
            for (i, h) in field.iter_mut().enumerate() {
                let blend = (i as f64 / ramp as f64).min(1.0);
                *h = if peak > 0.0 {
                    *h / peak * params.amplitude * blend
                } else {
                    0.0
                };
            }
            profile.heights = field;
        }
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn flat_is_zero_everywhere() {
        let t = generate_terrain(&mut stream(0, 0), &TerrainParams::default()).unwrap();
        for x in [-10.0, 0.0, 3.3, 1e6] {
            assert_eq!(t.height(x), 0.0);
        }
    }

    #[test]
    fn stairs_step_function() {
        let params = TerrainParams {
            kind: TerrainKind::Stairs,
            step_height: (0.1, 0.1),
            step_depth: (0.3, 0.3),
            start_x: 1.0,
            ..Default::default()
        };
        let t = generate_terrain(&mut stream(0, 0), &params).unwrap();
        assert_eq!(t.height(1.05), 0.1);
        assert_eq!(t.height(0.95), 0.0);
        assert!((t.height(1.35) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn stairs_reject_out_of_range() {
        let params = TerrainParams {
            kind: TerrainKind::Stairs,
            step_height: (0.3, 0.3),
            ..Default::default()
        };
        assert!(generate_terrain(&mut stream(0, 0), &params).is_err());
    }

    #[test]
    fn rough_is_seeded_and_bounded() {
        let params = TerrainParams {
            kind: TerrainKind::Rough,
            ..Default::default()
        };
        let a = generate_terrain(&mut stream(4, 1), &params).unwrap();
        let b = generate_terrain(&mut stream(4, 1), &params).unwrap();
        let c = generate_terrain(&mut stream(5, 1), &params).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.heights.iter().all(|h| h.abs() <= params.amplitude + 1e-15));
        assert_eq!(a.height(0.5), 0.0);
        assert_eq!(a.height(2.37).to_bits(), a.height(2.37).to_bits());
    }
}
