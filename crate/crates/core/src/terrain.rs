//! Longitudinal heightmap worlds.
//!
//! A [`World`] is a sagittal terrain profile sampled every [`GRID_STEP`]
//! metres. The robot starts at [`World::start_x`] and has to cover
//! `required_length` metres. World geometry never contains NaN; missing
//! measurements only appear in sensed elevation maps.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Spacing of the height samples (five samples per 0.1 m DEM cell).
pub const GRID_STEP: f64 = 0.02;
/// Free terrain kept behind the start pose and beyond the goal so that the
/// flippers and the forward-looking DEM footprint stay inside the world.
pub const MARGIN: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TerrainError {
    #[error("invalid obstacle spec: {0}")]
    InvalidSpec(String),
    #[error("x = {x} outside world extent [0, {extent}]")]
    OutOfRange { x: f64, extent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ObstacleKind {
    Flat,
    Pallet,
    StairsUp,
    StairsDown,
    Random,
}

/// Obstacle geometry. All lengths in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind"))]
pub enum Obstacle {
    Flat,
    Pallet { height: f64, length: f64 },
    StairsUp { riser: f64, tread: f64, steps: u32 },
    StairsDown { riser: f64, tread: f64, steps: u32 },
    Random { amplitude: f64, corr_length: f64 },
}

impl Obstacle {
    pub fn kind(&self) -> ObstacleKind {
        match self {
            Obstacle::Flat => ObstacleKind::Flat,
            Obstacle::Pallet { .. } => ObstacleKind::Pallet,
            Obstacle::StairsUp { .. } => ObstacleKind::StairsUp,
            Obstacle::StairsDown { .. } => ObstacleKind::StairsDown,
            Obstacle::Random { .. } => ObstacleKind::Random,
        }
    }
}

/// A world recipe: obstacle, where it starts, and how far the robot must go.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObstacleSpec {
    pub obstacle: Obstacle,
    /// Distance from the start pose to the leading edge of the obstacle.
    pub approach: f64,
    pub required_length: f64,
    /// Largest single rise allowed between adjacent DEM cells (0.1 m apart).
    #[cfg_attr(feature = "serde", serde(default = "default_max_riser"))]
    pub max_riser: f64,
}

#[cfg(feature = "serde")]
fn default_max_riser() -> f64 {
    0.2
}

impl ObstacleSpec {
    pub fn new(obstacle: Obstacle, approach: f64, required_length: f64) -> Self {
        Self {
            obstacle,
            approach,
            required_length,
            max_riser: 0.2,
        }
    }

    pub fn validate(&self) -> Result<(), TerrainError> {
        let bad = |msg: &str| Err(TerrainError::InvalidSpec(String::from(msg)));
        if !(self.required_length > 0.0 && self.required_length.is_finite()) {
            return bad("required_length must be positive");
        }
        if !(self.approach >= 0.0 && self.approach.is_finite()) {
            return bad("approach must be non-negative");
        }
        if !(self.max_riser > 0.0 && self.max_riser.is_finite()) {
            return bad("max_riser must be positive");
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match self.obstacle {
            Obstacle::Flat => {}
            Obstacle::Pallet { height, length } => {
                if !positive(height) || !positive(length) {
                    return bad("pallet dimensions must be positive");
                }
                if height > self.max_riser {
                    return bad("pallet height exceeds the climbable limit");
                }
            }
            Obstacle::StairsUp { riser, tread, steps } | Obstacle::StairsDown { riser, tread, steps } => {
                if !positive(riser) || !positive(tread) || steps == 0 {
                    return bad("stair dimensions must be positive");
                }
                if riser > self.max_riser {
                    return bad("stair riser exceeds the climbable limit");
                }
            }
            Obstacle::Random {
                amplitude,
                corr_length,
            } => {
                if !positive(amplitude) || !positive(corr_length) {
                    return bad("roughness amplitude and correlation length must be positive");
                }
            }
        }
        Ok(())
    }
}

/// Immutable terrain profile.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct World {
    pub grid_step: f64,
    pub heights: Vec<f64>,
    pub obstacle_kind: ObstacleKind,
    pub params: ObstacleSpec,
    pub required_length: f64,
    pub seed: u64,
    pub start_x: f64,
}

/// Builds the world described by `spec`. Pure in `(spec, seed)`.
pub fn generate_world(spec: &ObstacleSpec, seed: u64) -> Result<World, TerrainError> {
    spec.validate()?;
    let start_x = MARGIN;
    let extent = start_x + spec.required_length + MARGIN;
    let n = libm::round(extent / GRID_STEP) as usize + 1;
    let edge = start_x + spec.approach;
    let xs = (0..n).map(|i| i as f64 * GRID_STEP);

    let heights: Vec<f64> = match spec.obstacle {
        Obstacle::Flat => xs.map(|_| 0.0).collect(),
        Obstacle::Pallet { height, length } => xs
            .map(|x| if at_or_past(x, edge) && !at_or_past(x, edge + length) { height } else { 0.0 })
            .collect(),
        Obstacle::StairsUp { riser, tread, steps } => xs
            .map(|x| riser * risers_passed(x, edge, tread, steps) as f64)
            .collect(),
        Obstacle::StairsDown { riser, tread, steps } => xs
            .map(|x| riser * (steps - risers_passed(x, edge, tread, steps)) as f64)
            .collect(),
        Obstacle::Random {
            amplitude,
            corr_length,
        } => random_profile(n, edge, amplitude, corr_length, spec.max_riser, seed),
    };

    Ok(World {
        grid_step: GRID_STEP,
        heights,
        obstacle_kind: spec.obstacle.kind(),
        params: *spec,
        required_length: spec.required_length,
        seed,
        start_x,
    })
}

// Edge comparisons tolerate the rounding of `i as f64 * GRID_STEP`.
fn at_or_past(x: f64, edge: f64) -> bool {
    x >= edge - 1e-9
}

fn risers_passed(x: f64, first_edge: f64, tread: f64, steps: u32) -> u32 {
    (0..steps)
        .filter(|&k| at_or_past(x, first_edge + k as f64 * tread))
        .count() as u32
}

fn random_profile(n: usize, edge: f64, amplitude: f64, corr: f64, max_riser: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extent = (n - 1) as f64 * GRID_STEP;
    let knots = libm::ceil((extent - edge).max(0.0) / corr) as usize + 2;
    // First knot pinned to zero so the profile leaves the flat approach continuously.
    let mut values: Vec<f64> = (0..knots)
        .map(|_| rng.random_range(-amplitude..=amplitude))
        .collect();
    values[0] = 0.0;

    let mut h: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 * GRID_STEP;
            if x <= edge {
                return 0.0;
            }
            let u = (x - edge) / corr;
            let k = (libm::floor(u) as usize).min(knots - 2);
            let f = u - k as f64;
            let s = f * f * (3.0 - 2.0 * f);
            values[k] * (1.0 - s) + values[k + 1] * s
        })
        .collect();

    // Limit the rise across one DEM cell (5 samples) to the climbable bound.
    let lag = 5;
    let limit = 0.95 * max_riser;
    for i in lag..n {
        let lo = h[i - lag] - limit;
        let hi = h[i - lag] + limit;
        h[i] = h[i].clamp(lo, hi);
    }
    h
}

impl World {
    pub fn extent(&self) -> f64 {
        (self.heights.len() - 1) as f64 * self.grid_step
    }

    /// x the robot must reach to complete the traversal.
    pub fn goal_x(&self) -> f64 {
        self.start_x + self.required_length
    }

    fn check(&self, x: f64) -> Result<(), TerrainError> {
        if x.is_nan() || x < -1e-9 || x > self.extent() + 1e-9 {
            return Err(TerrainError::OutOfRange {
                x,
                extent: self.extent(),
            });
        }
        Ok(())
    }

    /// Linear interpolation between grid samples.
    pub fn height_at(&self, x: f64) -> Result<f64, TerrainError> {
        self.check(x)?;
        Ok(self.height_clamped(x))
    }

    /// [`World::height_at`] with x clamped to the extent (border height outside).
    pub fn height_clamped(&self, x: f64) -> f64 {
        let last = self.heights.len() - 1;
        let u = x / self.grid_step;
        if !(u > 0.0) {
            return self.heights[0];
        }
        let i = libm::floor(u) as usize;
        if i >= last {
            return self.heights[last];
        }
        let f = u - i as f64;
        if f == 0.0 {
            return self.heights[i];
        }
        self.heights[i] * (1.0 - f) + self.heights[i + 1] * f
    }

    /// Maximum of the surface over `[x0, x1]`.
    pub fn max_height_in(&self, x0: f64, x1: f64) -> Result<f64, TerrainError> {
        self.check(x0)?;
        self.check(x1)?;
        if !(x0 < x1) {
            return Err(TerrainError::InvalidSpec(String::from("interval must satisfy x0 < x1")));
        }
        Ok(self.max_height_clamped(x0, x1))
    }

    /// [`World::max_height_in`] with the interval clamped to the extent.
    pub fn max_height_clamped(&self, x0: f64, x1: f64) -> f64 {
        let extent = self.extent();
        let a = x0.clamp(0.0, extent);
        let b = x1.clamp(0.0, extent);
        let mut best = self.height_clamped(a).max(self.height_clamped(b));
        let first = libm::ceil(a / self.grid_step) as usize;
        let last = (libm::floor(b / self.grid_step) as usize).min(self.heights.len() - 1);
        for i in first..=last {
            if i < self.heights.len() {
                best = best.max(self.heights[i]);
            }
        }
        best
    }

    /// Copy of the world with every height shifted by `dz`.
    pub fn shifted(&self, dz: f64) -> World {
        let mut w = self.clone();
        for h in &mut w.heights {
            *h += dz;
        }
        w
    }
}
