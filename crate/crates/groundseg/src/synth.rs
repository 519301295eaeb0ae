//! Labeled synthetic LiDAR-like frames over parametric terrains.
//!
//! Points come in concentric rings whose radii grow geometrically, so areal
//! density falls with range the way a spinning scanner's does. Ground height
//! follows the terrain function plus clamped Gaussian noise; box obstacles
//! replace the returns inside their footprint with their top surface and add
//! deterministic side-face columns, exactly like an opaque object standing
//! on the ground. Every point carries its true label, which is what the
//! segmentation quality checks score against.

use alloc::vec::Vec;

use core::f64::consts::TAU;

use rand_core::{RngCore, SeedableRng};

use crate::cloud::{Label, Point3, PointCloud};
use crate::error::Error;
#[allow(unused_imports)]
use crate::float::prelude::*;

/// Radius of the innermost ring (m).
const FIRST_RING_RADIUS: f64 = 2.0;
/// Side-face sampling: horizontal step along the perimeter and the number of
/// vertical intervals from ground to top.
const FACE_STEP: f64 = 0.25;
const FACE_LEVELS: usize = 7;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case"))]
pub enum TerrainKind {
    Flat,
    Sloped {
        grade: f64,
    },
    Bumpy {
        amplitude: f64,
        wavelength: f64,
    },
    /// Piecewise-linear radial profile: `grades[k]` applies between
    /// `breakpoints[k-1]` and `breakpoints[k]`; heights are continuous.
    Piecewise {
        breakpoints: Vec<f64>,
        grades: Vec<f64>,
    },
}

/// Axis-aligned box obstacle standing on the terrain.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoxObstacle {
    /// Footprint center (x, y).
    pub center: [f64; 2],
    /// Footprint half extents (x, y).
    pub half_extent: [f64; 2],
    /// Top height above the terrain at the footprint center.
    pub height: f64,
}

impl BoxObstacle {
    fn contains_xy(&self, x: f64, y: f64) -> bool {
        (x - self.center[0]).abs() <= self.half_extent[0]
            && (y - self.center[1]).abs() <= self.half_extent[1]
    }

    fn top_z(&self, kind: &TerrainKind) -> f64 {
        terrain_height(kind, self.center[0].hypot(self.center[1])) + self.height
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct TerrainSpec {
    pub kind: TerrainKind,
    #[cfg_attr(feature = "serde", serde(default))]
    pub obstacles: Vec<BoxObstacle>,
    pub noise_sigma: f64,
    pub rings: u32,
    pub points_per_ring: u32,
    pub max_range: f64,
    pub seed: u64,
}

impl TerrainSpec {
    pub fn validate(&self) -> Result<(), Error> {
        if self.rings < 1 {
            return Err(Error::InvalidSpec("rings must be >= 1"));
        }
        if self.points_per_ring < 1 {
            return Err(Error::InvalidSpec("points_per_ring must be >= 1"));
        }
        if !(self.max_range >= FIRST_RING_RADIUS && self.max_range.is_finite()) {
            return Err(Error::InvalidSpec("max_range must be >= 2"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidSpec("noise_sigma must be >= 0"));
        }
        match &self.kind {
            TerrainKind::Flat | TerrainKind::Sloped { .. } => {}
            TerrainKind::Bumpy { wavelength, .. } => {
                if !(*wavelength > 0.0) {
                    return Err(Error::InvalidSpec("wavelength must be > 0"));
                }
            }
            TerrainKind::Piecewise { breakpoints, grades } => {
                if grades.len() != breakpoints.len() + 1 {
                    return Err(Error::InvalidSpec("need one more grade than breakpoints"));
                }
                if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidSpec("breakpoints must strictly increase"));
                }
                if breakpoints.first().is_some_and(|&b| b <= 0.0) {
                    return Err(Error::InvalidSpec("breakpoints must be positive"));
                }
            }
        }
        for b in &self.obstacles {
            if !(b.half_extent[0] > 0.0 && b.half_extent[1] > 0.0) {
                return Err(Error::InvalidSpec("obstacle extents must be > 0"));
            }
            if !(b.height > 0.0) {
                return Err(Error::InvalidSpec("obstacle height must be > 0"));
            }
        }
        Ok(())
    }
}

/// True ground height at radius `r`.
pub fn terrain_height(kind: &TerrainKind, r: f64) -> f64 {
    match kind {
        TerrainKind::Flat => 0.0,
        TerrainKind::Sloped { grade } => grade * r,
        TerrainKind::Bumpy { amplitude, wavelength } => amplitude * (TAU * r / wavelength).sin(),
        TerrainKind::Piecewise { breakpoints, grades } => {
            let mut z = 0.0;
            let mut start = 0.0;
            for (k, &b) in breakpoints.iter().enumerate() {
                if r <= b {
                    return z + grades[k] * (r - start);
                }
                z += grades[k] * (b - start);
                start = b;
            }
            z + grades[breakpoints.len()] * (r - start)
        }
    }
}

fn ring_rng(seed: u64, ring: u64) -> rand_chacha::ChaCha8Rng {
    rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ ring.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn next_unit(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal via Box-Muller, clamped to +-5 to keep every ground point
/// within the label-soundness band.
fn clamped_normal(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    let u1 = (next_unit(rng)).max(1e-300);
    let u2 = next_unit(rng);
    let n = (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos();
    n.clamp(-5.0, 5.0)
}

fn ring_radii(spec: &TerrainSpec) -> Vec<f64> {
    let n = spec.rings as usize;
    if n == 1 {
        return alloc::vec![spec.max_range];
    }
    let growth = (spec.max_range / FIRST_RING_RADIUS).ln() / (n - 1) as f64;
    (0..n)
        .map(|k| FIRST_RING_RADIUS * (growth * k as f64).exp())
        .collect()
}

/// Generate one labeled frame. Deterministic given the spec; rings draw from
/// independent seeded streams, so the output does not depend on how the work
/// is scheduled.
pub fn generate(spec: &TerrainSpec) -> Result<(PointCloud, Vec<Label>), Error> {
    spec.validate()?;
    let ppr = spec.points_per_ring as usize;
    let mut points = Vec::with_capacity(spec.rings as usize * ppr);
    let mut labels = Vec::with_capacity(points.capacity());

    for (ring, &r) in ring_radii(spec).iter().enumerate() {
        let mut rng = ring_rng(spec.seed, ring as u64);
        let slot = TAU / ppr as f64;
        for j in 0..ppr {
            let angle = slot * j as f64 + 0.9 * slot * next_unit(&mut rng);
            let noise = clamped_normal(&mut rng) * spec.noise_sigma;
            let (x, y) = (r * angle.cos(), r * angle.sin());
            match spec.obstacles.iter().find(|b| b.contains_xy(x, y)) {
                Some(b) => {
                    points.push(Point3::new(x, y, b.top_z(&spec.kind)));
                    labels.push(Label::Obstacle);
                }
                None => {
                    points.push(Point3::new(x, y, terrain_height(&spec.kind, r) + noise));
                    labels.push(Label::Ground);
                }
            }
        }
    }

    // Side faces: deterministic columns along each box perimeter. Levels
    // start one step above the ground contact line; a return at exactly
    // terrain height is indistinguishable from ground and would only poison
    // the truth labels.
    for b in &spec.obstacles {
        let top = b.top_z(&spec.kind);
        let (hx, hy) = (b.half_extent[0], b.half_extent[1]);
        let corners = [
            (b.center[0] - hx, b.center[1] - hy),
            (b.center[0] + hx, b.center[1] - hy),
            (b.center[0] + hx, b.center[1] + hy),
            (b.center[0] - hx, b.center[1] + hy),
        ];
        for e in 0..4 {
            let (x0, y0) = corners[e];
            let (x1, y1) = corners[(e + 1) % 4];
            let len = (x1 - x0).hypot(y1 - y0);
            let steps = ((len / FACE_STEP) as usize).max(1);
            for s in 0..steps {
                let t = s as f64 / steps as f64;
                let (x, y) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
                let base = terrain_height(&spec.kind, x.hypot(y));
                for lvl in 1..=FACE_LEVELS {
                    let frac = lvl as f64 / FACE_LEVELS as f64;
                    points.push(Point3::new(x, y, base + frac * (top - base)));
                    labels.push(Label::Obstacle);
                }
            }
        }
    }

    Ok((PointCloud::new(points), labels))
}
