//! Specular ghost resolution.
//!
//! A beam that lands on a surface smoother than the threshold triggers a ghost with
//! probability `trigger_ratio`. The triggered beam is mirrored about the surface normal and
//! cast once more; if it reaches a second object at distance `b`, the sensor reports that
//! object at `a + b` along the original beam. A triggered beam whose reflection escapes
//! returns nothing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scene::{Hit, Scene, SceneError};
use crate::Vec3;

/// Start offset of the reflected ray from the glossy surface.
pub const SELF_INTERSECTION_OFFSET: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GhostConfig {
    pub enabled: bool,
    pub smoothness_threshold: f64,
    pub trigger_ratio: f64,
}

impl Default for GhostConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            smoothness_threshold: 0.9,
            trigger_ratio: 0.5,
        }
    }
}

impl GhostConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.smoothness_threshold) && (0.0..=1.0).contains(&self.trigger_ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GhostKind {
    Real,
    Ghost,
    NoReturn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GhostOutcome {
    pub kind: GhostKind,
    /// Distance to the first hit.
    pub a: f64,
    /// Length of the reflected segment, for ghosts.
    pub b: Option<f64>,
    /// Reported position along the original beam (world frame).
    pub position: Vec3,
    /// Surface whose label and reflectivity the reported point carries.
    pub surface: usize,
}

impl GhostOutcome {
    /// Reported range along the original beam.
    pub fn range(&self) -> f64 {
        self.a + self.b.unwrap_or(0.0)
    }
}

/// Mirror `d` about the plane with unit normal `n`.
pub fn reflect(d: &Vec3, n: &Vec3) -> Vec3 {
    d - n * (2.0 * d.dot(n))
}

pub fn resolve_hit<R: Rng + ?Sized>(
    scene: &Scene,
    origin: &Vec3,
    direction: &Vec3,
    first_hit: &Hit,
    config: &GhostConfig,
    rng: &mut R,
) -> Result<GhostOutcome, SceneError> {
    let real = GhostOutcome {
        kind: GhostKind::Real,
        a: first_hit.distance,
        b: None,
        position: first_hit.position,
        surface: first_hit.surface,
    };
    if !config.enabled || scene.surface(first_hit.surface).smoothness <= config.smoothness_threshold {
        return Ok(real);
    }
    let u: f64 = rng.random();
    if u >= config.trigger_ratio {
        return Ok(real);
    }
    let reflected = reflect(direction, &first_hit.normal).normalize();
    let second = scene.cast_ray(&first_hit.position, &reflected, SELF_INTERSECTION_OFFSET, f64::INFINITY)?;
    Ok(match second {
        Some(hit) => {
            let total = first_hit.distance + hit.distance;
            GhostOutcome {
                kind: GhostKind::Ghost,
                a: first_hit.distance,
                b: Some(hit.distance),
                position: origin + direction * total,
                surface: hit.surface,
            }
        }
        None => GhostOutcome {
            kind: GhostKind::NoReturn,
            b: None,
            ..real
        },
    })
}
