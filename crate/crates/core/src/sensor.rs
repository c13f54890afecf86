//! Frame assembly: pattern, poses, ray casting, ghosting and the range model.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam::{BeamPattern, Continuation, PatternConfig, PatternError};
use crate::ghost::{resolve_hit, GhostConfig, GhostKind};
use crate::motion::{accumulate_frame, partition_subframes, pose_at, DistortionConfig, MotionError, Pose, Trajectory};
use crate::rng::{beam_rng, Stream};
use crate::scene::{Scene, SceneError, SemanticLabel};
use crate::Vec3;

/// Range noise is truncated at this many standard deviations.
pub const NOISE_CLIP_SIGMAS: f64 = 6.0;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("trajectory does not cover the frame: {0}")]
    TrajectoryGap(MotionError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("invalid lidar model: {0}")]
    InvalidModel(String),
}

/// Scanner family tag used by the preset catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LidarFamily {
    Surround,
    SolidState,
    RisleyPrism,
}

/// A complete sensor description: scan pattern plus range, noise and ghost behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarModel {
    pub name: String,
    pub family: LidarFamily,
    /// Where the parameters come from (datasheet approximations for built-in presets).
    pub source: String,
    pub pattern: PatternConfig,
    /// Blind zone: returns at or below this range are dropped.
    pub range_min: f64,
    pub range_max: f64,
    pub range_noise_sigma: f64,
    pub dropout_probability: f64,
    pub ghost: GhostConfig,
}

impl LidarModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidModel(format!("{}: {m}", self.name)));
        if !(self.range_min >= 0.0 && self.range_min < self.range_max) {
            return bad("require 0 <= range_min < range_max");
        }
        if !(self.range_noise_sigma >= 0.0 && self.range_noise_sigma.is_finite()) {
            return bad("range_noise_sigma must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.dropout_probability) {
            return bad("dropout_probability must lie in [0, 1]");
        }
        if !self.ghost.is_valid() {
            return bad("ghost threshold and ratio must lie in [0, 1]");
        }
        let family_ok = matches!(
            (&self.pattern, self.family),
            (PatternConfig::SurroundUniform { .. }, LidarFamily::Surround)
                | (PatternConfig::SurroundNonUniform { .. }, LidarFamily::Surround)
                | (PatternConfig::MemsLissajous { .. }, LidarFamily::SolidState)
                | (PatternConfig::RisleyPrism { .. }, LidarFamily::RisleyPrism)
                | (PatternConfig::Table { .. }, _)
        );
        if !family_ok {
            return bad("pattern family does not match the lidar family");
        }
        Ok(())
    }

    pub fn frame_period(&self) -> f64 {
        self.pattern.frame_period()
    }
}

/// One simulated return.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarPoint {
    pub position: [f64; 3],
    pub intensity: f64,
    pub timestamp: f64,
    pub label: SemanticLabel,
    pub is_ghost: bool,
    pub channel: u32,
}

impl LidarPoint {
    pub fn position(&self) -> Vec3 {
        Vec3::from(self.position)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose,
}

/// One frame of points in the frame-start sensor frame, plus the poses that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloudFrame {
    pub frame_index: u64,
    pub seed: u64,
    pub frame_start: f64,
    pub frame_period: f64,
    pub start_pose: Pose,
    /// Sub-frame poses when distortion is on, empty otherwise.
    pub subframe_poses: Vec<TimedPose>,
    #[serde(skip)]
    pub points: Vec<LidarPoint>,
}

impl PointCloudFrame {
    /// Points projected into the world frame through the frame-start pose.
    pub fn to_world(&self) -> Vec<LidarPoint> {
        self.points
            .iter()
            .map(|p| {
                let w = self.start_pose.transform_point(&p.position());
                LidarPoint {
                    position: [w.x, w.y, w.z],
                    ..*p
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimOptions {
    pub distortion: DistortionConfig,
    pub continuation: Continuation,
}

/// Measured range for a true range, or `None` when the return is lost.
pub fn apply_range_model<R: Rng + ?Sized>(true_distance: f64, lidar: &LidarModel, rng: &mut R) -> Option<f64> {
    if true_distance <= lidar.range_min || true_distance > lidar.range_max {
        return None;
    }
    let drop: f64 = rng.random();
    if drop < lidar.dropout_probability {
        return None;
    }
    let sigma = lidar.range_noise_sigma;
    if sigma == 0.0 {
        return Some(true_distance);
    }
    let z: f64 = StandardNormal.sample(rng);
    let measured = true_distance + sigma * z.clamp(-NOISE_CLIP_SIGMAS, NOISE_CLIP_SIGMAS);
    (measured > lidar.range_min).then_some(measured)
}

struct BeamContext<'a> {
    scene: &'a Scene,
    lidar: &'a LidarModel,
    pattern: &'a BeamPattern,
    frame_index: u64,
    frame_start: f64,
    seed: u64,
}

impl BeamContext<'_> {
    fn fire(&self, beam: usize, pose: &Pose) -> Result<Option<LidarPoint>, SimError> {
        let sample = &self.pattern.samples[beam];
        let local = sample.direction();
        let dir = pose.transform_vector(&local);
        let origin = pose.translation;
        let Some(hit) = self.scene.cast_ray(&origin, &dir, 0.0, self.lidar.range_max)? else {
            return Ok(None);
        };
        let mut ghost_rng = beam_rng(self.seed, self.frame_index, beam as u64, Stream::Ghost);
        let outcome = resolve_hit(self.scene, &origin, &dir, &hit, &self.lidar.ghost, &mut ghost_rng)?;
        if outcome.kind == GhostKind::NoReturn {
            return Ok(None);
        }
        let mut range_rng = beam_rng(self.seed, self.frame_index, beam as u64, Stream::Range);
        let Some(range) = apply_range_model(outcome.range(), self.lidar, &mut range_rng) else {
            return Ok(None);
        };
        let surface = self.scene.surface(outcome.surface);
        let p = local * range;
        Ok(Some(LidarPoint {
            position: [p.x, p.y, p.z],
            intensity: surface.reflectivity,
            timestamp: self.frame_start + sample.t_offset,
            label: surface.label,
            is_ghost: outcome.kind == GhostKind::Ghost,
            channel: sample.channel,
        }))
    }

    fn fire_range(&self, beams: std::ops::Range<usize>, pose: &Pose) -> Result<Vec<LidarPoint>, SimError> {
        let fired: Result<Vec<_>, _> = beams.into_par_iter().map(|i| self.fire(i, pose)).collect();
        Ok(fired?.into_iter().flatten().collect())
    }
}

fn gap(e: MotionError) -> SimError {
    match e {
        MotionError::OutsideCoverage { .. } => SimError::TrajectoryGap(e),
        other => SimError::Motion(other),
    }
}

/// Simulates frame `frame_index` of `lidar` moving along `trajectory`.
///
/// Frame `k` spans `[k T, (k + 1) T)` on the trajectory clock. Point positions are the
/// measured range along the beam direction of the emitting pose, so motion within the frame
/// shows up as distortion when the frame is read in the frame-start sensor frame.
pub fn simulate_frame(
    scene: &Scene,
    lidar: &LidarModel,
    trajectory: &Trajectory,
    frame_index: u64,
    options: &SimOptions,
    seed: u64,
) -> Result<PointCloudFrame, SimError> {
    lidar.validate()?;
    let distortion = options.distortion;
    if distortion.enabled && distortion.subframes == 0 {
        return Err(SimError::Motion(MotionError::InvalidSubframes));
    }
    let pattern = lidar.pattern.generate_frame(frame_index, options.continuation)?;
    let period = pattern.frame_period;
    let frame_start = frame_index as f64 * period;
    let start_pose = pose_at(trajectory, frame_start).map_err(gap)?;
    let ctx = BeamContext {
        scene,
        lidar,
        pattern: &pattern,
        frame_index,
        frame_start,
        seed,
    };

    let mut subframe_poses = Vec::new();
    let points = if !distortion.enabled {
        ctx.fire_range(0..pattern.len(), &start_pose)?
    } else if distortion.per_point {
        let poses: Result<Vec<Pose>, _> = pattern
            .samples
            .iter()
            .map(|s| pose_at(trajectory, frame_start + s.t_offset).map_err(gap))
            .collect();
        let poses = poses?;
        let fired: Result<Vec<_>, _> = (0..pattern.len())
            .into_par_iter()
            .map(|i| ctx.fire(i, &poses[i]))
            .collect();
        fired?.into_iter().flatten().collect()
    } else {
        let batches = partition_subframes(&pattern, distortion.subframes)?;
        let mut outputs = Vec::with_capacity(batches.len());
        for b in &batches {
            let t = frame_start + b.start_offset;
            let pose = pose_at(trajectory, t).map_err(gap)?;
            subframe_poses.push(TimedPose { t, pose });
            outputs.push(ctx.fire_range(b.samples.clone(), &pose)?);
        }
        accumulate_frame(outputs)
    };

    Ok(PointCloudFrame {
        frame_index,
        seed,
        frame_start,
        frame_period: period,
        start_pose,
        subframe_poses,
        points,
    })
}
