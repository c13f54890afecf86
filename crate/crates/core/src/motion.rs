//! Sensor poses, trajectories and the sub-frame acquisition model.
//!
//! With distortion enabled a frame of period `T` is acquired as `N` consecutive sub-frames.
//! Sub-frame `k` fires the samples with `t_offset` in `[kT/N, (k+1)T/N)` from the pose at
//! its start time; the sub-frame outputs are buffered and emitted together as one frame.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam::{BeamPattern, BeamSample};
use crate::{UnitQuaternion, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum MotionError {
    #[error("time {t} s is outside the trajectory coverage [{start}, {end}]")]
    OutsideCoverage { t: f64, start: f64, end: f64 },
    #[error("trajectory has no keyframes")]
    EmptyTrajectory,
    #[error("keyframe times must be strictly increasing (keyframe {index})")]
    UnsortedKeyframes { index: usize },
    #[error("keyframe {index} is not finite")]
    NonFiniteKeyframe { index: usize },
    #[error("sub-frame count must be at least 1")]
    InvalidSubframes,
}

/// Rigid sensor pose: rotation followed by translation, sensor frame to world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "PoseRecord", from = "PoseRecord")]
pub struct Pose {
    pub translation: Vec3,
    pub rotation: UnitQuaternion<f64>,
}

/// Serialized pose: translation and quaternion `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct PoseRecord {
    translation: [f64; 3],
    rotation_wxyz: [f64; 4],
}

impl From<Pose> for PoseRecord {
    fn from(p: Pose) -> Self {
        let q = p.rotation.quaternion();
        Self {
            translation: [p.translation.x, p.translation.y, p.translation.z],
            rotation_wxyz: [q.w, q.i, q.j, q.k],
        }
    }
}

impl From<PoseRecord> for Pose {
    fn from(r: PoseRecord) -> Self {
        let [w, x, y, z] = r.rotation_wxyz;
        Self {
            translation: Vec3::from(r.translation),
            rotation: UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z)),
        }
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            translation: Vec3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    /// Pose from position and roll/pitch/yaw in radians, ZYX intrinsic: `R = Rz(yaw) Ry(pitch) Rx(roll)`.
    ///
    /// Positive pitch tilts the sensor's +x axis downward.
    pub fn from_xyz_rpy(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            translation: Vec3::new(x, y, z),
            rotation: UnitQuaternion::from_euler_angles(roll, pitch, yaw),
        }
    }

    /// `(roll, pitch, yaw)` in radians.
    pub fn rpy(&self) -> (f64, f64, f64) {
        self.rotation.euler_angles()
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Linear translation, shortest-arc rotation interpolation.
    pub fn interpolate(&self, other: &Pose, alpha: f64) -> Pose {
        if self == other {
            return *self;
        }
        let a = self.rotation.quaternion().coords;
        let mut b = other.rotation.quaternion().coords;
        if a.dot(&b) < 0.0 {
            b = -b;
        }
        let dot = a.dot(&b).min(1.0);
        let theta = dot.acos();
        let coords = if theta < 1e-12 {
            a * (1.0 - alpha) + b * alpha
        } else {
            let s = theta.sin();
            a * (((1.0 - alpha) * theta).sin() / s) + b * ((alpha * theta).sin() / s)
        };
        Pose {
            translation: self.translation + (other.translation - self.translation) * alpha,
            rotation: UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(coords)),
        }
    }
}

/// Time-stamped sensor motion.
#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    /// One pose valid for all times.
    Static(Pose),
    /// Strictly time-sorted keyframes; queries must fall inside their span.
    Keyframes(Vec<(f64, Pose)>),
}

impl Trajectory {
    pub fn keyframes(keyframes: Vec<(f64, Pose)>) -> Result<Self, MotionError> {
        if keyframes.is_empty() {
            return Err(MotionError::EmptyTrajectory);
        }
        for (index, (t, p)) in keyframes.iter().enumerate() {
            let finite = t.is_finite()
                && p.translation.iter().all(|c| c.is_finite())
                && p.rotation.coords.iter().all(|c| c.is_finite());
            if !finite {
                return Err(MotionError::NonFiniteKeyframe { index });
            }
            if index > 0 && !(*t > keyframes[index - 1].0) {
                return Err(MotionError::UnsortedKeyframes { index });
            }
        }
        Ok(Trajectory::Keyframes(keyframes))
    }

    /// Constant-velocity straight line starting at `start` at time `t0`.
    pub fn linear(start: Pose, velocity: Vec3, t0: f64, t1: f64) -> Result<Self, MotionError> {
        let end = Pose {
            translation: start.translation + velocity * (t1 - t0),
            rotation: start.rotation,
        };
        Self::keyframes(vec![(t0, start), (t1, end)])
    }

    pub fn is_static(&self) -> bool {
        matches!(self, Trajectory::Static(_))
    }
}

/// Pose at time `t`; no extrapolation outside the keyframe span.
pub fn pose_at(trajectory: &Trajectory, t: f64) -> Result<Pose, MotionError> {
    let frames = match trajectory {
        Trajectory::Static(p) => return Ok(*p),
        Trajectory::Keyframes(k) => k,
    };
    let (start, end) = (frames[0].0, frames[frames.len() - 1].0);
    if !(t >= start && t <= end) {
        return Err(MotionError::OutsideCoverage { t, start, end });
    }
    let idx = frames.partition_point(|(kt, _)| *kt < t);
    let (t1, p1) = &frames[idx];
    if *t1 == t {
        return Ok(*p1);
    }
    let (t0, p0) = &frames[idx - 1];
    Ok(p0.interpolate(p1, (t - t0) / (t1 - t0)))
}

/// Distortion switches for one simulated frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionConfig {
    pub enabled: bool,
    pub subframes: u32,
    /// Resolve a pose per sample instead of per sub-frame (the `N -> inf` limit).
    pub per_point: bool,
}

impl Default for DistortionConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            subframes: 32,
            per_point: false,
        }
    }
}

impl DistortionConfig {
    pub fn off() -> Self {
        Self::default()
    }

    pub fn subframes(n: u32) -> Self {
        Self {
            enabled: true,
            subframes: n,
            per_point: false,
        }
    }

    pub fn per_point() -> Self {
        Self {
            enabled: true,
            subframes: 1,
            per_point: true,
        }
    }
}

/// A chronological slice of the pattern fired from one pose.
#[derive(Debug, Clone, PartialEq)]
pub struct SubframeBatch {
    pub index: usize,
    /// Pose time relative to frame start: the batch start `k T / N`.
    pub start_offset: f64,
    /// Indices into the pattern's sample list.
    pub samples: Range<usize>,
}

/// Splits a time-sorted pattern into `n` sub-frames of equal duration.
///
/// Samples whose `t_offset` lies within a relative `1e-9` of a batch boundary belong to the
/// later batch, so uniform schedules split evenly despite rounding.
pub fn partition_subframes(pattern: &BeamPattern, n: u32) -> Result<Vec<SubframeBatch>, MotionError> {
    if n == 0 {
        return Err(MotionError::InvalidSubframes);
    }
    let n = n as usize;
    let period = pattern.frame_period;
    let batch_of = |s: &BeamSample| -> usize {
        let x = s.t_offset / period * n as f64;
        ((x + 1e-9 * x.abs().max(1.0)).floor().max(0.0) as usize).min(n - 1)
    };
    let mut batches = Vec::with_capacity(n);
    let mut cursor = 0;
    for k in 0..n {
        let end = cursor + pattern.samples[cursor..].partition_point(|s| batch_of(s) <= k);
        batches.push(SubframeBatch {
            index: k,
            start_offset: period * k as f64 / n as f64,
            samples: cursor..end,
        });
        cursor = end;
    }
    Ok(batches)
}

/// Concatenates chronologically ordered sub-frame outputs into one frame.
pub fn accumulate_frame<T>(batches: Vec<Vec<T>>) -> Vec<T> {
    let total = batches.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(total);
    for b in batches {
        out.extend(b);
    }
    out
}
