//! LiDAR point-cloud simulation and infrastructure sensor placement evaluation.
//!
//! The crate is organised bottom-up:
//!
//! * [`scene`] holds immutable triangle geometry with materials and a BVH for ray queries.
//! * [`beam`] generates per-frame emission schedules for surround, MEMS (Lissajous) and
//!   Risley-prism scanners, or adopts vendor tables verbatim.
//! * [`motion`] interpolates sensor poses and splits a frame into chronological sub-frames.
//! * [`ghost`] resolves specular hits into real points, mirror ghosts or dropouts.
//! * [`sensor`] assembles a [`sensor::PointCloudFrame`] from the pieces above.
//! * [`metrics`] computes InfraD and InfraNUC over a ground-plane region of interest.
//! * [`sweep`] enumerates, evaluates and ranks placement candidates.
//! * [`io`] and [`presets`] handle every file format and the built-in LiDAR catalog.

pub mod beam;
pub mod ghost;
pub mod io;
pub mod metrics;
pub mod motion;
pub mod presets;
mod rng;
pub mod scene;
pub mod sensor;
pub mod sweep;

pub use nalgebra::{UnitQuaternion, Vector3};

/// 3-vector in meters, used for positions and directions throughout the crate.
pub type Vec3 = Vector3<f64>;

pub use rng::BeamRng;
