//! Evaluate requests, shared by `lidarsim evaluate` and `POST /api/evaluate`.

use serde::{Deserialize, Serialize};

use lidarsim_core::io::{sample_intersection, to_json};
use lidarsim_core::metrics::{InfraLob, MetricsError, MetricsReport};
use lidarsim_core::presets::load_lidar_preset;
use lidarsim_core::scene::{Scene, SceneDescription, SemanticLabel};
use lidarsim_core::sensor::{LidarPoint, TimedPose};
use lidarsim_core::motion::Pose;
use lidarsim_core::sweep::{evaluate_sensors, EvalSettings, MetricParams, PlacementCandidate, SweepError};

pub const DEFAULT_PREVIEW_TARGET: usize = 5000;

/// The bundled scene, always addressable by this id.
pub const BUNDLED_SCENE_ID: &str = "intersection";

fn one() -> u32 {
    1
}
fn default_preview() -> usize {
    DEFAULT_PREVIEW_TARGET
}

/// A scene by id, or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneRef {
    Id(String),
    Inline(SceneDescription),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateRequest {
    /// Omitted: the scene the evaluator was started with.
    #[serde(default)]
    pub scene: Option<SceneRef>,
    pub candidate: PlacementCandidate,
    pub lob: InfraLob,
    #[serde(default)]
    pub metrics: MetricParams,
    #[serde(default = "one")]
    pub frames: u32,
    pub seed: u64,
    #[serde(default = "default_preview")]
    pub preview_target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrameInfo {
    pub preset: String,
    pub pose: Pose,
    pub frame_period: f64,
    /// Static mounts have no intra-frame motion, so this is empty unless the pose moves.
    pub subframe_poses: Vec<TimedPose>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preview {
    /// Points in the merged frame-0 cloud before downsampling.
    pub total_points: usize,
    pub positions: Vec<[f64; 3]>,
    pub labels: Vec<SemanticLabel>,
    pub ghost: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub seed: u64,
    pub candidate_id: String,
    pub report: MetricsReport,
    pub frames: u32,
    pub merged_points: usize,
    pub ghost_points: usize,
    pub sensors: Vec<SensorFrameInfo>,
    pub preview: Preview,
    pub warnings: Vec<String>,
}

impl EvaluateResponse {
    pub fn to_json(&self) -> String {
        to_json(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    /// Bad request contents; one entry per offending field.
    Validation(Vec<FieldError>),
    /// No qualifying points in the region of interest.
    UndefinedMetric(String),
    Internal(String),
}

impl std::fmt::Display for EvalError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalError::Validation(fields) => {
                write!(f, "invalid request:")?;
                for e in fields {
                    write!(f, " {}: {};", e.field, e.message)?;
                }
                Ok(())
            }
            EvalError::UndefinedMetric(m) | EvalError::Internal(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for EvalError {}

fn field(field: impl Into<String>, message: impl ToString) -> FieldError {
    FieldError {
        field: field.into(),
        message: message.to_string(),
    }
}

/// Strict parse with the JSON path of the first offending field.
pub fn parse_request(body: &[u8]) -> Result<EvaluateRequest, EvalError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "body".to_string() } else { path };
        EvalError::Validation(vec![field(path, e.into_inner())])
    })
}

/// The scene to evaluate against, given the evaluator's default.
pub enum SceneChoice<'a> {
    Default(&'a Scene),
    Owned(Scene),
}

impl SceneChoice<'_> {
    fn get(&self) -> &Scene {
        match self {
            SceneChoice::Default(s) => s,
            SceneChoice::Owned(s) => s,
        }
    }
}

/// Default scene plus the id it answers to.
pub struct SceneContext {
    pub id: String,
    pub scene: Scene,
}

impl SceneContext {
    pub fn bundled() -> Self {
        Self {
            id: BUNDLED_SCENE_ID.into(),
            scene: Scene::build(&sample_intersection()).expect("bundled scene builds"),
        }
    }

    fn resolve(&self, r: &Option<SceneRef>) -> Result<SceneChoice<'_>, FieldError> {
        match r {
            None => Ok(SceneChoice::Default(&self.scene)),
            Some(SceneRef::Id(id)) if *id == self.id => Ok(SceneChoice::Default(&self.scene)),
            Some(SceneRef::Id(id)) if id == BUNDLED_SCENE_ID => Ok(SceneChoice::Owned(
                Scene::build(&sample_intersection()).expect("bundled scene builds"),
            )),
            Some(SceneRef::Id(id)) => Err(field(
                "scene",
                format!("unknown scene id `{id}` (available: `{}`, `{BUNDLED_SCENE_ID}`)", self.id),
            )),
            Some(SceneRef::Inline(desc)) => Scene::build(desc).map(SceneChoice::Owned).map_err(|e| field("scene", e)),
        }
    }
}

/// First `target` points of an even stride through `points`, or all of them if fewer.
pub fn stride_downsample<T: Clone>(points: &[T], target: usize) -> Vec<T> {
    let n = points.len();
    if n <= target {
        return points.to_vec();
    }
    (0..target).map(|i| points[i * n / target].clone()).collect()
}

fn preview(cloud: &[LidarPoint], target: usize) -> Preview {
    let kept = stride_downsample(cloud, target);
    Preview {
        total_points: cloud.len(),
        positions: kept.iter().map(|p| p.position).collect(),
        labels: kept.iter().map(|p| p.label).collect(),
        ghost: kept.iter().map(|p| p.is_ghost).collect(),
    }
}

pub fn evaluate_request(ctx: &SceneContext, req: &EvaluateRequest) -> Result<EvaluateResponse, EvalError> {
    let mut errors = Vec::new();
    let scene = ctx.resolve(&req.scene).map_err(|e| errors.push(e)).ok();
    if req.candidate.sensors.is_empty() {
        errors.push(field("candidate.sensors", "at least one sensor is required"));
    }
    let mut sensors = Vec::new();
    for (i, s) in req.candidate.sensors.iter().enumerate() {
        let p = &s.pose;
        if ![p.x, p.y, p.z, p.roll, p.pitch, p.yaw].iter().all(|v| v.is_finite()) {
            errors.push(field(format!("candidate.sensors[{i}].pose"), "all pose values must be finite"));
        }
        match load_lidar_preset(&s.preset) {
            Ok(m) => sensors.push((m, s.pose.to_pose())),
            Err(e) => errors.push(field(format!("candidate.sensors[{i}].preset"), e)),
        }
    }
    if let Err(e) = req.lob.validate() {
        errors.push(field("lob", e));
    } else if let Err(e) = req.metrics.to_config(req.seed).nuc.validate(&req.lob) {
        errors.push(field("metrics", e));
    }
    if req.frames == 0 {
        errors.push(field("frames", "must be at least 1"));
    }
    if !errors.is_empty() {
        return Err(EvalError::Validation(errors));
    }
    let scene = scene.expect("resolved when there are no errors");
    let settings = EvalSettings {
        lob: req.lob,
        metrics: req.metrics.clone(),
        frames: req.frames,
    };
    let eval = evaluate_sensors(scene.get(), &req.candidate.id, &sensors, &settings, req.seed).map_err(|e| match e {
        SweepError::Metrics(MetricsError::UndefinedMetric) => EvalError::UndefinedMetric(e.to_string()),
        SweepError::Spec(m) => EvalError::Validation(vec![field("candidate", m)]),
        other => EvalError::Internal(other.to_string()),
    })?;
    let report = eval.report;
    let Some(metrics) = report.metrics else {
        return Err(EvalError::UndefinedMetric(MetricsError::UndefinedMetric.to_string()));
    };
    Ok(EvaluateResponse {
        seed: req.seed,
        candidate_id: req.candidate.id.clone(),
        report: metrics,
        frames: report.frames,
        merged_points: report.merged_points,
        ghost_points: report.ghost_points,
        sensors: req
            .candidate
            .sensors
            .iter()
            .zip(&sensors)
            .map(|(s, (m, pose))| SensorFrameInfo {
                preset: s.preset.clone(),
                pose: *pose,
                frame_period: m.frame_period(),
                subframe_poses: Vec::new(),
            })
            .collect(),
        preview: preview(&eval.cloud, req.preview_target),
        warnings: report.warnings,
    })
}
