//! Placement candidates: enumeration, evaluation on a static scene, and ranking.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{compute_metrics, points_in_lob, InfraLob, LabelFilter, MetricConfig, MetricsError, MetricsReport, NucParams};
use crate::motion::{DistortionConfig, Pose, Trajectory};
use crate::presets::{load_lidar_preset, PresetError};
use crate::rng::sensor_seed;
use crate::scene::{Scene, SceneError};
use crate::sensor::{simulate_frame, LidarModel, LidarPoint, SimError, SimOptions};
use crate::Vec3;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    Spec(String),
    #[error(transparent)]
    Preset(#[from] PresetError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Mounting pose in the world frame; angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl SensorPose {
    pub fn to_pose(&self) -> Pose {
        Pose::from_xyz_rpy(self.x, self.y, self.z, self.roll, self.pitch, self.yaw)
    }

    fn is_finite(&self) -> bool {
        [self.x, self.y, self.z, self.roll, self.pitch, self.yaw]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorPlacement {
    pub preset: String,
    pub pose: SensorPose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementCandidate {
    pub id: String,
    pub sensors: Vec<SensorPlacement>,
}

impl PlacementCandidate {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.sensors.is_empty() {
            return Err(SweepError::Spec(format!("candidate `{}` has no sensors", self.id)));
        }
        if let Some(i) = self.sensors.iter().position(|s| !s.pose.is_finite()) {
            return Err(SweepError::Spec(format!(
                "candidate `{}` sensor {i} has a non-finite pose",
                self.id
            )));
        }
        Ok(())
    }
}

fn default_disks() -> usize {
    crate::metrics::DEFAULT_DISKS
}
fn default_disk_ratio() -> f64 {
    crate::metrics::DEFAULT_DISK_RATIO
}
fn default_density_labels() -> LabelFilter {
    LabelFilter::All
}
fn default_uniformity_labels() -> LabelFilter {
    LabelFilter::road()
}
fn one() -> u32 {
    1
}

/// Metric knobs without the seed; the evaluation seed also keys the disk sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricParams {
    #[serde(default = "default_disks")]
    pub disks: usize,
    #[serde(default = "default_disk_ratio")]
    pub disk_ratio: f64,
    #[serde(default = "default_density_labels")]
    pub density_labels: LabelFilter,
    #[serde(default = "default_uniformity_labels")]
    pub uniformity_labels: LabelFilter,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            disks: default_disks(),
            disk_ratio: default_disk_ratio(),
            density_labels: default_density_labels(),
            uniformity_labels: default_uniformity_labels(),
        }
    }
}

impl MetricParams {
    pub fn to_config(&self, seed: u64) -> MetricConfig {
        MetricConfig {
            nuc: NucParams {
                disks: self.disks,
                disk_ratio: self.disk_ratio,
                seed,
            },
            density_labels: self.density_labels.clone(),
            uniformity_labels: self.uniformity_labels.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub density: f64,
    pub uniformity: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            density: 1.0,
            uniformity: 1.0,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<(), SweepError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if ok(self.density) && ok(self.uniformity) {
            Ok(())
        } else {
            Err(SweepError::Spec("weights must be finite and non-negative".into()))
        }
    }
}

impl std::str::FromStr for Weights {
    type Err = String;
    /// `w_d,w_u`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [d, u] = parts.as_slice() else {
            return Err(format!("expected `w_d,w_u`, got `{s}`"));
        };
        let parse = |t: &str| t.parse::<f64>().map_err(|_| format!("bad weight `{t}`"));
        Ok(Weights {
            density: parse(d)?,
            uniformity: parse(u)?,
        })
    }
}

/// One mounting location of a grid sweep with its candidate angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAnchor {
    pub preset: String,
    pub position: [f64; 3],
    pub roll: Vec<f64>,
    pub pitch: Vec<f64>,
    pub yaw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementGrid {
    pub anchors: Vec<GridAnchor>,
    /// Numbers of simultaneously mounted anchors.
    pub sensor_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    Candidates(Vec<PlacementCandidate>),
    Grid(PlacementGrid),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub lob: InfraLob,
    #[serde(default)]
    pub metrics: MetricParams,
    #[serde(default = "one")]
    pub frames: u32,
    #[serde(default)]
    pub weights: Weights,
    #[serde(flatten)]
    pub source: CandidateSource,
}

fn dedup_values(what: &str, values: &[f64], warnings: &mut Vec<String>) -> Result<Vec<f64>, SweepError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SweepError::Spec(format!("{what} contains a non-finite value")));
    }
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        if out.contains(&v) {
            warnings.push(format!("{what}: duplicate value {v} ignored"));
        } else {
            out.push(v);
        }
    }
    Ok(out)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k == 0 || k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Candidate list in lexicographic grid order, plus any deduplication warnings.
///
/// Grid order: sensor count ascending, then anchor combination, then for each chosen
/// anchor in turn its (roll, pitch, yaw) indices, the last anchor's yaw varying fastest.
pub fn enumerate_candidates(source: &CandidateSource) -> Result<(Vec<PlacementCandidate>, Vec<String>), SweepError> {
    let mut warnings = Vec::new();
    let candidates = match source {
        CandidateSource::Candidates(list) => {
            let mut seen = std::collections::BTreeSet::new();
            for c in list {
                c.validate()?;
                if !seen.insert(c.id.as_str()) {
                    return Err(SweepError::Spec(format!("duplicate candidate id `{}`", c.id)));
                }
            }
            list.clone()
        }
        CandidateSource::Grid(grid) => enumerate_grid(grid, &mut warnings)?,
    };
    if candidates.is_empty() {
        return Err(SweepError::Spec("the sweep produces no candidates".into()));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((candidates, warnings))
}

fn enumerate_grid(grid: &PlacementGrid, warnings: &mut Vec<String>) -> Result<Vec<PlacementCandidate>, SweepError> {
    let mut anchors: Vec<(String, [f64; 3], Vec<[f64; 3]>)> = Vec::new();
    for (i, a) in grid.anchors.iter().enumerate() {
        if a.position.iter().any(|v| !v.is_finite()) {
            return Err(SweepError::Spec(format!("anchor {i} has a non-finite position")));
        }
        if anchors.iter().any(|(p, pos, _)| *p == a.preset && *pos == a.position) {
            warnings.push(format!("anchor {i}: duplicate of an earlier anchor, ignored"));
            continue;
        }
        let roll = dedup_values(&format!("anchor {i} roll"), &a.roll, warnings)?;
        let pitch = dedup_values(&format!("anchor {i} pitch"), &a.pitch, warnings)?;
        let yaw = dedup_values(&format!("anchor {i} yaw"), &a.yaw, warnings)?;
        let mut orientations = Vec::new();
        for &r in &roll {
            for &p in &pitch {
                for &y in &yaw {
                    orientations.push([r, p, y]);
                }
            }
        }
        if orientations.is_empty() {
            return Err(SweepError::Spec(format!("anchor {i} has an empty angle list")));
        }
        anchors.push((a.preset.clone(), a.position, orientations));
    }
    let mut counts = Vec::new();
    for &k in &grid.sensor_counts {
        if k == 0 || k > anchors.len() {
            return Err(SweepError::Spec(format!(
                "sensor count {k} is outside 1..={} anchors",
                anchors.len()
            )));
        }
        if counts.contains(&k) {
            warnings.push(format!("sensor_counts: duplicate value {k} ignored"));
        } else {
            counts.push(k);
        }
    }
    counts.sort_unstable();

    let mut out = Vec::new();
    for &k in &counts {
        for combo in combinations(anchors.len(), k) {
            let sizes: Vec<usize> = combo.iter().map(|&a| anchors[a].2.len()).collect();
            let mut choice = vec![0usize; k];
            'odometer: loop {
                let sensors = combo
                    .iter()
                    .zip(&choice)
                    .map(|(&a, &o)| {
                        let (preset, pos, angles) = &anchors[a];
                        let [roll, pitch, yaw] = angles[o];
                        SensorPlacement {
                            preset: preset.clone(),
                            pose: SensorPose {
                                x: pos[0],
                                y: pos[1],
                                z: pos[2],
                                roll,
                                pitch,
                                yaw,
                            },
                        }
                    })
                    .collect();
                out.push(PlacementCandidate {
                    id: String::new(),
                    sensors,
                });
                for d in (0..k).rev() {
                    choice[d] += 1;
                    if choice[d] < sizes[d] {
                        continue 'odometer;
                    }
                    choice[d] = 0;
                }
                break;
            }
        }
    }
    let width = (out.len().saturating_sub(1)).to_string().len().max(4);
    for (i, c) in out.iter_mut().enumerate() {
        c.id = format!("c{i:0width$}");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub lob: InfraLob,
    pub metrics: MetricParams,
    pub frames: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub point_count: usize,
    pub infra_d: f64,
    /// `None` when no uniformity-labelled point falls in the region.
    pub infra_nuc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementReport {
    pub candidate_id: String,
    pub seed: u64,
    pub frames: u32,
    pub sensor_count: usize,
    /// Points in the merged frame-0 cloud, anywhere in the scene.
    pub merged_points: usize,
    pub ghost_points: usize,
    /// Mean over frames.
    pub infra_d: f64,
    /// Mean over frames; `None` if undefined in any frame.
    pub infra_nuc: Option<f64>,
    /// Frame-0 report with `infra_d`, `infra_nuc` and `avg` replaced by their frame means.
    pub metrics: Option<MetricsReport>,
    pub per_frame: Vec<FrameMetrics>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct PlacementEvaluation {
    pub report: PlacementReport,
    /// Merged world-frame cloud of frame 0.
    pub cloud: Vec<LidarPoint>,
}

/// Legal but suspicious mounting positions: below all geometry, or enclosed by it.
pub fn pose_warnings(scene: &Scene, index: usize, pose: &Pose) -> Result<Vec<String>, SceneError> {
    let mut out = Vec::new();
    let p = pose.translation;
    if let Some(b) = scene.bounds() {
        if p.z < b.min.z {
            out.push(format!("sensor {index} is below all scene geometry (z = {})", p.z));
            return Ok(out);
        }
    }
    let crossings = scene.count_crossings(&p, &Vec3::z())?;
    if crossings % 2 == 1 {
        out.push(format!(
            "sensor {index} appears to be inside geometry or below ground ({crossings} surfaces above it)"
        ));
    }
    Ok(out)
}

/// Simulates every sensor for `frames` static frames, merges in the world frame and
/// scores the union. Sensor `i` uses a seed derived from `(seed, i)`.
pub fn evaluate_sensors(
    scene: &Scene,
    candidate_id: &str,
    sensors: &[(LidarModel, Pose)],
    settings: &EvalSettings,
    seed: u64,
) -> Result<PlacementEvaluation, SweepError> {
    if sensors.is_empty() {
        return Err(SweepError::Spec(format!("candidate `{candidate_id}` has no sensors")));
    }
    if settings.frames == 0 {
        return Err(SweepError::Spec("frames must be at least 1".into()));
    }
    let config = settings.metrics.to_config(seed);
    config.nuc.validate(&settings.lob)?;
    let mut warnings = Vec::new();
    for (i, (_, pose)) in sensors.iter().enumerate() {
        warnings.extend(pose_warnings(scene, i, pose)?);
    }
    for w in &warnings {
        log::warn!("{candidate_id}: {w}");
    }
    let options = SimOptions {
        distortion: DistortionConfig::off(),
        ..SimOptions::default()
    };
    let trajectories: Vec<Trajectory> = sensors.iter().map(|(_, p)| Trajectory::Static(*p)).collect();

    let mut per_frame = Vec::new();
    let mut reports: Vec<Option<MetricsReport>> = Vec::new();
    let mut first_cloud = Vec::new();
    for frame in 0..settings.frames as u64 {
        let mut cloud = Vec::new();
        for (i, ((model, _), traj)) in sensors.iter().zip(&trajectories).enumerate() {
            let f = simulate_frame(scene, model, traj, frame, &options, sensor_seed(seed, i as u64))?;
            cloud.extend(f.to_world());
        }
        let report = match compute_metrics(&cloud, &settings.lob, &config) {
            Ok(r) => Some(r),
            Err(MetricsError::UndefinedMetric) => None,
            Err(e) => return Err(e.into()),
        };
        let point_count = match &report {
            Some(r) => r.point_count,
            None => points_in_lob(&cloud, &settings.lob, &config.density_labels).len(),
        };
        per_frame.push(FrameMetrics {
            point_count,
            infra_d: crate::metrics::infra_density(point_count, &settings.lob),
            infra_nuc: report.as_ref().map(|r| r.infra_nuc),
        });
        reports.push(report);
        if frame == 0 {
            first_cloud = cloud;
        }
    }

    let n = per_frame.len() as f64;
    let infra_d = per_frame.iter().map(|f| f.infra_d).sum::<f64>() / n;
    let defined = reports.iter().all(Option::is_some);
    let infra_nuc = defined.then(|| per_frame.iter().filter_map(|f| f.infra_nuc).sum::<f64>() / n);
    let metrics = if defined {
        let avg = reports.iter().flatten().map(|r| r.avg).sum::<f64>() / n;
        reports[0].clone().map(|mut r| {
            r.infra_d = infra_d;
            r.infra_nuc = infra_nuc.expect("defined");
            r.avg = avg;
            r
        })
    } else {
        None
    };
    Ok(PlacementEvaluation {
        report: PlacementReport {
            candidate_id: candidate_id.to_string(),
            seed,
            frames: settings.frames,
            sensor_count: sensors.len(),
            merged_points: first_cloud.len(),
            ghost_points: first_cloud.iter().filter(|p| p.is_ghost).count(),
            infra_d,
            infra_nuc,
            metrics,
            per_frame,
            warnings,
        },
        cloud: first_cloud,
    })
}

/// Resolves each distinct preset id once.
pub fn resolve_presets<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<BTreeMap<String, LidarModel>, SweepError> {
    let mut out = BTreeMap::new();
    for id in ids {
        if !out.contains_key(id) {
            out.insert(id.to_string(), load_lidar_preset(id)?);
        }
    }
    Ok(out)
}

pub fn evaluate_placement(
    scene: &Scene,
    candidate: &PlacementCandidate,
    settings: &EvalSettings,
    seed: u64,
) -> Result<PlacementEvaluation, SweepError> {
    candidate.validate()?;
    let models = resolve_presets(candidate.sensors.iter().map(|s| s.preset.as_str()))?;
    evaluate_with(scene, candidate, &models, settings, seed)
}

fn evaluate_with(
    scene: &Scene,
    candidate: &PlacementCandidate,
    models: &BTreeMap<String, LidarModel>,
    settings: &EvalSettings,
    seed: u64,
) -> Result<PlacementEvaluation, SweepError> {
    let sensors: Vec<(LidarModel, Pose)> = candidate
        .sensors
        .iter()
        .map(|s| (models[&s.preset].clone(), s.pose.to_pose()))
        .collect();
    evaluate_sensors(scene, &candidate.id, &sensors, settings, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankInput {
    pub candidate_id: String,
    pub infra_d: f64,
    pub infra_nuc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub candidate_id: String,
    pub infra_d: f64,
    pub infra_nuc: Option<f64>,
    pub score: f64,
    pub rank: usize,
}

/// `score = w_d D / max D - w_u NUC / max NUC`, best first, ties by id.
///
/// A normalizer that is zero contributes nothing. An undefined InfraNUC takes the largest
/// penalty, as though it equalled the maximum.
pub fn rank_placements(inputs: &[RankInput], weights: &Weights) -> Result<Vec<RankedEntry>, SweepError> {
    if inputs.is_empty() {
        return Err(SweepError::Spec("nothing to rank".into()));
    }
    weights.validate()?;
    let max_d = inputs.iter().map(|r| r.infra_d).fold(0.0, f64::max);
    let max_u = inputs.iter().filter_map(|r| r.infra_nuc).fold(0.0, f64::max);
    let mut out: Vec<RankedEntry> = inputs
        .iter()
        .map(|r| {
            let d = if max_d > 0.0 { r.infra_d / max_d } else { 0.0 };
            let u = match r.infra_nuc {
                Some(v) if max_u > 0.0 => v / max_u,
                Some(_) => 0.0,
                None => 1.0,
            };
            RankedEntry {
                candidate_id: r.candidate_id.clone(),
                infra_d: r.infra_d,
                infra_nuc: r.infra_nuc,
                score: weights.density * d - weights.uniformity * u,
                rank: 0,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.candidate_id.cmp(&b.candidate_id))
    });
    for (i, e) in out.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    Ok(out)
}

pub const LEADERBOARD_HEADER: &str = "candidate_id,InfraD,InfraNUC,score,rank";

/// Leaderboard in rank order; an undefined InfraNUC is an empty field.
pub fn leaderboard_csv(entries: &[RankedEntry]) -> String {
    let mut s = String::from(LEADERBOARD_HEADER);
    s.push('\n');
    for e in entries {
        let nuc = e.infra_nuc.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{},{}\n", e.candidate_id, e.infra_d, nuc, e.score, e.rank));
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub seed: u64,
    pub weights: Weights,
    pub lob: InfraLob,
    pub candidates: Vec<PlacementCandidate>,
    /// Indexed like `candidates`.
    pub reports: Vec<PlacementReport>,
    pub leaderboard: Vec<RankedEntry>,
    pub warnings: Vec<String>,
}

/// Enumerates, evaluates in parallel and ranks. Output depends only on the inputs and seed.
pub fn run_sweep(scene: &Scene, spec: &SweepSpec, seed: u64) -> Result<SweepResult, SweepError> {
    spec.weights.validate()?;
    let (candidates, warnings) = enumerate_candidates(&spec.source)?;
    let models = resolve_presets(candidates.iter().flat_map(|c| c.sensors.iter().map(|s| s.preset.as_str())))?;
    let settings = EvalSettings {
        lob: spec.lob,
        metrics: spec.metrics.clone(),
        frames: spec.frames,
    };
    settings.metrics.to_config(seed).nuc.validate(&spec.lob)?;
    let reports: Result<Vec<PlacementReport>, SweepError> = candidates
        .par_iter()
        .map(|c| evaluate_with(scene, c, &models, &settings, seed).map(|e| e.report))
        .collect();
    let reports = reports?;
    let inputs: Vec<RankInput> = reports
        .iter()
        .map(|r| RankInput {
            candidate_id: r.candidate_id.clone(),
            infra_d: r.infra_d,
            infra_nuc: r.infra_nuc,
        })
        .collect();
    let leaderboard = rank_placements(&inputs, &spec.weights)?;
    Ok(SweepResult {
        seed,
        weights: spec.weights,
        lob: spec.lob,
        candidates,
        reports,
        leaderboard,
        warnings,
    })
}
