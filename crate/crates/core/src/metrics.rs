//! Density (InfraD) and uniformity (InfraNUC) of a world-frame cloud inside an InfraLOB.
//!
//! InfraD is the point count per square meter of the region. InfraNUC samples `D` equal
//! disks, each covering a fraction `p` of the region, and takes the standard deviation of
//! the normalised counts `n_i / (N p)`; a perfectly uniform cloud scores 0.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_rng, Stream};
use crate::scene::SemanticLabel;
use crate::sensor::LidarPoint;

pub const DEFAULT_DISKS: usize = 100;
pub const DEFAULT_DISK_RATIO: f64 = 0.005;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("invalid region of interest: {0}")]
    InvalidLob(String),
    #[error("invalid disk parameters: {0}")]
    InvalidParams(String),
    #[error("InfraNUC is undefined: no points inside the region of interest")]
    UndefinedMetric,
}

/// Rectangular region of interest on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfraLob {
    pub center: [f64; 2],
    pub half_extents: [f64; 2],
    pub yaw: f64,
    pub z_band: [f64; 2],
}

impl InfraLob {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let finite = self
            .center
            .iter()
            .chain(&self.half_extents)
            .chain(&self.z_band)
            .chain(std::iter::once(&self.yaw))
            .all(|v| v.is_finite());
        if !finite {
            return Err(MetricsError::InvalidLob("non-finite value".into()));
        }
        if !(self.half_extents[0] > 0.0 && self.half_extents[1] > 0.0) {
            return Err(MetricsError::InvalidLob("half_extents must be positive".into()));
        }
        if !(self.z_band[0] < self.z_band[1]) {
            return Err(MetricsError::InvalidLob("z_band must satisfy z_lo < z_hi".into()));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_extents[0] * self.half_extents[1]
    }

    /// World `(x, y)` to region-local coordinates.
    pub fn to_local(&self, x: f64, y: f64) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        [c * dx + s * dy, -s * dx + c * dy]
    }

    pub fn to_world(&self, local: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        [
            self.center[0] + c * local[0] - s * local[1],
            self.center[1] + s * local[0] + c * local[1],
        ]
    }

    /// Closed rectangle and closed z band.
    pub fn contains(&self, p: &[f64; 3]) -> bool {
        if p[2] < self.z_band[0] || p[2] > self.z_band[1] {
            return false;
        }
        let [lx, ly] = self.to_local(p[0], p[1]);
        lx.abs() <= self.half_extents[0] && ly.abs() <= self.half_extents[1]
    }
}

/// Which semantic labels a metric counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelFilter {
    All,
    Only(Vec<SemanticLabel>),
}

impl LabelFilter {
    pub fn road() -> Self {
        LabelFilter::Only(vec![SemanticLabel::Road])
    }

    pub fn accepts(&self, label: SemanticLabel) -> bool {
        match self {
            LabelFilter::All => true,
            LabelFilter::Only(labels) => labels.contains(&label),
        }
    }

    /// Parses `all` or a comma-separated label list.
    pub fn parse(text: &str) -> Result<Self, String> {
        if text.trim() == "all" {
            return Ok(LabelFilter::All);
        }
        text.split(',')
            .map(|s| SemanticLabel::parse(s.trim()).ok_or_else(|| format!("unknown label `{}`", s.trim())))
            .collect::<Result<Vec<_>, _>>()
            .map(LabelFilter::Only)
    }
}

impl Serialize for LabelFilter {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            LabelFilter::All => s.serialize_str("all"),
            LabelFilter::Only(labels) => labels.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for LabelFilter {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Word(String),
            List(Vec<SemanticLabel>),
        }
        match Repr::deserialize(d)? {
            Repr::Word(w) if w == "all" => Ok(LabelFilter::All),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "expected \"all\" or a list of labels, got \"{w}\""
            ))),
            Repr::List(l) => Ok(LabelFilter::Only(l)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NucParams {
    pub disks: usize,
    pub disk_ratio: f64,
    pub seed: u64,
}

impl Default for NucParams {
    fn default() -> Self {
        Self {
            disks: DEFAULT_DISKS,
            disk_ratio: DEFAULT_DISK_RATIO,
            seed: 0,
        }
    }
}

impl NucParams {
    pub fn disk_radius(&self, lob: &InfraLob) -> f64 {
        (self.disk_ratio * lob.area() / std::f64::consts::PI).sqrt()
    }

    pub fn validate(&self, lob: &InfraLob) -> Result<(), MetricsError> {
        lob.validate()?;
        if self.disks < 2 {
            return Err(MetricsError::InvalidParams("at least 2 disks are required".into()));
        }
        if !(self.disk_ratio > 0.0 && self.disk_ratio < 1.0) {
            return Err(MetricsError::InvalidParams("disk_ratio must lie in (0, 1)".into()));
        }
        let r = self.disk_radius(lob);
        let fit = lob.half_extents[0].min(lob.half_extents[1]);
        if r > fit {
            return Err(MetricsError::InvalidParams(format!(
                "disk radius {r} m does not fit in the region (min half extent {fit} m)"
            )));
        }
        Ok(())
    }

    /// Disk centers in region-local coordinates, uniform over the region inset by the radius.
    pub fn local_disk_centers(&self, lob: &InfraLob) -> Result<Vec<[f64; 2]>, MetricsError> {
        self.validate(lob)?;
        let r = self.disk_radius(lob);
        let (ax, ay) = (lob.half_extents[0] - r, lob.half_extents[1] - r);
        let mut rng = stream_rng(self.seed, Stream::Disks);
        Ok((0..self.disks)
            .map(|_| {
                let u: f64 = rng.random();
                let v: f64 = rng.random();
                [(2.0 * u - 1.0) * ax, (2.0 * v - 1.0) * ay]
            })
            .collect())
    }

    /// Disk centers in world `(x, y)`.
    pub fn disk_centers(&self, lob: &InfraLob) -> Result<Vec<[f64; 2]>, MetricsError> {
        Ok(self
            .local_disk_centers(lob)?
            .into_iter()
            .map(|c| lob.to_world(c))
            .collect())
    }
}

/// Per-metric label filters and disk parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub nuc: NucParams,
    pub density_labels: LabelFilter,
    pub uniformity_labels: LabelFilter,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            nuc: NucParams::default(),
            density_labels: LabelFilter::All,
            uniformity_labels: LabelFilter::road(),
        }
    }
}

pub fn points_in_lob(cloud: &[LidarPoint], lob: &InfraLob, labels: &LabelFilter) -> Vec<LidarPoint> {
    cloud
        .iter()
        .filter(|p| labels.accepts(p.label) && lob.contains(&p.position))
        .copied()
        .collect()
}

pub fn infra_density(count: usize, lob: &InfraLob) -> f64 {
    count as f64 / lob.area()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NucResult {
    pub infra_nuc: f64,
    pub avg: f64,
    pub disk_counts: Vec<usize>,
    pub disk_radius: f64,
}

/// InfraNUC of the points in `subset`, which must already be restricted to the region.
pub fn infra_nuc(subset: &[LidarPoint], lob: &InfraLob, params: &NucParams) -> Result<NucResult, MetricsError> {
    let centers = params.local_disk_centers(lob)?;
    let n = subset.len();
    if n == 0 {
        return Err(MetricsError::UndefinedMetric);
    }
    let r = params.disk_radius(lob);
    let r2 = r * r;
    let local: Vec<[f64; 2]> = subset.iter().map(|p| lob.to_local(p.position[0], p.position[1])).collect();
    let disk_counts: Vec<usize> = centers
        .par_iter()
        .map(|c| {
            local
                .iter()
                .filter(|q| (q[0] - c[0]).powi(2) + (q[1] - c[1]).powi(2) <= r2)
                .count()
        })
        .collect();
    // Share of N first: exact integer ratios keep duplicated clouds bit-identical.
    let d = params.disks as f64;
    let normalized: Vec<f64> = disk_counts
        .iter()
        .map(|&c| (c as f64 / n as f64) / params.disk_ratio)
        .collect();
    let avg = normalized.iter().sum::<f64>() / d;
    let var = normalized.iter().map(|x| (x - avg).powi(2)).sum::<f64>() / d;
    Ok(NucResult {
        infra_nuc: var.sqrt(),
        avg,
        disk_counts,
        disk_radius: r,
    })
}

/// Everything computed for one cloud, with the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Points counted for InfraD.
    pub point_count: usize,
    /// Points counted for InfraNUC.
    pub nuc_point_count: usize,
    pub area: f64,
    pub infra_d: f64,
    pub infra_nuc: f64,
    pub avg: f64,
    pub disk_counts: Vec<usize>,
    pub disk_radius: f64,
    pub lob: InfraLob,
    pub config: MetricConfig,
}

pub fn compute_metrics(cloud: &[LidarPoint], lob: &InfraLob, config: &MetricConfig) -> Result<MetricsReport, MetricsError> {
    config.nuc.validate(lob)?;
    let dense = points_in_lob(cloud, lob, &config.density_labels);
    let uniform = if config.uniformity_labels == config.density_labels {
        dense.clone()
    } else {
        points_in_lob(cloud, lob, &config.uniformity_labels)
    };
    let nuc = infra_nuc(&uniform, lob, &config.nuc)?;
    Ok(MetricsReport {
        point_count: dense.len(),
        nuc_point_count: uniform.len(),
        area: lob.area(),
        infra_d: infra_density(dense.len(), lob),
        infra_nuc: nuc.infra_nuc,
        avg: nuc.avg,
        disk_counts: nuc.disk_counts,
        disk_radius: nuc.disk_radius,
        lob: *lob,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(x: f64, y: f64, z: f64) -> LidarPoint {
        LidarPoint {
            position: [x, y, z],
            intensity: 0.5,
            timestamp: 0.0,
            label: SemanticLabel::Road,
            is_ghost: false,
            channel: 0,
        }
    }

    fn square(half: f64) -> InfraLob {
        InfraLob {
            center: [0.0, 0.0],
            half_extents: [half, half],
            yaw: 0.0,
            z_band: [0.0, 1.0],
        }
    }

    #[test]
    fn inclusion_examples() {
        let lob = square(5.0);
        assert!(points_in_lob(&[], &lob, &LabelFilter::All).is_empty());
        assert!(lob.contains(&[4.0, 4.0, 0.1]));
        assert!(!lob.contains(&[6.0, 0.0, 0.1]));
        assert!(!lob.contains(&[0.0, 0.0, 1.5]));
        let mut car = pt(1.0, 1.0, 0.5);
        car.label = SemanticLabel::Vehicle;
        assert!(points_in_lob(&[car], &lob, &LabelFilter::road()).is_empty());
        assert_eq!(points_in_lob(&[car], &lob, &LabelFilter::All).len(), 1);
    }

    #[test]
    fn yawed_inclusion_matches_brute_force() {
        let lob = InfraLob {
            center: [3.0, -2.0],
            half_extents: [6.0, 2.5],
            yaw: std::f64::consts::FRAC_PI_4,
            z_band: [-1.0, 1.0],
        };
        // Oracle: the rectangle's corners and a half-plane test per edge.
        let (s, c) = lob.yaw.sin_cos();
        let ax = [c, s];
        let ay = [-s, c];
        let corner = |sx: f64, sy: f64| {
            [
                lob.center[0] + sx * lob.half_extents[0] * ax[0] + sy * lob.half_extents[1] * ay[0],
                lob.center[1] + sx * lob.half_extents[0] * ax[1] + sy * lob.half_extents[1] * ay[1],
            ]
        };
        let poly = [corner(-1.0, -1.0), corner(1.0, -1.0), corner(1.0, 1.0), corner(-1.0, 1.0)];
        let inside = |x: f64, y: f64| {
            (0..4).all(|i| {
                let (p, q) = (poly[i], poly[(i + 1) % 4]);
                (q[0] - p[0]) * (y - p[1]) - (q[1] - p[1]) * (x - p[0]) >= 0.0
            })
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cloud: Vec<LidarPoint> = (0..1000)
            .map(|_| pt(rng.random_range(-6.0..12.0), rng.random_range(-11.0..7.0), 0.0))
            .collect();
        let got = points_in_lob(&cloud, &lob, &LabelFilter::All);
        let want: Vec<LidarPoint> = cloud.iter().filter(|p| inside(p.position[0], p.position[1])).copied().collect();
        assert!(want.len() > 100);
        assert_eq!(got, want);
    }

    #[test]
    fn density_examples() {
        let lob = square(5.0);
        assert_eq!(infra_density(0, &lob), 0.0);
        assert_eq!(infra_density(500, &lob), 5.0);
        assert_eq!(infra_density(1000, &lob), 2.0 * infra_density(500, &lob));
    }

    /// A location covered by disk `i` only.
    fn exclusive_point(centers: &[[f64; 2]], r: f64, i: usize) -> [f64; 2] {
        let c = centers[i];
        for k in 0..2000 {
            let a = k as f64 * 2.399963;
            let rho = r * 0.98 * ((k % 100) as f64 / 100.0).sqrt();
            let q = [c[0] + rho * a.cos(), c[1] + rho * a.sin()];
            let covering = centers
                .iter()
                .filter(|o| (q[0] - o[0]).powi(2) + (q[1] - o[1]).powi(2) <= r * r)
                .count();
            if covering == 1 {
                return q;
            }
        }
        panic!("disk {i} has no exclusive area");
    }

    #[test]
    fn single_disk_concentration_closed_form() {
        let lob = square(50.0);
        let params = NucParams {
            disks: 100,
            disk_ratio: 0.01,
            seed: 11,
        };
        let centers = params.local_disk_centers(&lob).unwrap();
        let r = params.disk_radius(&lob);
        let (idx, q) = (0..100)
            .find_map(|i| std::panic::catch_unwind(|| exclusive_point(&centers, r, i)).ok().map(|q| (i, q)))
            .unwrap();
        let cloud: Vec<LidarPoint> = (0..400).map(|_| pt(q[0], q[1], 0.5)).collect();
        let res = infra_nuc(&cloud, &lob, &params).unwrap();
        assert_eq!(res.disk_counts[idx], 400);
        assert_eq!(res.disk_counts.iter().sum::<usize>(), 400);
        // Direct summation of the definition.
        let (d, p, n) = (100.0, 0.01, 400.0);
        let terms: Vec<f64> = res.disk_counts.iter().map(|&c| c as f64 / (n * p)).collect();
        let avg = terms.iter().sum::<f64>() / d;
        let direct = (terms.iter().map(|t| (t - avg).powi(2)).sum::<f64>() / d).sqrt();
        assert!((res.infra_nuc - direct).abs() < 1e-12);
        assert!((res.infra_nuc - 99f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn exact_uniform_cloud_scores_zero() {
        let lob = square(50.0);
        let params = NucParams {
            disks: 10,
            disk_ratio: 0.01,
            seed: 2,
        };
        let centers = params.local_disk_centers(&lob).unwrap();
        let r = params.disk_radius(&lob);
        // 5 points per disk and N p = 5, so N = 500: the remainder sits outside every disk.
        let mut cloud = Vec::new();
        for i in 0..10 {
            let q = exclusive_point(&centers, r, i);
            cloud.extend((0..5).map(|_| pt(q[0], q[1], 0.5)));
        }
        let far = (-49..=49)
            .flat_map(|x| (-49..=49).map(move |y| [x as f64, y as f64]))
            .find(|q| centers.iter().all(|c| (q[0] - c[0]).powi(2) + (q[1] - c[1]).powi(2) > r * r))
            .unwrap();
        cloud.extend((0..450).map(|_| pt(far[0], far[1], 0.5)));
        let res = infra_nuc(&cloud, &lob, &params).unwrap();
        assert!(res.disk_counts.iter().all(|&c| c == 5));
        assert_eq!(res.infra_nuc, 0.0);
        assert_eq!(res.avg, 1.0);
    }

    #[test]
    fn clustered_is_less_uniform_than_grid() {
        let lob = square(10.0);
        let params = NucParams {
            disks: 100,
            disk_ratio: 0.005,
            seed: 4,
        };
        let grid: Vec<LidarPoint> = (0..100)
            .flat_map(|i| (0..100).map(move |j| pt(-10.0 + 0.2 * i as f64 + 0.1, -10.0 + 0.2 * j as f64 + 0.1, 0.0)))
            .collect();
        let clustered: Vec<LidarPoint> = grid
            .iter()
            .map(|p| pt(p.position[0] / 2.0 - 5.0, p.position[1] / 2.0 - 5.0, 0.0))
            .collect();
        let u = infra_nuc(&grid, &lob, &params).unwrap().infra_nuc;
        let c = infra_nuc(&clustered, &lob, &params).unwrap().infra_nuc;
        assert!(c > u, "clustered {c} uniform {u}");
    }

    #[test]
    fn empty_region_is_undefined() {
        let lob = square(10.0);
        assert_eq!(
            infra_nuc(&[], &lob, &NucParams::default()),
            Err(MetricsError::UndefinedMetric)
        );
        let far = [pt(100.0, 0.0, 0.0)];
        assert_eq!(
            compute_metrics(&far, &lob, &MetricConfig::default()),
            Err(MetricsError::UndefinedMetric)
        );
    }

    #[test]
    fn disks_must_fit() {
        let lob = InfraLob {
            half_extents: [100.0, 0.5],
            ..square(1.0)
        };
        assert!(matches!(
            NucParams::default().validate(&lob),
            Err(MetricsError::InvalidParams(_))
        ));
        let one = NucParams {
            disks: 1,
            ..NucParams::default()
        };
        assert!(matches!(one.validate(&square(10.0)), Err(MetricsError::InvalidParams(_))));
    }

    #[test]
    fn disks_lie_inside_region() {
        let lob = InfraLob {
            center: [4.0, 1.0],
            half_extents: [20.0, 8.0],
            yaw: 0.7,
            z_band: [0.0, 1.0],
        };
        let params = NucParams {
            disks: 500,
            disk_ratio: 0.02,
            seed: 9,
        };
        let r = params.disk_radius(&lob);
        for c in params.local_disk_centers(&lob).unwrap() {
            assert!(c[0].abs() + r <= 20.0 + 1e-12 && c[1].abs() + r <= 8.0 + 1e-12);
        }
    }

    #[test]
    fn uniform_random_trend_over_n() {
        let lob = square(20.0);
        let params = NucParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let nuc_for = |n: usize, rng: &mut ChaCha8Rng| {
            let cloud: Vec<LidarPoint> = (0..n)
                .map(|_| pt(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), 0.0))
                .collect();
            infra_nuc(&cloud, &lob, &params).unwrap().infra_nuc
        };
        let a = nuc_for(1_000, &mut rng);
        let b = nuc_for(10_000, &mut rng);
        let c = nuc_for(100_000, &mut rng);
        assert!(a > b && b > c, "{a} {b} {c}");
    }

    #[test]
    fn label_filter_parsing() {
        assert_eq!(LabelFilter::parse("all").unwrap(), LabelFilter::All);
        assert_eq!(
            LabelFilter::parse("road, glass").unwrap(),
            LabelFilter::Only(vec![SemanticLabel::Road, SemanticLabel::Glass])
        );
        assert!(LabelFilter::parse("road,lava").is_err());
        let json = serde_json::to_string(&MetricConfig::default()).unwrap();
        let back: MetricConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, MetricConfig::default());
        assert!(serde_json::from_str::<LabelFilter>("\"some\"").is_err());
    }

    proptest! {
        #[test]
        fn duplication_leaves_nuc_unchanged(
            pts in proptest::collection::vec((-9.9f64..9.9, -9.9f64..9.9), 1..300),
            seed in 0u64..1000,
            k in 2usize..6,
        ) {
            let lob = square(10.0);
            let params = NucParams { disks: 40, disk_ratio: 0.01, seed };
            let cloud: Vec<LidarPoint> = pts.iter().map(|&(x, y)| pt(x, y, 0.0)).collect();
            let doubled: Vec<LidarPoint> = cloud.iter().flat_map(|p| std::iter::repeat_n(*p, k)).collect();
            let a = infra_nuc(&cloud, &lob, &params).unwrap();
            let b = infra_nuc(&doubled, &lob, &params).unwrap();
            prop_assert_eq!(a.infra_nuc, b.infra_nuc);
            prop_assert_eq!(a.avg, b.avg);
        }

        #[test]
        fn rigid_motion_invariance(
            pts in proptest::collection::vec((-9.9f64..9.9, -4.9f64..4.9), 1..200),
            dx in -50.0f64..50.0, dy in -50.0f64..50.0, yaw in -3.0f64..3.0,
        ) {
            let lob = InfraLob { center: [0.0, 0.0], half_extents: [10.0, 5.0], yaw: 0.0, z_band: [-1.0, 1.0] };
            let moved = InfraLob { center: [dx, dy], yaw, ..lob };
            let cloud: Vec<LidarPoint> = pts.iter().map(|&(x, y)| pt(x, y, 0.0)).collect();
            let moved_cloud: Vec<LidarPoint> = pts.iter().map(|&(x, y)| {
                let w = moved.to_world([x, y]);
                pt(w[0], w[1], 0.0)
            }).collect();
            let cfg = MetricConfig { density_labels: LabelFilter::All, uniformity_labels: LabelFilter::All, nuc: NucParams { disks: 30, disk_ratio: 0.01, seed: 3 } };
            let a = compute_metrics(&cloud, &lob, &cfg).unwrap();
            let b = compute_metrics(&moved_cloud, &moved, &cfg).unwrap();
            prop_assert_eq!(a.point_count, b.point_count);
            prop_assert_eq!(a.infra_d, b.infra_d);
            // Counts agree unless a point sits within rounding of a disk boundary.
            let diff: usize = a.disk_counts.iter().zip(&b.disk_counts).map(|(x, y)| x.abs_diff(*y)).sum();
            prop_assert!(diff <= 1);
        }
    }
}
