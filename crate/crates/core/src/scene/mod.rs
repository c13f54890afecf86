//! Static scene geometry, surface materials and ray queries.

mod bvh;
mod triangle;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec3;
pub use bvh::Aabb;
use bvh::Bvh;
pub use triangle::{Triangle, BARYCENTRIC_EPS};

/// Allowed deviation of a ray direction's norm from 1.
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("geometry item {item} references unknown material `{name}`")]
    UnknownMaterial { item: usize, name: String },
    #[error("material `{0}` is defined more than once")]
    DuplicateMaterial(String),
    #[error("triangle {index} is degenerate (zero area)")]
    DegenerateTriangle { index: usize },
    #[error("triangle {index} has a non-finite vertex")]
    NonFiniteVertex { index: usize },
    #[error("triangle {triangle} references surface {surface}, but only {count} surfaces exist")]
    InvalidSurface {
        triangle: usize,
        surface: usize,
        count: usize,
    },
    #[error("ray direction must be unit length, got norm {0}")]
    NonUnitDirection(f64),
    #[error("invalid ray interval: t_min {t_min}, t_max {t_max}")]
    InvalidInterval { t_min: f64, t_max: f64 },
}

/// Semantic tag carried by every surface and every simulated point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticLabel {
    Road,
    Building,
    Glass,
    Water,
    Vegetation,
    Vehicle,
    Other,
}

impl SemanticLabel {
    pub const ALL: [SemanticLabel; 7] = [
        SemanticLabel::Road,
        SemanticLabel::Building,
        SemanticLabel::Glass,
        SemanticLabel::Water,
        SemanticLabel::Vegetation,
        SemanticLabel::Vehicle,
        SemanticLabel::Other,
    ];

    /// Integer code used in point-cloud files.
    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SemanticLabel::Road => "road",
            SemanticLabel::Building => "building",
            SemanticLabel::Glass => "glass",
            SemanticLabel::Water => "water",
            SemanticLabel::Vegetation => "vegetation",
            SemanticLabel::Vehicle => "vehicle",
            SemanticLabel::Other => "other",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }
}

impl fmt::Display for SemanticLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Optical and semantic properties of a surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSurface {
    pub name: String,
    pub smoothness: f64,
    pub reflectivity: f64,
    pub label: SemanticLabel,
}

impl MaterialSurface {
    /// Smoothness and reflectivity are clamped to `[0, 1]`.
    pub fn new(name: impl Into<String>, smoothness: f64, reflectivity: f64, label: SemanticLabel) -> Self {
        Self {
            name: name.into(),
            smoothness: smoothness.clamp(0.0, 1.0),
            reflectivity: reflectivity.clamp(0.0, 1.0),
            label,
        }
    }
}

/// Reference materials. Glass and water sit above the default specular threshold (0.9).
pub fn material_library() -> Vec<MaterialSurface> {
    use SemanticLabel::*;
    vec![
        MaterialSurface::new("asphalt", 0.1, 0.3, Road),
        MaterialSurface::new("concrete", 0.2, 0.5, Building),
        MaterialSurface::new("glass", 0.95, 0.6, Glass),
        MaterialSurface::new("water", 0.95, 0.2, Water),
        MaterialSurface::new("foliage", 0.05, 0.4, Vegetation),
        MaterialSurface::new("car_paint", 0.6, 0.7, Vehicle),
        MaterialSurface::new("generic", 0.3, 0.5, Other),
    ]
}

/// One geometry item of a scene description. Primitives are tessellated at build time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    /// Axis-aligned rectangle at height `z`, centered at `center` with full side lengths `size`.
    GroundPlane {
        z: f64,
        center: [f64; 2],
        size: [f64; 2],
        material: String,
    },
    /// Box with full side lengths `size`, rotated by `yaw` about its vertical axis.
    Box {
        center: [f64; 3],
        size: [f64; 3],
        yaw: f64,
        material: String,
    },
    Triangle {
        vertices: [[f64; 3]; 3],
        material: String,
    },
}

impl GeometrySpec {
    pub fn material(&self) -> &str {
        match self {
            GeometrySpec::GroundPlane { material, .. }
            | GeometrySpec::Box { material, .. }
            | GeometrySpec::Triangle { material, .. } => material,
        }
    }

    fn tessellate(&self, surface: usize, out: &mut Vec<Triangle>) {
        match self {
            GeometrySpec::GroundPlane { z, center, size, .. } => {
                let (hx, hy) = (size[0] / 2.0, size[1] / 2.0);
                let p = |sx: f64, sy: f64| Vec3::new(center[0] + sx * hx, center[1] + sy * hy, *z);
                let (a, b, c, d) = (p(-1.0, -1.0), p(1.0, -1.0), p(1.0, 1.0), p(-1.0, 1.0));
                out.push(Triangle::new([a, b, c], surface));
                out.push(Triangle::new([a, c, d], surface));
            }
            GeometrySpec::Box { center, size, yaw, .. } => {
                let (s, c) = yaw.sin_cos();
                let corner = |i: usize| {
                    let lx = if i & 1 == 0 { -0.5 } else { 0.5 } * size[0];
                    let ly = if i & 2 == 0 { -0.5 } else { 0.5 } * size[1];
                    let lz = if i & 4 == 0 { -0.5 } else { 0.5 } * size[2];
                    Vec3::new(
                        center[0] + c * lx - s * ly,
                        center[1] + s * lx + c * ly,
                        center[2] + lz,
                    )
                };
                // Faces as corner quads, wound outward.
                const FACES: [[usize; 4]; 6] = [
                    [0, 2, 3, 1], // bottom
                    [4, 5, 7, 6], // top
                    [0, 1, 5, 4], // -y
                    [2, 6, 7, 3], // +y
                    [0, 4, 6, 2], // -x
                    [1, 3, 7, 5], // +x
                ];
                for f in FACES {
                    let q = f.map(corner);
                    out.push(Triangle::new([q[0], q[1], q[2]], surface));
                    out.push(Triangle::new([q[0], q[2], q[3]], surface));
                }
            }
            GeometrySpec::Triangle { vertices, .. } => {
                let v = vertices.map(|p| Vec3::new(p[0], p[1], p[2]));
                out.push(Triangle::new(v, surface));
            }
        }
    }
}

/// Parsed scene file contents: named materials and geometry referencing them by name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescription {
    pub materials: Vec<MaterialSurface>,
    pub geometry: Vec<GeometrySpec>,
}

/// Nearest intersection of a ray with the scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub position: Vec3,
    /// Unit normal, oriented against the incoming ray.
    pub normal: Vec3,
    pub surface: usize,
    pub triangle: usize,
}

/// Immutable triangle scene with a BVH over all triangles.
#[derive(Debug, Clone)]
pub struct Scene {
    triangles: Vec<Triangle>,
    surfaces: Vec<MaterialSurface>,
    bounds: Option<Aabb>,
    bvh: Bvh,
}

impl Scene {
    pub fn build(desc: &SceneDescription) -> Result<Self, SceneError> {
        let mut index = HashMap::new();
        for (i, m) in desc.materials.iter().enumerate() {
            if index.insert(m.name.as_str(), i).is_some() {
                return Err(SceneError::DuplicateMaterial(m.name.clone()));
            }
        }
        let mut triangles = Vec::new();
        for (item, g) in desc.geometry.iter().enumerate() {
            let surface = *index.get(g.material()).ok_or_else(|| SceneError::UnknownMaterial {
                item,
                name: g.material().to_string(),
            })?;
            g.tessellate(surface, &mut triangles);
        }
        let surfaces = desc
            .materials
            .iter()
            .map(|m| MaterialSurface::new(m.name.clone(), m.smoothness, m.reflectivity, m.label))
            .collect();
        Self::from_parts(triangles, surfaces)
    }

    /// Builds a scene from already tessellated triangles.
    pub fn from_parts(triangles: Vec<Triangle>, surfaces: Vec<MaterialSurface>) -> Result<Self, SceneError> {
        for (index, t) in triangles.iter().enumerate() {
            if t.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
                return Err(SceneError::NonFiniteVertex { index });
            }
            if t.surface >= surfaces.len() {
                return Err(SceneError::InvalidSurface {
                    triangle: index,
                    surface: t.surface,
                    count: surfaces.len(),
                });
            }
            if t.raw_normal().norm() <= f64::MIN_POSITIVE {
                return Err(SceneError::DegenerateTriangle { index });
            }
        }
        let bvh = Bvh::build(&triangles);
        let bounds = bvh.root_bounds(&triangles);
        Ok(Self {
            triangles,
            surfaces,
            bounds,
            bvh,
        })
    }

    pub fn empty() -> Self {
        Self::from_parts(Vec::new(), Vec::new()).expect("empty scene is valid")
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn surfaces(&self) -> &[MaterialSurface] {
        &self.surfaces
    }

    pub fn surface(&self, id: usize) -> &MaterialSurface {
        &self.surfaces[id]
    }

    /// Bounding box of all triangles, `None` when the scene is empty.
    pub fn bounds(&self) -> Option<Aabb> {
        self.bounds
    }

    /// Nearest hit with distance in `(t_min, t_max]`.
    pub fn cast_ray(&self, origin: &Vec3, direction: &Vec3, t_min: f64, t_max: f64) -> Result<Option<Hit>, SceneError> {
        let norm = direction.norm();
        if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(SceneError::NonUnitDirection(norm));
        }
        if !(t_min >= 0.0 && t_min < t_max) {
            return Err(SceneError::InvalidInterval { t_min, t_max });
        }
        Ok(self
            .bvh
            .nearest(&self.triangles, origin, direction, t_min, t_max)
            .map(|(t, idx)| self.make_hit(origin, direction, t, idx)))
    }

    /// Linear scan over every triangle. Same contract as [`Scene::cast_ray`].
    pub fn cast_ray_linear(&self, origin: &Vec3, direction: &Vec3, t_min: f64, t_max: f64) -> Result<Option<Hit>, SceneError> {
        let norm = direction.norm();
        if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(SceneError::NonUnitDirection(norm));
        }
        if !(t_min >= 0.0 && t_min < t_max) {
            return Err(SceneError::InvalidInterval { t_min, t_max });
        }
        let mut best = None;
        for (idx, tri) in self.triangles.iter().enumerate() {
            if let Some(t) = tri.intersect(origin, direction) {
                if t > t_min && t <= t_max && bvh::closer((t, idx), best) {
                    best = Some((t, idx));
                }
            }
        }
        Ok(best.map(|(t, idx)| self.make_hit(origin, direction, t, idx)))
    }

    /// Number of surface crossings along a ray, used to detect points enclosed by geometry.
    pub fn count_crossings(&self, origin: &Vec3, direction: &Vec3) -> Result<usize, SceneError> {
        let mut count = 0;
        let mut t_min = 0.0;
        while let Some(hit) = self.cast_ray(origin, direction, t_min, f64::INFINITY)? {
            count += 1;
            t_min = hit.distance + 1e-6;
        }
        Ok(count)
    }

    fn make_hit(&self, origin: &Vec3, direction: &Vec3, t: f64, idx: usize) -> Hit {
        let tri = &self.triangles[idx];
        let mut normal = tri.raw_normal().normalize();
        if normal.dot(direction) > 0.0 {
            normal = -normal;
        }
        Hit {
            distance: t,
            position: origin + direction * t,
            normal,
            surface: tri.surface,
            triangle: idx,
        }
    }
}
