use crate::Vec3;

/// Tolerance applied to the barycentric coordinates so that rays through a shared edge
/// hit at least one of the two triangles.
pub const BARYCENTRIC_EPS: f64 = 1e-9;

/// A triangle in world coordinates referencing a surface by index.
#[derive(Debug, Clone, PartialEq)]
pub struct Triangle {
    pub vertices: [Vec3; 3],
    pub surface: usize,
}

impl Triangle {
    pub fn new(vertices: [Vec3; 3], surface: usize) -> Self {
        Self { vertices, surface }
    }

    /// Unnormalised geometric normal `(v1 - v0) x (v2 - v0)`.
    pub fn raw_normal(&self) -> Vec3 {
        let [v0, v1, v2] = &self.vertices;
        (v1 - v0).cross(&(v2 - v0))
    }

    pub fn area(&self) -> f64 {
        0.5 * self.raw_normal().norm()
    }

    pub fn centroid(&self) -> Vec3 {
        (self.vertices[0] + self.vertices[1] + self.vertices[2]) / 3.0
    }

    /// Ray parameter of the intersection with this triangle, if any, before any range
    /// filtering. Both faces are hit.
    pub fn intersect(&self, origin: &Vec3, direction: &Vec3) -> Option<f64> {
        let [v0, v1, v2] = &self.vertices;
        let e1 = v1 - v0;
        let e2 = v2 - v0;
        let p = direction.cross(&e2);
        let det = e1.dot(&p);
        // Ray (nearly) inside the triangle's plane.
        if det.abs() <= 1e-14 * e1.norm() * e2.norm() {
            return None;
        }
        let inv_det = 1.0 / det;
        let s = origin - v0;
        let u = s.dot(&p) * inv_det;
        if !(-BARYCENTRIC_EPS..=1.0 + BARYCENTRIC_EPS).contains(&u) {
            return None;
        }
        let q = s.cross(&e1);
        let v = direction.dot(&q) * inv_det;
        if v < -BARYCENTRIC_EPS || u + v > 1.0 + BARYCENTRIC_EPS {
            return None;
        }
        let t = e2.dot(&q) * inv_det;
        t.is_finite().then_some(t)
    }
}
