//! Bounding volume hierarchy over scene triangles.
//!
//! The tree is built by median splits along the axis of largest centroid extent and stored
//! as a flat node array. Node boxes are padded slightly so that every hit the triangle test
//! accepts (including the barycentric tolerance) lies inside the boxes that lead to it,
//! which keeps traversal results identical to a linear scan.

use super::triangle::Triangle;
use crate::Vec3;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&mut self, other: &Aabb) {
        self.min = self.min.inf(&other.min);
        self.max = self.max.sup(&other.max);
    }

    pub fn of_triangle(tri: &Triangle) -> Self {
        let mut b = Self::empty();
        for v in &tri.vertices {
            b.grow(v);
        }
        b
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    fn padded(&self) -> Self {
        let extent = (self.max - self.min).amax();
        let scale = self.min.amax().max(self.max.amax());
        let pad = 1e-7 * extent + 1e-9 * (1.0 + scale);
        Self {
            min: self.min - Vec3::repeat(pad),
            max: self.max + Vec3::repeat(pad),
        }
    }

    /// Parametric interval `[enter, exit]` in which the ray is inside the box.
    fn slab(&self, origin: &Vec3, inv_dir: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        let mut enter = f64::NEG_INFINITY;
        let mut exit = f64::INFINITY;
        for i in 0..3 {
            if dir[i] == 0.0 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let t0 = (self.min[i] - origin[i]) * inv_dir[i];
            let t1 = (self.max[i] - origin[i]) * inv_dir[i];
            let (near, far) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
            enter = enter.max(near);
            exit = exit.min(far);
            if enter > exit {
                return None;
            }
        }
        Some((enter, exit))
    }
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, count: usize },
    Inner { left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    kind: NodeKind,
}

#[derive(Debug, Clone, Default)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

/// Nearest accepted intersection found so far: `(t, triangle index)`.
pub type Candidate = (f64, usize);

impl Bvh {
    pub fn build(triangles: &[Triangle]) -> Self {
        if triangles.is_empty() {
            return Self::default();
        }
        let boxes: Vec<Aabb> = triangles.iter().map(Aabb::of_triangle).collect();
        let centroids: Vec<Vec3> = triangles.iter().map(Triangle::centroid).collect();
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1);
        build_node(&mut nodes, &mut order, 0, &boxes, &centroids);
        Self { nodes, order }
    }

    /// Bounds of the root node, unpadded, or `None` for an empty tree.
    pub fn root_bounds(&self, triangles: &[Triangle]) -> Option<Aabb> {
        if triangles.is_empty() {
            return None;
        }
        let mut b = Aabb::empty();
        for t in triangles {
            b.merge(&Aabb::of_triangle(t));
        }
        Some(b)
    }

    /// Nearest triangle with `t_min < t <= t_max`; equal distances resolve to the lower index.
    pub fn nearest(
        &self,
        triangles: &[Triangle],
        origin: &Vec3,
        dir: &Vec3,
        t_min: f64,
        t_max: f64,
    ) -> Option<Candidate> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv_dir = dir.map(|d| 1.0 / d);
        let mut best: Option<Candidate> = None;
        let mut stack: Vec<usize> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            let Some((enter, exit)) = node.bounds.slab(origin, &inv_dir, dir) else {
                continue;
            };
            let limit = best.map_or(t_max, |(t, _)| t);
            if enter > limit || exit < t_min {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &tri_idx in &self.order[start..start + count] {
                        if let Some(t) = triangles[tri_idx].intersect(origin, dir) {
                            if t > t_min && t <= t_max && closer((t, tri_idx), best) {
                                best = Some((t, tri_idx));
                            }
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let near_left = self.nodes[left]
                        .bounds
                        .slab(origin, &inv_dir, dir)
                        .map_or(f64::INFINITY, |(e, _)| e);
                    let near_right = self.nodes[right]
                        .bounds
                        .slab(origin, &inv_dir, dir)
                        .map_or(f64::INFINITY, |(e, _)| e);
                    if near_left <= near_right {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best
    }
}

pub(crate) fn closer(candidate: Candidate, best: Option<Candidate>) -> bool {
    match best {
        None => true,
        Some((bt, bi)) => candidate.0 < bt || (candidate.0 == bt && candidate.1 < bi),
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    offset: usize,
    boxes: &[Aabb],
    centroids: &[Vec3],
) -> usize {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &i in order.iter() {
        bounds.merge(&boxes[i]);
        cbounds.grow(&centroids[i]);
    }
    let idx = nodes.len();
    nodes.push(Node {
        bounds: bounds.padded(),
        kind: NodeKind::Leaf {
            start: offset,
            count: order.len(),
        },
    });
    let extent = cbounds.max - cbounds.min;
    if order.len() <= LEAF_SIZE || extent.amax() == 0.0 {
        return idx;
    }
    let axis = extent.imax();
    order.sort_by(|&a, &b| {
        centroids[a][axis]
            .total_cmp(&centroids[b][axis])
            .then(a.cmp(&b))
    });
    let mid = order.len() / 2;
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_node(nodes, lo, offset, boxes, centroids);
    let right = build_node(nodes, hi, offset + mid, boxes, centroids);
    nodes[idx].kind = NodeKind::Inner { left, right };
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slab_handles_axis_parallel_rays() {
        let b = Aabb {
            min: Vec3::new(-1.0, -1.0, -1.0),
            max: Vec3::new(1.0, 1.0, 1.0),
        };
        let dir = Vec3::new(1.0, 0.0, 0.0);
        let inv = dir.map(|d| 1.0 / d);
        assert_eq!(
            b.slab(&Vec3::new(-5.0, 0.0, 0.0), &inv, &dir),
            Some((4.0, 6.0))
        );
        assert!(b.slab(&Vec3::new(-5.0, 2.0, 0.0), &inv, &dir).is_none());
        // Origin exactly on a face plane.
        assert!(b.slab(&Vec3::new(-5.0, 1.0, 0.0), &inv, &dir).is_some());
    }
}
