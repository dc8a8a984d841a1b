//! Closed triangle meshes of the primitive shapes. Every mesh rests on the
//! plane z = 0 with its axis along +z, and triangles wind counter-clockwise
//! seen from outside.

use std::f64::consts::TAU;
use std::fmt;

use nalgebra::Vector3;

use crate::cloud::RigidTransform;
use crate::error::{Error, Result};

const ROUND_SEGMENTS: usize = 32;
const SPHERE_STACKS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrimitiveKind {
    /// Full extents along x, y and z, centred on the z axis.
    Box { sx: f64, sy: f64, sz: f64 },
    Cylinder { radius: f64, height: f64 },
    /// Centred at `(0, 0, radius)`.
    Sphere { radius: f64 },
    Cone { radius: f64, height: f64 },
    /// An `sx x sy x sz` block with the corner `x > notch_x, z > notch_z`
    /// (in block coordinates starting at 0) removed, extruded along y.
    LBlock {
        sx: f64,
        sy: f64,
        sz: f64,
        notch_x: f64,
        notch_z: f64,
    },
}

impl PrimitiveKind {
    pub fn name(&self) -> &'static str {
        match self {
            PrimitiveKind::Box { .. } => "box",
            PrimitiveKind::Cylinder { .. } => "cylinder",
            PrimitiveKind::Sphere { .. } => "sphere",
            PrimitiveKind::Cone { .. } => "cone",
            PrimitiveKind::LBlock { .. } => "l_block",
        }
    }

    pub fn dims(&self) -> Vec<f64> {
        match *self {
            PrimitiveKind::Box { sx, sy, sz } => vec![sx, sy, sz],
            PrimitiveKind::Cylinder { radius, height } | PrimitiveKind::Cone { radius, height } => {
                vec![radius, height]
            }
            PrimitiveKind::Sphere { radius } => vec![radius],
            PrimitiveKind::LBlock {
                sx,
                sy,
                sz,
                notch_x,
                notch_z,
            } => vec![sx, sy, sz, notch_x, notch_z],
        }
    }

    pub fn from_parts(name: &str, dims: &[f64]) -> Result<Self> {
        let want = |n: usize| {
            if dims.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{name} takes {n} dimensions, got {}", dims.len())))
            }
        };
        let kind = match name {
            "box" => {
                want(3)?;
                PrimitiveKind::Box {
                    sx: dims[0],
                    sy: dims[1],
                    sz: dims[2],
                }
            }
            "cylinder" => {
                want(2)?;
                PrimitiveKind::Cylinder {
                    radius: dims[0],
                    height: dims[1],
                }
            }
            "sphere" => {
                want(1)?;
                PrimitiveKind::Sphere { radius: dims[0] }
            }
            "cone" => {
                want(2)?;
                PrimitiveKind::Cone {
                    radius: dims[0],
                    height: dims[1],
                }
            }
            "l_block" => {
                want(5)?;
                PrimitiveKind::LBlock {
                    sx: dims[0],
                    sy: dims[1],
                    sz: dims[2],
                    notch_x: dims[3],
                    notch_z: dims[4],
                }
            }
            other => return Err(Error::InvalidParams(format!("unknown primitive '{other}'"))),
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::InvalidParams(format!("{} dimensions must be positive", self.name())));
        }
        if let PrimitiveKind::LBlock {
            sx,
            sz,
            notch_x,
            notch_z,
            ..
        } = *self
        {
            if notch_x >= sx || notch_z >= sz {
                return Err(Error::InvalidParams("l_block notch must lie inside the block".into()));
            }
        }
        Ok(())
    }

    /// Centre of the axis-aligned bounding box in mesh coordinates.
    pub fn center(&self) -> Vector3<f64> {
        match *self {
            PrimitiveKind::Box { sz, .. } | PrimitiveKind::LBlock { sz, .. } => Vector3::new(0.0, 0.0, sz / 2.0),
            PrimitiveKind::Cylinder { height, .. } | PrimitiveKind::Cone { height, .. } => {
                Vector3::new(0.0, 0.0, height / 2.0)
            }
            PrimitiveKind::Sphere { radius } => Vector3::new(0.0, 0.0, radius),
        }
    }

    /// Radius of the footprint's enclosing circle about the z axis.
    pub fn footprint_radius(&self) -> f64 {
        match *self {
            PrimitiveKind::Box { sx, sy, .. } | PrimitiveKind::LBlock { sx, sy, .. } => 0.5 * sx.hypot(sy),
            PrimitiveKind::Cylinder { radius, .. }
            | PrimitiveKind::Cone { radius, .. }
            | PrimitiveKind::Sphere { radius } => radius,
        }
    }

    /// Radius of the bounding sphere about `center()`.
    pub fn bounding_radius(&self) -> f64 {
        let c = self.center();
        self.mesh()
            .vertices
            .iter()
            .map(|v| (v - c).norm())
            .fold(0.0, f64::max)
    }

    pub fn mesh(&self) -> TriMesh {
        match *self {
            PrimitiveKind::Box { sx, sy, sz } => prism(
                &[
                    (-sx / 2.0, -sy / 2.0),
                    (sx / 2.0, -sy / 2.0),
                    (sx / 2.0, sy / 2.0),
                    (-sx / 2.0, sy / 2.0),
                ],
                sz,
            ),
            PrimitiveKind::Cylinder { radius, height } => {
                let ring: Vec<(f64, f64)> = (0..ROUND_SEGMENTS)
                    .map(|i| {
                        let a = TAU * i as f64 / ROUND_SEGMENTS as f64;
                        (radius * a.cos(), radius * a.sin())
                    })
                    .collect();
                prism(&ring, height)
            }
            PrimitiveKind::Sphere { radius } => sphere(radius),
            PrimitiveKind::Cone { radius, height } => cone(radius, height),
            PrimitiveKind::LBlock {
                sx,
                sy,
                sz,
                notch_x,
                notch_z,
            } => l_block(sx, sy, sz, notch_x, notch_z),
        }
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.dims().iter().map(|d| d.to_string()).collect();
        write!(f, "{}({})", self.name(), dims.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn transformed(&self, t: &RigidTransform) -> TriMesh {
        TriMesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| t.rotation * v + t.translation)
                .collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Enclosed volume by the divergence theorem; positive for outward
    /// winding.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])) / 6.0)
            .sum()
    }

    /// Every directed edge occurs once and its reverse occurs once.
    pub fn is_closed_and_consistent(&self) -> bool {
        let mut edges = std::collections::HashMap::new();
        for &[a, b, c] in &self.triangles {
            for e in [(a, b), (b, c), (c, a)] {
                *edges.entry(e).or_insert(0usize) += 1;
            }
        }
        edges
            .iter()
            .all(|(&(a, b), &n)| n == 1 && edges.get(&(b, a)) == Some(&1))
    }

    /// Distance from `p` to the closest point of the surface.
    pub fn distance_to(&self, p: &Vector3<f64>) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| point_triangle_distance(p, &self.vertices[a], &self.vertices[b], &self.vertices[c]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Vertical prism over a counter-clockwise polygon, bottom at z = 0. Caps
/// are fanned from the first vertex, which must see every other vertex.
fn prism(polygon: &[(f64, f64)], height: f64) -> TriMesh {
    let n = polygon.len();
    let mut vertices = Vec::with_capacity(2 * n);
    for &(x, y) in polygon {
        vertices.push(Vector3::new(x, y, 0.0));
    }
    for &(x, y) in polygon {
        vertices.push(Vector3::new(x, y, height));
    }
    let mut triangles = Vec::with_capacity(4 * n);
    for i in 1..n - 1 {
        triangles.push([0, i + 1, i]);
        triangles.push([n, n + i, n + i + 1]);
    }
    for i in 0..n {
        let j = (i + 1) % n;
        triangles.push([i, j, n + j]);
        triangles.push([i, n + j, n + i]);
    }
    TriMesh { vertices, triangles }
}

fn sphere(radius: f64) -> TriMesh {
    let center = Vector3::new(0.0, 0.0, radius);
    let mut vertices = vec![center - Vector3::z() * radius];
    for s in 1..SPHERE_STACKS {
        let polar = std::f64::consts::PI * s as f64 / SPHERE_STACKS as f64;
        let (rs, z) = (radius * polar.sin(), -radius * polar.cos());
        for i in 0..ROUND_SEGMENTS {
            let a = TAU * i as f64 / ROUND_SEGMENTS as f64;
            vertices.push(center + Vector3::new(rs * a.cos(), rs * a.sin(), z));
        }
    }
    let top = vertices.len();
    vertices.push(center + Vector3::z() * radius);

    let ring = |s: usize, i: usize| 1 + (s - 1) * ROUND_SEGMENTS + i % ROUND_SEGMENTS;
    let mut triangles = Vec::new();
    for i in 0..ROUND_SEGMENTS {
        triangles.push([0, ring(1, i + 1), ring(1, i)]);
        triangles.push([top, ring(SPHERE_STACKS - 1, i), ring(SPHERE_STACKS - 1, i + 1)]);
    }
    for s in 1..SPHERE_STACKS - 1 {
        for i in 0..ROUND_SEGMENTS {
            triangles.push([ring(s, i), ring(s, i + 1), ring(s + 1, i + 1)]);
            triangles.push([ring(s, i), ring(s + 1, i + 1), ring(s + 1, i)]);
        }
    }
    TriMesh { vertices, triangles }
}

fn cone(radius: f64, height: f64) -> TriMesh {
    let mut vertices = vec![Vector3::zeros()];
    for i in 0..ROUND_SEGMENTS {
        let a = TAU * i as f64 / ROUND_SEGMENTS as f64;
        vertices.push(Vector3::new(radius * a.cos(), radius * a.sin(), 0.0));
    }
    let apex = vertices.len();
    vertices.push(Vector3::new(0.0, 0.0, height));
    let ring = |i: usize| 1 + i % ROUND_SEGMENTS;
    let mut triangles = Vec::new();
    for i in 0..ROUND_SEGMENTS {
        triangles.push([0, ring(i + 1), ring(i)]);
        triangles.push([ring(i), ring(i + 1), apex]);
    }
    TriMesh { vertices, triangles }
}

fn l_block(sx: f64, sy: f64, sz: f64, notch_x: f64, notch_z: f64) -> TriMesh {
    // Profile in the xz-plane, counter-clockwise seen from -y, then extruded
    // along +y by building a prism in (x, z, y) and swapping axes.
    let profile = [
        (0.0, 0.0),
        (sx, 0.0),
        (sx, notch_z),
        (notch_x, notch_z),
        (notch_x, sz),
        (0.0, sz),
    ];
    let mut mesh = prism(&profile, sy);
    for v in &mut mesh.vertices {
        *v = Vector3::new(v.x - sx / 2.0, v.z - sy / 2.0, v.y);
    }
    // The axis swap is a reflection, so every triangle flips.
    for t in &mut mesh.triangles {
        t.swap(1, 2);
    }
    mesh
}

/// Euclidean distance from a point to a triangle.
pub fn point_triangle_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let n = (b - a).cross(&(c - a));
    let area2 = n.norm_squared();
    if area2 > 0.0 {
        let d = (p - a).dot(&n) / area2;
        let q = p - n * d;
        let inside = [(a, b), (b, c), (c, a)]
            .iter()
            .all(|(u, v)| (*v - *u).cross(&(q - *u)).dot(&n) >= 0.0);
        if inside {
            return (p - q).norm();
        }
    }
    [(a, b), (b, c), (c, a)]
        .iter()
        .map(|(u, v)| {
            let e = *v - *u;
            let len2 = e.norm_squared();
            let t = if len2 > 0.0 { ((p - *u).dot(&e) / len2).clamp(0.0, 1.0) } else { 0.0 };
            (p - (*u + e * t)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds() -> Vec<PrimitiveKind> {
        vec![
            PrimitiveKind::Box {
                sx: 0.4,
                sy: 0.3,
                sz: 0.2,
            },
            PrimitiveKind::Cylinder {
                radius: 0.1,
                height: 0.5,
            },
            PrimitiveKind::Sphere { radius: 0.25 },
            PrimitiveKind::Cone {
                radius: 0.2,
                height: 0.3,
            },
            PrimitiveKind::LBlock {
                sx: 0.5,
                sy: 0.25,
                sz: 0.4,
                notch_x: 0.2,
                notch_z: 0.2,
            },
        ]
    }

    #[test]
    fn meshes_are_closed_and_outward() {
        for k in kinds() {
            let m = k.mesh();
            assert!(m.is_closed_and_consistent(), "{k}");
            assert!(m.signed_volume() > 0.0, "{k}");
            let min_z = m.vertices.iter().map(|v| v.z).fold(f64::INFINITY, f64::min);
            assert!(min_z.abs() < 1e-12, "{k}");
        }
    }

    #[test]
    fn volumes_match_closed_forms() {
        let vol = |k: PrimitiveKind| k.mesh().signed_volume();
        assert!((vol(kinds()[0]) - 0.024).abs() < 1e-12);
        let l = vol(kinds()[4]);
        assert!((l - (0.5 * 0.4 - 0.3 * 0.2) * 0.25).abs() < 1e-12);
        // Inscribed polygons lose a little volume.
        let cyl = vol(kinds()[1]);
        let exact = std::f64::consts::PI * 0.01 * 0.5;
        assert!(cyl < exact && cyl > 0.98 * exact);
    }

    #[test]
    fn parts_round_trip() {
        for k in kinds() {
            assert_eq!(PrimitiveKind::from_parts(k.name(), &k.dims()).unwrap(), k);
        }
        assert!(PrimitiveKind::from_parts("box", &[1.0, 2.0]).is_err());
        assert!(PrimitiveKind::from_parts("box", &[1.0, -2.0, 1.0]).is_err());
        assert!(PrimitiveKind::from_parts("torus", &[1.0]).is_err());
    }

    #[test]
    fn triangle_distance() {
        let (a, b, c) = (Vector3::zeros(), Vector3::x(), Vector3::y());
        assert!((point_triangle_distance(&Vector3::new(0.2, 0.2, 0.5), &a, &b, &c) - 0.5).abs() < 1e-15);
        assert!((point_triangle_distance(&Vector3::new(2.0, 0.0, 0.0), &a, &b, &c) - 1.0).abs() < 1e-15);
    }
}
