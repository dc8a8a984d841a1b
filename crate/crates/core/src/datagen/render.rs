//! Ray-cast depth and instance rendering.
//!
//! Pixel `(u, v)` casts the ray `((u - cx) / fx, (v - cy) / fy, 1)` from the
//! camera centre, so the ray parameter of a hit equals its depth and
//! backprojecting the pixel reproduces the hit point.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scene::SceneSpec;
use crate::cloud::DepthScene;
use crate::error::Result;

/// Barycentric slack that keeps rays through shared edges and vertices from
/// slipping between adjacent triangles.
const EDGE_SLACK: f64 = 1e-9;
const NEAR_PLANE: f64 = 1e-3;

/// Nearest hit distance along `dir` from the origin, if any.
fn intersect(dir: &Vector3<f64>, a: &Vector3<f64>, e1: &Vector3<f64>, e2: &Vector3<f64>) -> Option<f64> {
    let p = dir.cross(e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let s = -a;
    let bu = s.dot(&p) * inv;
    if !(-EDGE_SLACK..=1.0 + EDGE_SLACK).contains(&bu) {
        return None;
    }
    let q = s.cross(e1);
    let bv = dir.dot(&q) * inv;
    if bv < -EDGE_SLACK || bu + bv > 1.0 + EDGE_SLACK {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > NEAR_PLANE).then_some(t)
}

/// Renders depth (metres along the optical axis, 0 for no hit) and instance
/// ids (0 for background). Equal depths keep the earlier object.
pub fn render_depth(spec: &SceneSpec) -> Result<DepthScene> {
    spec.validate()?;
    let cam = &spec.camera;
    let k = cam.intrinsics;
    let (w, h) = (cam.width, cam.height);
    let mut depth = vec![0.0f64; w * h];
    let mut labels = vec![0u32; w * h];
    let world_to_cam = cam.pose.inverse();

    for obj in &spec.objects {
        let to_cam = world_to_cam.compose(&obj.pose);
        let mesh = obj.kind.mesh().transformed(&to_cam);
        for &[ia, ib, ic] in &mesh.triangles {
            let (a, b, c) = (mesh.vertices[ia], mesh.vertices[ib], mesh.vertices[ic]);
            if a.z <= NEAR_PLANE || b.z <= NEAR_PLANE || c.z <= NEAR_PLANE {
                continue;
            }
            let project = |p: &Vector3<f64>| (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy);
            let corners = [project(&a), project(&b), project(&c)];
            let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
            for (u, v) in corners {
                u0 = u0.min(u);
                u1 = u1.max(u);
                v0 = v0.min(v);
                v1 = v1.max(v);
            }
            if u1 < 0.0 || v1 < 0.0 || u0 > (w - 1) as f64 || v0 > (h - 1) as f64 {
                continue;
            }
            let us = (u0.floor().max(0.0)) as usize..=(u1.ceil().min((w - 1) as f64)) as usize;
            let vs = (v0.floor().max(0.0)) as usize..=(v1.ceil().min((h - 1) as f64)) as usize;
            let (e1, e2) = (b - a, c - a);
            for v in vs {
                let dy = (v as f64 - k.cy) / k.fy;
                for u in us.clone() {
                    let dir = Vector3::new((u as f64 - k.cx) / k.fx, dy, 1.0);
                    if let Some(t) = intersect(&dir, &a, &e1, &e2) {
                        let i = v * w + u;
                        if depth[i] == 0.0 || t < depth[i] {
                            depth[i] = t;
                            labels[i] = obj.id;
                        }
                    }
                }
            }
        }
    }

    if spec.depth_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let noise = Normal::new(0.0, spec.depth_noise).expect("noise level validated");
        for d in depth.iter_mut().filter(|d| **d > 0.0) {
            *d = (*d + noise.sample(&mut rng)).max(NEAR_PLANE);
        }
    }

    DepthScene::new(w, h, depth, labels, k, cam.pose)
}
