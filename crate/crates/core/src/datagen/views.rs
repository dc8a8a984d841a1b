//! Training viewpoints and occluder placement.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mesh::PrimitiveKind;
use super::render::render_depth;
use super::scene::{look_at, Camera, SceneObject, SceneSpec, OCCLUDER_LABEL};
use crate::cloud::{PointCloud, RigidTransform};
use crate::error::{Error, Result};

/// Half-width of the accepted band around a requested hidden fraction.
pub const FRACTION_TOLERANCE: f64 = 0.05;

/// The twelve vertices of a regular icosahedron as unit vectors.
pub fn icosahedron_directions() -> [Vector3<f64>; 12] {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut out = [Vector3::zeros(); 12];
    let mut i = 0;
    for a in [-1.0, 1.0] {
        for b in [-phi, phi] {
            out[i] = Vector3::new(0.0, a, b).normalize();
            out[i + 1] = Vector3::new(a, b, 0.0).normalize();
            out[i + 2] = Vector3::new(b, 0.0, a).normalize();
            i += 3;
        }
    }
    out
}

/// An up vector that is not parallel to `dir`.
fn up_for(dir: &Vector3<f64>) -> Vector3<f64> {
    if dir.z.abs() > 0.99 {
        Vector3::x()
    } else {
        Vector3::z()
    }
}

/// A rendered partial view of one object.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub cloud: PointCloud,
    pub label: String,
    /// Unit direction from the object centre to the camera.
    pub viewpoint: Vector3<f64>,
    pub spec: SceneSpec,
}

/// Scene with `kind` at the origin seen from `distance` along `dir`.
pub fn view_scene(kind: PrimitiveKind, label: &str, dir: &Vector3<f64>, distance: f64, seed: u64) -> Result<SceneSpec> {
    let center = kind.center();
    let pose = look_at(center + dir.normalize() * distance, center, up_for(dir))?;
    let mut spec = SceneSpec::new(Camera::with_pose(pose), seed);
    spec.objects.push(SceneObject {
        id: 1,
        label: label.to_string(),
        kind,
        pose: RigidTransform::identity(),
    });
    Ok(spec)
}

/// One view per icosahedral direction (the first `n_dirs` of them).
pub fn gen_training_views(kind: PrimitiveKind, label: &str, n_dirs: usize, distance: f64) -> Result<Vec<RenderedView>> {
    icosahedron_directions()
        .iter()
        .take(n_dirs)
        .map(|dir| {
            let spec = view_scene(kind, label, dir, distance, 0)?;
            let cloud = render_depth(&spec)?.backproject(1)?;
            Ok(RenderedView {
                cloud,
                label: label.to_string(),
                viewpoint: *dir,
                spec,
            })
        })
        .collect()
}

/// Where and how big the occluder is relative to the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccluderConfig {
    pub kind: PrimitiveKind,
    /// Fraction of the way from the target centre to the camera.
    pub toward_camera: f64,
}

impl Default for OccluderConfig {
    fn default() -> Self {
        Self {
            kind: PrimitiveKind::Box {
                sx: 0.6,
                sy: 0.6,
                sz: 0.05,
            },
            toward_camera: 0.45,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccludedScene {
    pub spec: SceneSpec,
    pub target_id: u32,
    pub occluder_id: u32,
    /// Requested hidden fraction of the target's pixels.
    pub requested: f64,
    /// Hidden fraction actually achieved.
    pub achieved: f64,
    /// Unit image-plane direction (camera frame) from the target towards the
    /// occluder.
    pub direction: Vector3<f64>,
}

/// Adds a camera-facing occluder between the camera and object `target_id`
/// and slides it sideways, along a seeded image-plane direction, until the
/// target loses `fraction` of its pixels (within `FRACTION_TOLERANCE`).
pub fn gen_occluded_scene(
    base: &SceneSpec,
    target_id: u32,
    occluder: &OccluderConfig,
    fraction: f64,
    seed: u64,
) -> Result<OccludedScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let direction = Vector3::new(angle.cos(), angle.sin(), 0.0);
    gen_occluded_scene_along(base, target_id, occluder, fraction, &direction, seed)
}

/// Like [`gen_occluded_scene`] with the sideways direction given explicitly
/// in camera coordinates; its z component is ignored.
pub fn gen_occluded_scene_along(
    base: &SceneSpec,
    target_id: u32,
    occluder: &OccluderConfig,
    fraction: f64,
    direction: &Vector3<f64>,
    seed: u64,
) -> Result<OccludedScene> {
    if !(0.0..0.8).contains(&fraction) {
        return Err(Error::InvalidParams(format!("occlusion fraction {fraction} outside [0, 0.8)")));
    }
    let planar = Vector3::new(direction.x, direction.y, 0.0);
    if planar.norm() < 1e-12 {
        return Err(Error::InvalidParams("occluder direction has no image-plane component".into()));
    }
    let direction = planar.normalize();
    let target = base.object(target_id).ok_or(Error::UnknownInstance(target_id))?;
    let visible = render_depth(base)?.pixel_count(target_id);
    if visible == 0 {
        return Err(Error::EmptyCloud);
    }
    let cam_rot = base.camera.pose.rotation;
    let lateral = cam_rot * direction;

    let center = target.world_center();
    let anchor = center + (base.camera.eye() - center) * occluder.toward_camera;
    let occluder_id = base.next_id();
    let occ_center = occluder.kind.center();
    let place = |offset: f64| {
        let mut spec = base.clone();
        spec.seed = seed;
        let origin = anchor + lateral * offset - cam_rot * occ_center;
        spec.objects.push(SceneObject {
            id: occluder_id,
            label: OCCLUDER_LABEL.to_string(),
            kind: occluder.kind,
            pose: RigidTransform::new(cam_rot, origin),
        });
        spec
    };
    let hidden = |offset: f64| -> Result<f64> {
        let seen = render_depth(&place(offset))?.pixel_count(target_id);
        Ok(1.0 - seen as f64 / visible as f64)
    };

    let mut far = target.kind.bounding_radius() + occluder.kind.bounding_radius();
    while hidden(far)? > 0.0 {
        far *= 2.0;
        if far > 1e3 {
            return Err(Error::InvalidParams("occluder cannot be moved clear of the target".into()));
        }
    }
    let finish = |offset: f64, achieved: f64| OccludedScene {
        spec: place(offset),
        target_id,
        occluder_id,
        requested: fraction,
        achieved,
        direction,
    };
    if fraction == 0.0 {
        return Ok(finish(far, 0.0));
    }
    let most = hidden(0.0)?;
    if most < fraction - FRACTION_TOLERANCE {
        return Err(Error::UnreachableFraction {
            requested: fraction,
            achievable: most,
        });
    }

    let (mut lo, mut hi) = (0.0, far);
    let mut best = (0.0, most);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let h = hidden(mid)?;
        if (h - fraction).abs() < (best.1 - fraction).abs() {
            best = (mid, h);
        }
        if (h - fraction).abs() <= 0.01 {
            break;
        }
        if h > fraction {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best.1 - fraction).abs() > FRACTION_TOLERANCE {
        return Err(Error::UnreachableFraction {
            requested: fraction,
            achievable: best.1,
        });
    }
    Ok(finish(best.0, best.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosahedron_is_regular() {
        let dirs = icosahedron_directions();
        for (i, a) in dirs.iter().enumerate() {
            assert!((a.norm() - 1.0).abs() < 1e-12);
            let neighbours = dirs
                .iter()
                .enumerate()
                .filter(|&(j, b)| j != i && a.dot(b) > 0.4)
                .count();
            assert_eq!(neighbours, 5);
        }
    }

    #[test]
    fn sphere_views_are_hemispheres() {
        let kind = PrimitiveKind::Sphere { radius: 0.25 };
        let views = gen_training_views(kind, "ball", 12, 2.5).unwrap();
        assert_eq!(views.len(), 12);
        for v in &views {
            assert!(!v.cloud.is_empty());
            let cam_to_world = v.spec.camera.pose;
            for p in &v.cloud.points {
                let w = cam_to_world.apply_vector(&p.to_vector()) - kind.center();
                assert!((w.norm() - 0.25).abs() < 0.01);
                assert!(w.dot(&v.viewpoint) > -0.01);
            }
        }
    }

    #[test]
    fn face_on_box_view_is_flat() {
        let kind = PrimitiveKind::Box {
            sx: 0.4,
            sy: 0.3,
            sz: 0.5,
        };
        let spec = view_scene(kind, "box", &Vector3::x(), 2.5, 0).unwrap();
        let cloud = render_depth(&spec).unwrap().backproject(1).unwrap();
        let (lo, hi) = cloud
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.z), hi.max(p.z)));
        assert!(hi - lo < 0.01 * 0.4, "spread {}", hi - lo);
    }

    fn target_scene() -> SceneSpec {
        let kind = PrimitiveKind::Cylinder {
            radius: 0.15,
            height: 0.5,
        };
        view_scene(kind, "cyl", &Vector3::new(1.0, 0.3, 0.5).normalize(), 2.5, 0).unwrap()
    }

    #[test]
    fn occlusion_hits_requested_fraction() {
        let base = target_scene();
        let before = render_depth(&base).unwrap().pixel_count(1) as f64;
        for (seed, fraction) in [(1u64, 0.3), (2, 0.3), (3, 0.5), (4, 0.1)] {
            let occ = gen_occluded_scene(&base, 1, &OccluderConfig::default(), fraction, seed).unwrap();
            let after = render_depth(&occ.spec).unwrap().pixel_count(1) as f64;
            let measured = 1.0 - after / before;
            assert!((measured - fraction).abs() <= FRACTION_TOLERANCE, "{measured}");
            assert_eq!(measured, occ.achieved);
        }
    }

    #[test]
    fn zero_fraction_leaves_target_intact() {
        let base = target_scene();
        let before = render_depth(&base).unwrap().pixel_count(1);
        let occ = gen_occluded_scene(&base, 1, &OccluderConfig::default(), 0.0, 5).unwrap();
        assert_eq!(render_depth(&occ.spec).unwrap().pixel_count(1), before);
    }

    #[test]
    fn tiny_occluder_cannot_hide_most_of_target() {
        let tiny = OccluderConfig {
            kind: PrimitiveKind::Box {
                sx: 0.02,
                sy: 0.02,
                sz: 0.02,
            },
            toward_camera: 0.45,
        };
        assert!(matches!(
            gen_occluded_scene(&target_scene(), 1, &tiny, 0.79, 1),
            Err(Error::UnreachableFraction { .. })
        ));
    }
}
