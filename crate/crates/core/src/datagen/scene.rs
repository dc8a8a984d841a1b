//! Scene descriptions and their line-oriented text form.
//!
//! ```text
//! scene 1
//! seed 7
//! image 320 240
//! intrinsics 280 280 160 120
//! camera_rotation r00 r01 r02 r10 r11 r12 r20 r21 r22
//! camera_translation tx ty tz
//! depth_noise 0
//! object 1 box_a box 0.5 0.3 0.2 pose r00 ... r22 tx ty tz
//! ```
//!
//! Rotations are row-major; poses map object (or camera) coordinates to the
//! world. Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::mesh::PrimitiveKind;
use crate::cloud::{Intrinsics, RigidTransform};
use crate::error::{Error, Result};

pub const OCCLUDER_LABEL: &str = "occluder";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
    /// World <- camera.
    pub pose: RigidTransform,
}

impl Camera {
    pub const DEFAULT_WIDTH: usize = 320;
    pub const DEFAULT_HEIGHT: usize = 240;

    pub fn default_intrinsics() -> Intrinsics {
        Intrinsics {
            fx: 280.0,
            fy: 280.0,
            cx: 160.0,
            cy: 120.0,
        }
    }

    pub fn with_pose(pose: RigidTransform) -> Self {
        Self {
            width: Self::DEFAULT_WIDTH,
            height: Self::DEFAULT_HEIGHT,
            intrinsics: Self::default_intrinsics(),
            pose,
        }
    }

    pub fn eye(&self) -> Vector3<f64> {
        self.pose.translation
    }
}

/// Camera at `eye` looking at `target`, image y pointing away from `up`.
pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<RigidTransform> {
    let forward = target - eye;
    if forward.norm() == 0.0 {
        return Err(Error::InvalidParams("camera eye coincides with its target".into()));
    }
    let forward = forward.normalize();
    let right = forward.cross(&up);
    if right.norm() < 1e-9 {
        return Err(Error::InvalidParams("camera up vector is parallel to the view direction".into()));
    }
    let right = right.normalize();
    let down = forward.cross(&right);
    Ok(RigidTransform::new(Matrix3::from_columns(&[right, down, forward]), eye))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    /// Instance id written to the label image; positive.
    pub id: u32,
    pub label: String,
    pub kind: PrimitiveKind,
    /// World <- object.
    pub pose: RigidTransform,
}

impl SceneObject {
    pub fn world_center(&self) -> Vector3<f64> {
        self.pose.apply_vector(&self.kind.center())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub camera: Camera,
    pub objects: Vec<SceneObject>,
    /// Standard deviation of Gaussian depth jitter in metres; 0 disables it.
    pub depth_noise: f64,
}

impl SceneSpec {
    pub fn new(camera: Camera, seed: u64) -> Self {
        Self {
            seed,
            camera,
            objects: Vec::new(),
            depth_noise: 0.0,
        }
    }

    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn next_id(&self) -> u32 {
        self.objects.iter().map(|o| o.id).max().unwrap_or(0) + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.camera.width == 0 || self.camera.height == 0 {
            return Err(Error::InvalidParams("image must be non-empty".into()));
        }
        if !self.camera.pose.is_proper(1e-9) {
            return Err(Error::InvalidParams("camera rotation is not a proper rotation".into()));
        }
        if !(self.depth_noise >= 0.0) {
            return Err(Error::InvalidParams("depth noise must be non-negative".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for o in &self.objects {
            o.kind.validate()?;
            if o.id == 0 || !ids.insert(o.id) {
                return Err(Error::InvalidParams(format!("object id {} is zero or repeated", o.id)));
            }
            if o.label.is_empty() || o.label.chars().any(char::is_whitespace) {
                return Err(Error::InvalidParams(format!("bad label '{}'", o.label)));
            }
            if !o.pose.is_proper(1e-9) {
                return Err(Error::InvalidParams(format!("object {} has an improper rotation", o.id)));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let cam = &self.camera;
        let k = &cam.intrinsics;
        let _ = writeln!(out, "scene 1");
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "image {} {}", cam.width, cam.height);
        let _ = writeln!(out, "intrinsics {} {} {} {}", k.fx, k.fy, k.cx, k.cy);
        let _ = writeln!(out, "camera_rotation {}", join(rotation_rows(&cam.pose.rotation)));
        let _ = writeln!(out, "camera_translation {}", join(cam.pose.translation.iter().copied()));
        let _ = writeln!(out, "depth_noise {}", self.depth_noise);
        for o in &self.objects {
            let _ = writeln!(
                out,
                "object {} {} {} {} pose {} {}",
                o.id,
                o.label,
                o.kind.name(),
                join(o.kind.dims()),
                join(rotation_rows(&o.pose.rotation)),
                join(o.pose.translation.iter().copied())
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut seed = None;
        let mut image = None;
        let mut intrinsics = None;
        let mut rotation = None;
        let mut translation = None;
        let mut depth_noise = 0.0;
        let mut objects = Vec::new();
        let mut version_seen = false;
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let rest: Vec<&str> = parts.collect();
            match key {
                "scene" => {
                    if rest != ["1"] {
                        return Err(Error::parse(n, "unsupported scene version"));
                    }
                    version_seen = true;
                }
                "seed" => seed = Some(numbers::<u64>(n, &rest, 1)?[0]),
                "image" => image = Some(numbers::<usize>(n, &rest, 2)?),
                "intrinsics" => intrinsics = Some(numbers::<f64>(n, &rest, 4)?),
                "camera_rotation" => rotation = Some(numbers::<f64>(n, &rest, 9)?),
                "camera_translation" => translation = Some(numbers::<f64>(n, &rest, 3)?),
                "depth_noise" => depth_noise = numbers::<f64>(n, &rest, 1)?[0],
                "object" => objects.push(parse_object(n, &rest)?),
                other => return Err(Error::parse(n, format!("unknown key '{other}'"))),
            }
        }
        if !version_seen {
            return Err(Error::parse(1, "missing 'scene 1' header"));
        }
        let missing = |what: &str| Error::parse(0, format!("missing '{what}' line"));
        let image = image.ok_or_else(|| missing("image"))?;
        let k = intrinsics.ok_or_else(|| missing("intrinsics"))?;
        let r = rotation.ok_or_else(|| missing("camera_rotation"))?;
        let t = translation.ok_or_else(|| missing("camera_translation"))?;
        let spec = SceneSpec {
            seed: seed.ok_or_else(|| missing("seed"))?,
            camera: Camera {
                width: image[0],
                height: image[1],
                intrinsics: Intrinsics {
                    fx: k[0],
                    fy: k[1],
                    cx: k[2],
                    cy: k[3],
                },
                pose: RigidTransform::new(Matrix3::from_row_slice(&r), Vector3::new(t[0], t[1], t[2])),
            },
            objects,
            depth_noise,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn rotation_rows(m: &Matrix3<f64>) -> Vec<f64> {
    (0..3).flat_map(|r| (0..3).map(move |c| m[(r, c)])).collect()
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn numbers<T: std::str::FromStr>(line: usize, fields: &[&str], count: usize) -> Result<Vec<T>> {
    if fields.len() != count {
        return Err(Error::parse(line, format!("expected {count} values, found {}", fields.len())));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<T>()
                .map_err(|_| Error::parse(line, format!("invalid number '{f}'")))
        })
        .collect()
}

fn parse_object(line: usize, fields: &[&str]) -> Result<SceneObject> {
    let pose_at = fields
        .iter()
        .position(|&f| f == "pose")
        .ok_or_else(|| Error::parse(line, "object line lacks 'pose'"))?;
    if pose_at < 3 {
        return Err(Error::parse(line, "object line needs id, label and kind"));
    }
    let id = numbers::<u32>(line, &fields[..1], 1)?[0];
    let label = fields[1].to_string();
    let dims = numbers::<f64>(line, &fields[3..pose_at], pose_at - 3)?;
    let kind = PrimitiveKind::from_parts(fields[2], &dims).map_err(|e| Error::parse(line, e.to_string()))?;
    let pose = numbers::<f64>(line, &fields[pose_at + 1..], 12)?;
    Ok(SceneObject {
        id,
        label,
        kind,
        pose: RigidTransform::new(
            Matrix3::from_row_slice(&pose[..9]),
            Vector3::new(pose[9], pose[10], pose[11]),
        ),
    })
}
