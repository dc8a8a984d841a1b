//! Point clouds, depth scenes, pinhole backprojection and the text formats
//! used to store both.
//!
//! Cloud files are ASCII, one `x y z` triple per line, `#` starting a comment.
//! Depth scene files are a small text container:
//!
//! ```text
//! depthscene 1
//! size <width> <height>
//! intrinsics <fx> <fy> <cx> <cy>
//! rotation <r00> <r01> <r02> <r10> ... <r22>
//! translation <tx> <ty> <tz>
//! depth
//! <height rows of width depth values, meters, 0 = invalid>
//! labels
//! <height rows of width instance ids, 0 = background>
//! ```
//!
//! Reals are written with the shortest representation that parses back to
//! the same `f64`, so both formats round-trip bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn coord(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl From<Vector3<f64>> for Point3 {
    fn from(v: Vector3<f64>) -> Self {
        Self::from_vector(&v)
    }
}

/// Coordinate frame a cloud is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Frame {
    #[default]
    Camera,
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, frame: Frame) -> Self {
        Self { points, frame }
    }

    pub fn camera(points: Vec<Point3>) -> Self {
        Self::new(points, Frame::Camera)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.to_vector());
        Some(Point3::from(sum / self.points.len() as f64))
    }
}

/// Pinhole intrinsics in pixels. Pixel `(u, v)` is column `u`, row `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Point3 {
        Point3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        )
    }

    /// Image coordinates of a camera-frame point in front of the camera.
    pub fn project(&self, p: &Point3) -> (f64, f64) {
        (
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        )
    }
}

/// Rigid transform `p -> rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.to_vector() + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn is_proper(&self, tol: f64) -> bool {
        let r = &self.rotation;
        let gram = r.transpose() * r - Matrix3::identity();
        gram.iter().all(|v| v.abs() <= tol) && (r.determinant() - 1.0).abs() <= tol
    }
}

/// A depth image with its instance segmentation, intrinsics and camera pose
/// (world <- camera).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthScene {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    labels: Vec<u32>,
    pub intrinsics: Intrinsics,
    pub camera_pose: RigidTransform,
}

impl DepthScene {
    pub fn new(
        width: usize,
        height: usize,
        depth: Vec<f64>,
        labels: Vec<u32>,
        intrinsics: Intrinsics,
        camera_pose: RigidTransform,
    ) -> Result<Self> {
        let n = width * height;
        if depth.len() != n || labels.len() != n {
            return Err(Error::InvalidParams(format!(
                "depth ({}) and labels ({}) must both hold {width}x{height} values",
                depth.len(),
                labels.len()
            )));
        }
        if depth.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidParams(
                "depth values must be finite and non-negative".into(),
            ));
        }
        if !camera_pose.is_proper(1e-9) {
            return Err(Error::InvalidParams(
                "camera rotation is not a proper rotation".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            depth,
            labels,
            intrinsics,
            camera_pose,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn depth_at(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }

    pub fn label_at(&self, u: usize, v: usize) -> u32 {
        self.labels[v * self.width + u]
    }

    /// Distinct non-zero instance ids, ascending.
    pub fn instance_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.labels.iter().copied().filter(|&l| l != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn pixel_count(&self, instance_id: u32) -> usize {
        self.labels.iter().filter(|&&l| l == instance_id).count()
    }

    pub fn pixel_point(&self, u: usize, v: usize) -> Point3 {
        self.intrinsics
            .backproject(u as f64, v as f64, self.depth_at(u, v))
    }

    /// Camera-frame point cloud of one instance, one point per labeled pixel
    /// with valid depth, in row-major pixel order.
    pub fn backproject(&self, instance_id: u32) -> Result<PointCloud> {
        let mut seen = false;
        let mut points = Vec::new();
        for v in 0..self.height {
            for u in 0..self.width {
                if self.label_at(u, v) != instance_id {
                    continue;
                }
                seen = true;
                let d = self.depth_at(u, v);
                if d > 0.0 {
                    points.push(self.pixel_point(u, v));
                }
            }
        }
        if !seen {
            return Err(Error::UnknownInstance(instance_id));
        }
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        Ok(PointCloud::camera(points))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.depth.len() * 4);
        let k = &self.intrinsics;
        let r = &self.camera_pose.rotation;
        let t = &self.camera_pose.translation;
        let _ = writeln!(out, "depthscene 1");
        let _ = writeln!(out, "size {} {}", self.width, self.height);
        let _ = writeln!(out, "intrinsics {} {} {} {}", k.fx, k.fy, k.cx, k.cy);
        let _ = write!(out, "rotation");
        for i in 0..3 {
            for j in 0..3 {
                let _ = write!(out, " {}", r[(i, j)]);
            }
        }
        out.push('\n');
        let _ = writeln!(out, "translation {} {} {}", t.x, t.y, t.z);
        out.push_str("depth\n");
        for row in self.depth.chunks(self.width.max(1)) {
            write_row(&mut out, row.iter());
        }
        out.push_str("labels\n");
        for row in self.labels.chunks(self.width.max(1)) {
            write_row(&mut out, row.iter());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        fn header<'a>(
            lines: &mut impl Iterator<Item = (usize, &'a str)>,
            key: &str,
        ) -> Result<(usize, Vec<String>)> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::parse(0, format!("missing '{key}' line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::parse(n, format!("expected '{key}'")));
            }
            Ok((n, parts.map(str::to_owned).collect()))
        }

        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (n, version) = header(&mut lines, "depthscene")?;
        if version != ["1"] {
            return Err(Error::parse(n, "unsupported depth scene version"));
        }
        let (n, size) = header(&mut lines, "size")?;
        let size = parse_fields::<usize>(n, &size, 2)?;
        let (width, height) = (size[0], size[1]);
        let (n, k) = header(&mut lines, "intrinsics")?;
        let k = parse_fields::<f64>(n, &k, 4)?;
        let (n, r) = header(&mut lines, "rotation")?;
        let r = parse_fields::<f64>(n, &r, 9)?;
        let (n, t) = header(&mut lines, "translation")?;
        let t = parse_fields::<f64>(n, &t, 3)?;
        let (n, rest) = header(&mut lines, "depth")?;
        if !rest.is_empty() {
            return Err(Error::parse(n, "unexpected tokens after 'depth'"));
        }
        let mut depth = Vec::with_capacity(width * height);
        for _ in 0..height {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::parse(0, "truncated depth grid"))?;
            let row: Vec<&str> = line.split_whitespace().collect();
            depth.extend(parse_fields::<f64>(n, &row, width)?);
        }
        let (n, rest) = header(&mut lines, "labels")?;
        if !rest.is_empty() {
            return Err(Error::parse(n, "unexpected tokens after 'labels'"));
        }
        let mut labels = Vec::with_capacity(width * height);
        for _ in 0..height {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::parse(0, "truncated label grid"))?;
            let row: Vec<&str> = line.split_whitespace().collect();
            labels.extend(parse_fields::<u32>(n, &row, width)?);
        }
        if let Some((n, _)) = lines.next() {
            return Err(Error::parse(n, "trailing content after label grid"));
        }

        let rotation = Matrix3::from_row_slice(&r);
        let pose = RigidTransform::new(rotation, Vector3::new(t[0], t[1], t[2]));
        let intrinsics = Intrinsics {
            fx: k[0],
            fy: k[1],
            cx: k[2],
            cy: k[3],
        };
        DepthScene::new(width, height, depth, labels, intrinsics, pose)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn write_row<T: std::fmt::Display>(out: &mut String, row: impl Iterator<Item = T>) {
    let mut first = true;
    for v in row {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

fn parse_fields<T: std::str::FromStr>(
    line: usize,
    fields: &[impl AsRef<str>],
    expected: usize,
) -> Result<Vec<T>> {
    if fields.len() != expected {
        return Err(Error::parse(
            line,
            format!("expected {expected} values, found {}", fields.len()),
        ));
    }
    fields
        .iter()
        .map(|f| {
            f.as_ref()
                .parse::<T>()
                .map_err(|_| Error::parse(line, format!("invalid value '{}'", f.as_ref())))
        })
        .collect()
}

pub fn cloud_to_text(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 32);
    for p in &cloud.points {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

pub fn cloud_from_text(text: &str, frame: Frame) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let v = parse_fields::<f64>(i + 1, &fields, 3)?;
        let p = Point3::new(v[0], v[1], v[2]);
        if !p.is_finite() {
            return Err(Error::parse(i + 1, "non-finite coordinate"));
        }
        points.push(p);
    }
    Ok(PointCloud::new(points, frame))
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, cloud_to_text(cloud)).map_err(|e| Error::io(path, e))
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    cloud_from_text(&text, Frame::Camera)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intrinsics() -> Intrinsics {
        Intrinsics {
            fx: 100.0,
            fy: 120.0,
            cx: 1.0,
            cy: 1.0,
        }
    }

    fn scene_3x3() -> DepthScene {
        // labels: instance 5 at (u=0,v=0) and (u=2,v=1); instance 7 at (1,2)
        // with invalid depth.
        let depth = vec![0.8, 0.0, 0.0, 0.0, 0.0, 1.5, 0.0, 0.0, 0.0];
        let labels = vec![5, 0, 0, 0, 0, 5, 0, 7, 0];
        DepthScene::new(3, 3, depth, labels, intrinsics(), RigidTransform::identity()).unwrap()
    }

    #[test]
    fn principal_point_maps_to_optical_axis() {
        let k = intrinsics();
        assert_eq!(k.backproject(k.cx, k.cy, 1.0), Point3::new(0.0, 0.0, 1.0));
        let p = k.backproject(k.cx + k.fx, k.cy, 2.0);
        assert_eq!(p, Point3::new(2.0, 0.0, 2.0));
    }

    #[test]
    fn backprojects_labeled_pixels_in_row_major_order() {
        let cloud = scene_3x3().backproject(5).unwrap();
        // (u,v,d) = (0,0,0.8) and (2,1,1.5)
        let expected = [
            Point3::new((0.0 - 1.0) * 0.8 / 100.0, (0.0 - 1.0) * 0.8 / 120.0, 0.8),
            Point3::new((2.0 - 1.0) * 1.5 / 100.0, (1.0 - 1.0) * 1.5 / 120.0, 1.5),
        ];
        assert_eq!(cloud.points, expected);
        assert_eq!(cloud.frame, Frame::Camera);
    }

    #[test]
    fn backprojection_errors() {
        let scene = scene_3x3();
        assert!(matches!(scene.backproject(9), Err(Error::UnknownInstance(9))));
        assert!(matches!(scene.backproject(7), Err(Error::EmptyCloud)));
    }

    #[test]
    fn projection_recovers_pixel() {
        let scene = scene_3x3();
        let cloud = scene.backproject(5).unwrap();
        let (u, v) = scene.intrinsics.project(&cloud.points[1]);
        assert!((u - 2.0).abs() < 0.5 && (v - 1.0).abs() < 0.5);
    }

    #[test]
    fn cloud_text_round_trip() {
        let cloud = PointCloud::camera(vec![Point3::new(0.1, 0.2, 0.3)]);
        let back = cloud_from_text(&cloud_to_text(&cloud), Frame::Camera).unwrap();
        assert_eq!(back, cloud);
    }

    #[test]
    fn cloud_comments_and_arity() {
        let c = cloud_from_text("# comment\n0 0 0\n", Frame::Camera).unwrap();
        assert_eq!(c.points, vec![Point3::new(0.0, 0.0, 0.0)]);
        match cloud_from_text("0 0\n", Frame::Camera) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn cloud_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.xyz");
        let cloud = PointCloud::camera(vec![
            Point3::new(0.1, -0.2, 1.0 / 3.0),
            Point3::new(1e-300, 12345.678, -0.0),
        ]);
        save_cloud(&cloud, &path).unwrap();
        let back = load_cloud(&path).unwrap();
        for (a, b) in cloud.points.iter().zip(&back.points) {
            assert_eq!(a.x.to_bits(), b.x.to_bits());
            assert_eq!(a.y.to_bits(), b.y.to_bits());
            assert_eq!(a.z.to_bits(), b.z.to_bits());
        }
    }

    #[test]
    fn depth_scene_text_round_trip() {
        let mut scene = scene_3x3();
        scene.camera_pose = RigidTransform::new(
            *nalgebra::Rotation3::from_euler_angles(0.3, -0.2, 1.1).matrix(),
            Vector3::new(0.1, 2.0 / 3.0, -4.0),
        );
        let back = DepthScene::from_text(&scene.to_text()).unwrap();
        assert_eq!(back, scene);
        assert_eq!(back.to_text(), scene.to_text());
    }

    #[test]
    fn depth_scene_rejects_bad_rotation() {
        let r = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        let err = DepthScene::new(
            1,
            1,
            vec![1.0],
            vec![1],
            intrinsics(),
            RigidTransform::new(r, Vector3::zeros()),
        );
        assert!(matches!(err, Err(Error::InvalidParams(_))));
    }
}
