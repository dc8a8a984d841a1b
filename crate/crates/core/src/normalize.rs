//! View normalization: PCA bounding box, axis alignment, first-octant
//! translation, in-place mirroring and the final rotation about the y-axis.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::cloud::{Frame, Point3, PointCloud};
use crate::error::{Error, Result};

/// Covariance rank below this fraction of the largest eigenvalue counts as
/// missing.
const RANK_TOL: f64 = 1e-12;
/// Eigenvalue gaps below this fraction of the largest eigenvalue leave the
/// principal axes undetermined; the box is then fitted inside that subspace.
const EIGEN_GAP_TOL: f64 = 1e-9;
/// Third moments below this (relative to extent cubed) are treated as zero.
const MOMENT_TOL: f64 = 1e-12;
/// Number of leading points whose pairwise directions seed the box search for
/// fully isotropic clouds.
const ISOTROPIC_SEED_POINTS: usize = 32;

/// Oriented bounding box. Column `k` of `rotation` is box axis `k`; the
/// extents are sorted in descending order and `det(rotation) = +1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObbFrame {
    pub rotation: Matrix3<f64>,
    pub extents: [f64; 3],
    pub center: Point3,
}

impl ObbFrame {
    pub fn axis(&self, k: usize) -> Vector3<f64> {
        self.rotation.column(k).into_owned()
    }

    pub fn volume(&self) -> f64 {
        self.extents.iter().product()
    }

    /// Area of the face orthogonal to each axis.
    pub fn face_areas(&self) -> [f64; 3] {
        let e = self.extents;
        [e[1] * e[2], e[0] * e[2], e[0] * e[1]]
    }
}

/// PCA approximation of the minimal-volume bounding box.
///
/// Principal axes come from the covariance of the mean-centred points. When
/// eigenvalues coincide the PCA axes are arbitrary, so the box is fitted by an
/// exact minimum-area rectangle inside the degenerate plane (or a search over
/// point-pair directions for fully isotropic clouds). Axes are then ordered by
/// descending extent, the first two signed so their third moment is
/// non-negative, and the third completed as their cross product.
pub fn compute_obb(points: &[Point3]) -> Result<ObbFrame> {
    if points.len() < 3 {
        return Err(Error::DegenerateCloud(format!(
            "{} points cannot span a plane",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean = points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.to_vector())
        / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.to_vector() - mean;
        cov += d * d.transpose();
    }
    cov /= n;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda: [f64; 3] = order.map(|i| eig.eigenvalues[i].max(0.0));
    let mut axes: [Vector3<f64>; 3] = order.map(|i| eig.eigenvectors.column(i).into_owned());

    if lambda[0] <= 0.0 || lambda[1] <= RANK_TOL * lambda[0] {
        return Err(Error::DegenerateCloud(
            "covariance has rank below 2 (collinear or coincident points)".into(),
        ));
    }

    let tied = |a: f64, b: f64| a - b <= EIGEN_GAP_TOL * lambda[0];
    match (tied(lambda[0], lambda[1]), tied(lambda[1], lambda[2])) {
        (true, true) => axes = isotropic_box_axes(points, axes),
        (true, false) => {
            let (a, b) = min_area_axes(points, &axes[0], &axes[1]);
            axes[0] = a;
            axes[1] = b;
        }
        (false, true) => {
            let (a, b) = min_area_axes(points, &axes[1], &axes[2]);
            axes[1] = a;
            axes[2] = b;
        }
        (false, false) => {}
    }

    let extent_of = |axis: &Vector3<f64>| {
        let (lo, hi) = projection_range(points, axis);
        hi - lo
    };
    let mut ranked: Vec<(f64, Vector3<f64>)> = axes.iter().map(|a| (extent_of(a), *a)).collect();
    // Stable sort keeps the eigenvalue order among equal extents.
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let scale = ranked[0].0;
    let a0 = fix_sign(points, &mean, ranked[0].1, scale);
    let a1 = fix_sign(points, &mean, ranked[1].1, scale);
    let a2 = a0.cross(&a1).normalize();
    let final_axes = [a0, a1, a2];

    let mut extents = [0.0; 3];
    let mut center_local = [0.0; 3];
    for k in 0..3 {
        let (lo, hi) = projection_range(points, &final_axes[k]);
        extents[k] = hi - lo;
        center_local[k] = 0.5 * (lo + hi);
    }
    let rotation = Matrix3::from_columns(&final_axes);
    let center = rotation * Vector3::new(center_local[0], center_local[1], center_local[2]);
    Ok(ObbFrame {
        rotation,
        extents,
        center: Point3::from(center),
    })
}

fn projection_range(points: &[Point3], axis: &Vector3<f64>) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let t = p.to_vector().dot(axis);
        (lo.min(t), hi.max(t))
    })
}

fn fix_sign(points: &[Point3], mean: &Vector3<f64>, axis: Vector3<f64>, scale: f64) -> Vector3<f64> {
    let m3: f64 = points
        .iter()
        .map(|p| (p.to_vector() - mean).dot(&axis).powi(3))
        .sum::<f64>()
        / points.len() as f64;
    if m3.abs() >= MOMENT_TOL * scale.powi(3).max(f64::MIN_POSITIVE) {
        return if m3 < 0.0 { -axis } else { axis };
    }
    let mut dominant = 0;
    for k in 1..3 {
        if axis[k].abs() > axis[dominant].abs() {
            dominant = k;
        }
    }
    if axis[dominant] < 0.0 {
        -axis
    } else {
        axis
    }
}

/// Exact minimum-area rectangle of the points projected onto the plane
/// spanned by orthonormal `a`, `b`, returned as the rectangle's axes.
fn min_area_axes(points: &[Point3], a: &Vector3<f64>, b: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    match min_area_rectangle(points, a, b) {
        Some((_, u, v)) => (u, v),
        None => (*a, *b),
    }
}

fn min_area_rectangle(
    points: &[Point3],
    a: &Vector3<f64>,
    b: &Vector3<f64>,
) -> Option<(f64, Vector3<f64>, Vector3<f64>)> {
    let projected: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let v = p.to_vector();
            (v.dot(a), v.dot(b))
        })
        .collect();
    let hull = convex_hull(projected);
    if hull.len() < 3 {
        return None;
    }
    let mut best: Option<(f64, (f64, f64))> = None;
    for i in 0..hull.len() {
        let (p, q) = (hull[i], hull[(i + 1) % hull.len()]);
        let (dx, dy) = (q.0 - p.0, q.1 - p.1);
        let len = dx.hypot(dy);
        if len == 0.0 {
            continue;
        }
        let e = (dx / len, dy / len);
        let (mut lo_e, mut hi_e, mut lo_n, mut hi_n) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for h in &hull {
            let te = h.0 * e.0 + h.1 * e.1;
            let tn = -h.0 * e.1 + h.1 * e.0;
            lo_e = lo_e.min(te);
            hi_e = hi_e.max(te);
            lo_n = lo_n.min(tn);
            hi_n = hi_n.max(tn);
        }
        let area = (hi_e - lo_e) * (hi_n - lo_n);
        match best {
            Some((best_area, _)) if area >= best_area * (1.0 - 1e-12) => {}
            _ => best = Some((area, e)),
        }
    }
    let (area, e) = best?;
    let u = (a * e.0 + b * e.1).normalize();
    let v = (a * -e.1 + b * e.0).normalize();
    Some((area, u, v))
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for &p in pts.iter() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Box search for clouds whose covariance is a multiple of the identity.
/// Candidate first axes are the PCA basis and the directions between pairs of
/// leading points; each is completed by the minimum-area rectangle in its
/// orthogonal plane and the smallest resulting volume wins.
fn isotropic_box_axes(points: &[Point3], pca: [Vector3<f64>; 3]) -> [Vector3<f64>; 3] {
    let mut candidates = vec![pca[0]];
    let seeds = &points[..points.len().min(ISOTROPIC_SEED_POINTS)];
    let span = seeds
        .iter()
        .flat_map(|p| [p.x.abs(), p.y.abs(), p.z.abs()])
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    for i in 0..seeds.len() {
        for j in (i + 1)..seeds.len() {
            let d = seeds[j].to_vector() - seeds[i].to_vector();
            if d.norm() > 1e-9 * span {
                candidates.push(d.normalize());
            }
        }
    }

    let mut best: Option<(f64, [Vector3<f64>; 3])> = None;
    for axis in candidates {
        let (b, c) = orthonormal_complement(&axis);
        let (lo, hi) = projection_range(points, &axis);
        let Some((area, u, v)) = min_area_rectangle(points, &b, &c) else {
            continue;
        };
        let volume = (hi - lo) * area;
        match best {
            Some((best_volume, _)) if volume >= best_volume * (1.0 - 1e-12) => {}
            _ => best = Some((volume, [axis, u, v])),
        }
    }
    best.map(|(_, axes)| axes).unwrap_or(pca)
}

fn orthonormal_complement(axis: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let mut helper = 0;
    for k in 1..3 {
        if axis[k].abs() < axis[helper].abs() {
            helper = k;
        }
    }
    let mut h = Vector3::zeros();
    h[helper] = 1.0;
    let b = axis.cross(&h).normalize();
    let c = axis.cross(&b).normalize();
    (b, c)
}

/// Mirror flags for the three normalized axes, applied about the box
/// mid-planes.
pub type MirrorMask = [bool; 3];

/// All eight mirror masks in bit order (bit `k` set mirrors axis `k`).
pub fn all_mirror_masks() -> [MirrorMask; 8] {
    std::array::from_fn(|bits| [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0])
}

/// The affine map taking camera-frame points into the normalized frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizingTransform {
    /// Camera -> box-aligned rotation (transpose of the box rotation).
    pub rotation: Matrix3<f64>,
    /// Per-axis minimum after rotation, subtracted to reach the first octant.
    pub offset: Vector3<f64>,
    /// Per-axis maximum after translation, used as the mirror span.
    pub span: Vector3<f64>,
    pub mirror_mask: MirrorMask,
    pub alpha: f64,
}

impl NormalizingTransform {
    /// Steps (1)-(3): rotate, translate to the first octant, mirror.
    pub fn apply_pre_alpha(&self, p: &Point3) -> Point3 {
        let mut q = self.rotation * p.to_vector() - self.offset;
        for k in 0..3 {
            if self.mirror_mask[k] {
                q[k] = self.span[k] - q[k];
            }
        }
        Point3::from(q)
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        rotate_about_y(&self.apply_pre_alpha(p), self.alpha)
    }
}

/// A view-normalized cloud together with how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedCloud {
    pub cloud: PointCloud,
    pub alpha: f64,
    pub mirror_mask: MirrorMask,
    pub source_obb: ObbFrame,
    pub transform: NormalizingTransform,
}

impl AlignedCloud {
    pub fn points(&self) -> &[Point3] {
        &self.cloud.points
    }
}

pub fn rotate_about_y(p: &Point3, alpha: f64) -> Point3 {
    let (s, c) = alpha.sin_cos();
    Point3::new(c * p.x + s * p.z, p.y, -s * p.x + c * p.z)
}

/// Reflects every point about the mid-planes of its axis-aligned bounding box
/// for the axes selected in `mask`.
pub fn mirror_in_place(points: &mut [Point3], mask: MirrorMask) {
    for k in 0..3 {
        if !mask[k] {
            continue;
        }
        let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.coord(k)), hi.max(p.coord(k)))
        });
        for p in points.iter_mut() {
            match k {
                0 => p.x = lo + hi - p.x,
                1 => p.y = lo + hi - p.y,
                _ => p.z = lo + hi - p.z,
            }
        }
    }
}

/// Builds the normalizing transform for a cloud without applying it.
pub fn normalizing_transform(
    cloud: &PointCloud,
    alpha: f64,
    mirror_mask: MirrorMask,
) -> Result<(ObbFrame, NormalizingTransform)> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let obb = compute_obb(&cloud.points)?;
    let rotation = obb.rotation.transpose();
    let mut lo = Vector3::repeat(f64::INFINITY);
    for p in &cloud.points {
        let q = rotation * p.to_vector();
        for k in 0..3 {
            lo[k] = lo[k].min(q[k]);
        }
    }
    let mut span = Vector3::repeat(0.0f64);
    for p in &cloud.points {
        let q = rotation * p.to_vector() - lo;
        for k in 0..3 {
            span[k] = span[k].max(q[k]);
        }
    }
    Ok((
        obb,
        NormalizingTransform {
            rotation,
            offset: lo,
            span,
            mirror_mask,
            alpha,
        },
    ))
}

/// Aligns the bounding box with the coordinate axes (largest extent on x),
/// translates into the first octant, mirrors per `mirror_mask` and finally
/// rotates by `alpha` about the y-axis.
pub fn normalize(cloud: &PointCloud, alpha: f64, mirror_mask: MirrorMask) -> Result<AlignedCloud> {
    let (obb, transform) = normalizing_transform(cloud, alpha, mirror_mask)?;
    let points = cloud.points.iter().map(|p| transform.apply(p)).collect();
    Ok(AlignedCloud {
        cloud: PointCloud::new(points, Frame::Normalized),
        alpha,
        mirror_mask,
        source_obb: obb,
        transform,
    })
}
