//! Test-time recognition: occlusion detection, occluded-end re-alignment,
//! model-set selection, slice counting and max-probability fusion.

use serde::Serialize;

use crate::classifier::ProbClassifier;
use crate::cloud::{DepthScene, Point3, PointCloud};
use crate::descriptor::{cloud_diagrams, SlicedDiagrams};
use crate::error::{Error, Result};
use crate::library::{camera_direction, viewed_axis, ModelLibrary, ViewSet};
use crate::normalize::{normalize, AlignedCloud, NormalizingTransform};

pub const RESULT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OccludedEnd {
    LowZ,
    HighZ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScalePolicy {
    /// Depth is metric: record the distance ratio, never rescale.
    #[default]
    Metric,
    /// Scale the cloud about the camera by `train_scale / distance` when the
    /// ratio is outside tolerance.
    Rescale,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecognitionConfig {
    /// Area ratio under which two faces count as comparable.
    pub tau_ratio: f64,
    /// Depth margin for an occluder to count as in front, metres.
    pub tau_d: f64,
    pub scale_tolerance: f64,
    pub scale_policy: ScalePolicy,
}

impl Default for RecognitionConfig {
    fn default() -> Self {
        Self {
            tau_ratio: 1.15,
            tau_d: 0.01,
            scale_tolerance: 0.05,
            scale_policy: ScalePolicy::Metric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OcclusionInfo {
    pub occluded: bool,
    /// Pixels just outside the mask that belong to a nearer instance.
    pub boundary_pixels: Vec<(usize, usize)>,
    /// Mask pixels adjacent to those boundary pixels.
    pub occluded_object_pixels: Vec<(usize, usize)>,
}

const NEIGHBOURS: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// Scans the 8-neighbourhood of the instance mask for pixels of other
/// instances that are nearer than an adjacent mask pixel by more than `tau_d`.
pub fn detect_occlusion(scene: &DepthScene, instance_id: u32, tau_d: f64) -> Result<OcclusionInfo> {
    let (w, h) = (scene.width(), scene.height());
    let mut found = false;
    let mut boundary = std::collections::BTreeSet::new();
    let mut inner = std::collections::BTreeSet::new();
    for v in 0..h {
        for u in 0..w {
            if scene.label_at(u, v) != instance_id {
                continue;
            }
            found = true;
            let d = scene.depth_at(u, v);
            if d <= 0.0 {
                continue;
            }
            for (du, dv) in NEIGHBOURS {
                let (nu, nv) = (u as isize + du, v as isize + dv);
                if nu < 0 || nv < 0 || nu >= w as isize || nv >= h as isize {
                    continue;
                }
                let (nu, nv) = (nu as usize, nv as usize);
                let other = scene.label_at(nu, nv);
                let nd = scene.depth_at(nu, nv);
                if other != 0 && other != instance_id && nd > 0.0 && nd < d - tau_d {
                    boundary.insert((nv, nu));
                    inner.insert((v, u));
                }
            }
        }
    }
    if !found {
        return Err(Error::UnknownInstance(instance_id));
    }
    let swap = |s: std::collections::BTreeSet<(usize, usize)>| s.into_iter().map(|(v, u)| (u, v)).collect::<Vec<_>>();
    Ok(OcclusionInfo {
        occluded: !boundary.is_empty(),
        boundary_pixels: swap(boundary),
        occluded_object_pixels: swap(inner),
    })
}

/// An object to recognize, in camera coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub instance_id: u32,
    pub cloud: PointCloud,
    pub occluded: bool,
    /// Camera-frame object points adjacent to nearer occluders.
    pub occlusion_points: Vec<Point3>,
}

impl Observation {
    pub fn from_scene(scene: &DepthScene, instance_id: u32, cfg: &RecognitionConfig) -> Result<Self> {
        let cloud = scene.backproject(instance_id)?;
        let info = detect_occlusion(scene, instance_id, cfg.tau_d)?;
        Ok(Self {
            instance_id,
            cloud,
            occluded: info.occluded,
            occlusion_points: info
                .occluded_object_pixels
                .iter()
                .map(|&(u, v)| scene.pixel_point(u, v))
                .collect(),
        })
    }

    pub fn unoccluded(instance_id: u32, cloud: PointCloud) -> Self {
        Self {
            instance_id,
            cloud,
            occluded: false,
            occlusion_points: Vec::new(),
        }
    }
}

/// The z-half of the normalized cloud holding most occlusion points. Ties
/// and empty input give `HighZ`.
pub fn occluded_end(aligned: &AlignedCloud, occlusion_points: &[Point3]) -> OccludedEnd {
    let (lo, hi) = aligned
        .points()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.z), hi.max(p.z)));
    let mid = 0.5 * (lo + hi);
    let low = occlusion_points
        .iter()
        .filter(|p| aligned.transform.apply(p).z < mid)
        .count();
    if 2 * low > occlusion_points.len() {
        OccludedEnd::LowZ
    } else {
        OccludedEnd::HighZ
    }
}

/// Half-turn about the y axis.
pub fn flip_about_y(p: &Point3) -> Point3 {
    Point3::new(-p.x, p.y, -p.z)
}

/// Model sets plausible for the viewed face given the other two face areas:
/// every rank (largest, middle, smallest) the viewed area could hold when
/// ratios under `tau_ratio` count as ties. Returned in priority order.
pub fn select_model_sets(viewed: f64, others: [f64; 2], tau_ratio: f64) -> Vec<ViewSet> {
    let (b, c) = if others[0] >= others[1] {
        (others[0], others[1])
    } else {
        (others[1], others[0])
    };
    let a = viewed;
    let mut sets = Vec::new();
    if a * tau_ratio > b {
        sets.push(ViewSet::Front);
    }
    if a < tau_ratio * b && a * tau_ratio > c {
        sets.push(ViewSet::Side);
    }
    if a < tau_ratio * c {
        sets.push(ViewSet::Top);
    }
    sets
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModelKey {
    pub view_set: &'static str,
    pub n_slices: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub view_set: ViewSet,
    pub n_slices: usize,
    pub probabilities: Vec<f64>,
}

/// The single most probable (class, probability) over all candidates. Ties
/// prefer front over side over top, then fewer slices, then the lower class
/// index.
pub fn fuse(candidates: &[Candidate]) -> Option<(usize, f64, usize)> {
    let mut best: Option<(usize, f64, usize)> = None;
    let key = |c: &Candidate| (c.view_set, c.n_slices);
    for (ci, cand) in candidates.iter().enumerate() {
        for (k, &p) in cand.probabilities.iter().enumerate() {
            let better = match best {
                None => true,
                Some((bk, bp, bi)) => {
                    p > bp || (p == bp && (key(cand), k) < (key(&candidates[bi]), bk))
                }
            };
            if better {
                best = Some((k, p, ci));
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecognitionResult {
    pub schema_version: u32,
    pub instance_id: u32,
    pub label: String,
    pub probability: f64,
    pub occluded: bool,
    pub occluded_end: Option<OccludedEnd>,
    pub models_used: Vec<ModelKey>,
    /// Occupied slices of the observed cloud.
    pub observed_slices: usize,
    /// Camera distance over the library's training distance.
    pub scale_ratio: f64,
    pub scale_within_tolerance: bool,
    pub rescaled: bool,
}

impl RecognitionResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("result serializes")
    }
}

/// The observation after normalization, optional rescale and flip, ready to
/// be sliced.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedObservation {
    pub aligned: AlignedCloud,
    /// Points that are sliced, index-aligned with the observed cloud.
    pub points: Vec<Point3>,
    pub occluded_end: Option<OccludedEnd>,
    pub diagrams: SlicedDiagrams,
    pub candidate_sets: Vec<ViewSet>,
    pub scale_ratio: f64,
    pub rescaled: bool,
}

impl PreparedObservation {
    pub fn transform(&self) -> &NormalizingTransform {
        &self.aligned.transform
    }
}

pub fn prepare_observation(obs: &Observation, lib: &ModelLibrary, cfg: &RecognitionConfig) -> Result<PreparedObservation> {
    if obs.cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let centroid = obs.cloud.centroid().ok_or(Error::EmptyCloud)?;
    let distance = centroid.to_vector().norm();
    let scale_ratio = if lib.train_scale > 0.0 { distance / lib.train_scale } else { 1.0 };
    let within = (scale_ratio - 1.0).abs() <= cfg.scale_tolerance;
    let rescaled = cfg.scale_policy == ScalePolicy::Rescale && !within && scale_ratio > 0.0;
    let rescale = |p: &Point3| Point3::from(p.to_vector() / scale_ratio);
    let cloud = if rescaled {
        PointCloud::new(obs.cloud.points.iter().map(rescale).collect(), obs.cloud.frame)
    } else {
        obs.cloud.clone()
    };

    let aligned = normalize(&cloud, lib.alpha, [false; 3])?;
    let occluded_end = obs.occluded.then(|| {
        let pts: Vec<Point3> = if rescaled {
            obs.occlusion_points.iter().map(rescale).collect()
        } else {
            obs.occlusion_points.clone()
        };
        occluded_end(&aligned, &pts)
    });
    let points: Vec<Point3> = if occluded_end == Some(OccludedEnd::LowZ) {
        aligned.points().iter().map(flip_about_y).collect()
    } else {
        aligned.points().to_vec()
    };
    let diagrams = cloud_diagrams(&points, &lib.slice_params, lib.essential)?;

    let obb = &aligned.source_obb;
    let k = viewed_axis(&camera_direction(obb), obb);
    let areas = obb.face_areas();
    let others = [areas[(k + 1) % 3], areas[(k + 2) % 3]];
    let candidate_sets = select_model_sets(areas[k], others, cfg.tau_ratio);

    Ok(PreparedObservation {
        aligned,
        points,
        occluded_end,
        diagrams,
        candidate_sets,
        scale_ratio,
        rescaled,
    })
}

pub fn recognize(obs: &Observation, lib: &ModelLibrary, cfg: &RecognitionConfig) -> Result<RecognitionResult> {
    let prep = prepare_observation(obs, lib, cfg)?;
    let available = lib.view_sets();
    if available.is_empty() {
        return Err(Error::InsufficientData("library has no models".into()));
    }
    let mut sets: Vec<ViewSet> = prep
        .candidate_sets
        .iter()
        .copied()
        .filter(|v| available.contains(v))
        .collect();
    if sets.is_empty() {
        sets = available;
    }
    let observed = prep.diagrams.occupied_count();
    let k = if obs.occluded { observed } else { lib.n_max }.clamp(1, lib.n_max);
    let descriptor = prep.diagrams.descriptor(lib.n_max, lib.n_max, &lib.pi_params)?;

    let candidates = sets
        .iter()
        .map(|&v| {
            let model = lib.model(v, k).ok_or_else(|| Error::Format(format!("missing model ({v}, {k})")))?;
            Ok(Candidate {
                view_set: v,
                n_slices: k,
                probabilities: model.predict_proba(&descriptor.values)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (class, probability, _) = fuse(&candidates).expect("at least one candidate");
    Ok(RecognitionResult {
        schema_version: RESULT_SCHEMA_VERSION,
        instance_id: obs.instance_id,
        label: lib.class_labels[class].clone(),
        probability,
        occluded: obs.occluded,
        occluded_end: prep.occluded_end,
        models_used: candidates
            .iter()
            .map(|c| ModelKey {
                view_set: c.view_set.name(),
                n_slices: c.n_slices,
            })
            .collect(),
        observed_slices: observed,
        scale_ratio: prep.scale_ratio,
        scale_within_tolerance: (prep.scale_ratio - 1.0).abs() <= cfg.scale_tolerance,
        rescaled: prep.rescaled,
    })
}

/// Recognizes every labelled instance of a scene, in increasing id order.
pub fn recognize_scene(scene: &DepthScene, lib: &ModelLibrary, cfg: &RecognitionConfig) -> Result<Vec<RecognitionResult>> {
    use rayon::prelude::*;
    scene
        .instance_ids()
        .par_iter()
        .map(|&id| recognize(&Observation::from_scene(scene, id, cfg)?, lib, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{Intrinsics, RigidTransform};

    #[test]
    fn area_heuristic() {
        assert_eq!(select_model_sets(2.0, [1.0, 0.5], 1.15), vec![ViewSet::Front]);
        assert_eq!(select_model_sets(1.0, [1.05, 0.5], 1.15), vec![ViewSet::Front, ViewSet::Side]);
        assert_eq!(select_model_sets(1.0, [1.0, 1.0], 1.15), ViewSet::ALL.to_vec());
        assert_eq!(select_model_sets(1.0, [2.0, 0.5], 1.15), vec![ViewSet::Side]);
        assert_eq!(select_model_sets(0.5, [2.0, 1.0], 1.15), vec![ViewSet::Top]);
    }

    #[test]
    fn fusion_takes_the_single_highest_probability() {
        let c = |v, n, p: &[f64]| Candidate {
            view_set: v,
            n_slices: n,
            probabilities: p.to_vec(),
        };
        let got = fuse(&[c(ViewSet::Side, 3, &[0.7, 0.3]), c(ViewSet::Front, 3, &[0.6, 0.4])]).unwrap();
        assert_eq!((got.0, got.1), (0, 0.7));
        let got = fuse(&[c(ViewSet::Top, 2, &[0.3, 0.7]), c(ViewSet::Front, 4, &[0.7, 0.3])]).unwrap();
        assert_eq!((got.0, got.2), (0, 1));
        let got = fuse(&[c(ViewSet::Front, 4, &[0.5, 0.5]), c(ViewSet::Front, 2, &[0.5, 0.5])]).unwrap();
        assert_eq!((got.0, got.2), (0, 1));
        assert!(fuse(&[]).is_none());
    }

    fn grid_scene(depth: Vec<f64>, labels: Vec<u32>) -> DepthScene {
        let k = Intrinsics {
            fx: 100.0,
            fy: 100.0,
            cx: 2.0,
            cy: 2.0,
        };
        DepthScene::new(4, 4, depth, labels, k, RigidTransform::identity()).unwrap()
    }

    #[test]
    fn occlusion_needs_a_nearer_neighbour() {
        #[rustfmt::skip]
        let labels = vec![
            0, 0, 0, 0,
            0, 1, 1, 2,
            0, 1, 1, 2,
            0, 0, 0, 0,
        ];
        let with = |other: f64| {
            let depth: Vec<f64> = labels
                .iter()
                .map(|&l| match l {
                    1 => 2.0,
                    2 => other,
                    _ => 0.0,
                })
                .collect();
            detect_occlusion(&grid_scene(depth, labels.clone()), 1, 0.01).unwrap()
        };
        let near = with(1.5);
        assert!(near.occluded);
        assert_eq!(near.boundary_pixels, vec![(3, 1), (3, 2)]);
        assert_eq!(near.occluded_object_pixels, vec![(2, 1), (2, 2)]);
        assert!(!with(2.5).occluded);
        assert!(!with(1.995).occluded);
        let lone = detect_occlusion(&grid_scene(vec![1.0; 16], vec![1; 16]), 1, 0.01).unwrap();
        assert_eq!(lone, OcclusionInfo::default());
        assert!(matches!(
            detect_occlusion(&grid_scene(vec![1.0; 16], vec![1; 16]), 7, 0.01),
            Err(Error::UnknownInstance(7))
        ));
    }

    #[test]
    fn flip_is_a_half_turn() {
        let p = Point3::new(1.0, 2.0, 3.0);
        assert_eq!(flip_about_y(&flip_about_y(&p)), p);
        assert_eq!(flip_about_y(&p), Point3::new(-1.0, 2.0, -3.0));
    }
}
