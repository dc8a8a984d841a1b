//! The per-view-set, per-slice-count classifier library and its binary
//! container.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::classifier::{ProbClassifier, SoftmaxConfig, SoftmaxRegression};
use crate::cloud::PointCloud;
use crate::descriptor::{cloud_diagrams, SlicedDiagrams};
use crate::error::{Error, Result};
use crate::normalize::{all_mirror_masks, normalize, ObbFrame};
use crate::slicing::{ColumnOrigin, SliceParams};
use crate::topology::EssentialPolicy;
use crate::vectorize::{PiParams, Weighting};

/// Relative tolerance under which two face areas count as equal.
pub const AREA_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViewSet {
    Front,
    Side,
    Top,
}

impl ViewSet {
    /// In priority order.
    pub const ALL: [ViewSet; 3] = [ViewSet::Front, ViewSet::Side, ViewSet::Top];

    pub fn name(self) -> &'static str {
        match self {
            ViewSet::Front => "front",
            ViewSet::Side => "side",
            ViewSet::Top => "top",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for ViewSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Box axis whose face is most anti-parallel to the viewing direction.
pub fn viewed_axis(camera_dir: &Vector3<f64>, obb: &ObbFrame) -> usize {
    let mut best = 0;
    let mut best_dot = -1.0;
    for k in 0..3 {
        let d = camera_dir.dot(&obb.axis(k)).abs();
        if d > best_dot + 1e-12 {
            best = k;
            best_dot = d;
        }
    }
    best
}

fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= AREA_TIE_TOL * a.abs().max(b.abs())
}

/// The view set of a viewing direction (camera towards object) given the
/// object's box, and whether the viewed face's area tied another face.
/// Ties resolve front before side before top.
pub fn assign_view_set(camera_dir: &Vector3<f64>, obb: &ObbFrame) -> (ViewSet, bool) {
    let k = viewed_axis(camera_dir, obb);
    let areas = obb.face_areas();
    let a = areas[k];
    let others: Vec<f64> = (0..3).filter(|&i| i != k).map(|i| areas[i]).collect();
    let tie = others.iter().any(|&o| nearly_equal(a, o));
    let largest = others.iter().all(|&o| a > o || nearly_equal(a, o));
    let smallest = others.iter().all(|&o| a < o || nearly_equal(a, o));
    let set = if largest {
        ViewSet::Front
    } else if !smallest || others.iter().any(|&o| nearly_equal(a, o)) {
        ViewSet::Side
    } else {
        ViewSet::Top
    };
    (set, tie)
}

/// Viewing direction from a camera at the origin towards the box centre.
pub fn camera_direction(obb: &ObbFrame) -> Vector3<f64> {
    let c = obb.center.to_vector();
    if c.norm() > 0.0 {
        c.normalize()
    } else {
        Vector3::z()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub slice: SliceParams,
    pub alpha: f64,
    pub essential: EssentialPolicy,
    pub pi_grid: (usize, usize),
    /// Kernel bandwidth; calibrated from the data when unset.
    pub pi_bandwidth: Option<f64>,
    pub weighting: Weighting,
    pub softmax: SoftmaxConfig,
    /// Camera distance the training views were rendered at.
    pub train_scale: f64,
    /// Train on all eight mirror images of every view.
    pub mirror: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            slice: SliceParams::default(),
            alpha: 45f64.to_radians(),
            essential: EssentialPolicy::Drop,
            pi_grid: PiParams::DEFAULT_GRID,
            pi_bandwidth: None,
            weighting: Weighting::LinearPersistence,
            softmax: SoftmaxConfig::default(),
            train_scale: 2.5,
            mirror: true,
        }
    }
}

/// A rendered partial view of a training object, in camera coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingView {
    pub cloud: PointCloud,
    pub label: String,
}

/// A training view reduced to what the trainer needs: its view set and the
/// slice diagrams of each augmented copy.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedView {
    pub label: String,
    pub view_set: ViewSet,
    pub view_tie: bool,
    pub copies: Vec<SlicedDiagrams>,
}

pub fn prepare_view(view: &TrainingView, cfg: &TrainConfig) -> Result<PreparedView> {
    let degenerate = |e: Error| match e {
        Error::DegenerateCloud(msg) => Error::DegenerateCloud(format!("view of '{}': {msg}", view.label)),
        other => other,
    };
    let masks: Vec<_> = if cfg.mirror {
        all_mirror_masks().to_vec()
    } else {
        vec![[false; 3]]
    };
    let mut copies = Vec::with_capacity(masks.len());
    let mut assignment = None;
    for mask in masks {
        let aligned = normalize(&view.cloud, cfg.alpha, mask).map_err(degenerate)?;
        if assignment.is_none() {
            let obb = &aligned.source_obb;
            assignment = Some(assign_view_set(&camera_direction(obb), obb));
        }
        copies.push(cloud_diagrams(aligned.points(), &cfg.slice, cfg.essential)?);
    }
    let (view_set, view_tie) = assignment.expect("at least one mirror mask");
    Ok(PreparedView {
        label: view.label.clone(),
        view_set,
        view_tie,
        copies,
    })
}

pub fn prepare_views(views: &[TrainingView], cfg: &TrainConfig) -> Result<Vec<PreparedView>> {
    views.par_iter().map(|v| prepare_view(v, cfg)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelLibrary {
    pub slice_params: SliceParams,
    pub alpha: f64,
    pub pi_params: PiParams,
    pub essential: EssentialPolicy,
    pub train_scale: f64,
    pub n_max: usize,
    pub class_labels: Vec<String>,
    pub models: BTreeMap<(ViewSet, usize), SoftmaxRegression>,
}

/// Training set sizes of one view set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetSummary {
    pub view_set: ViewSet,
    pub views: usize,
    pub samples: usize,
}

pub fn train_library(views: &[TrainingView], cfg: &TrainConfig) -> Result<ModelLibrary> {
    let prepared = prepare_views(views, cfg)?;
    train_from_prepared(&prepared, cfg)
}

/// Trains every `(view set, k)` model from prepared views. Labels are sorted;
/// PI ranges and `n_max` come from all copies pooled.
pub fn train_from_prepared(prepared: &[PreparedView], cfg: &TrainConfig) -> Result<ModelLibrary> {
    if prepared.is_empty() {
        return Err(Error::InsufficientData("no training views".into()));
    }
    let class_labels: Vec<String> = prepared
        .iter()
        .map(|p| p.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let class_of = |label: &str| class_labels.binary_search_by(|l| l.as_str().cmp(label)).unwrap();

    let all_copies = || prepared.iter().flat_map(|p| p.copies.iter());
    let n_max = all_copies().map(|c| c.n_slices()).max().unwrap_or(0);
    if n_max == 0 {
        return Err(Error::InsufficientData("training views produced no slices".into()));
    }
    let pi_params = PiParams::calibrate(
        all_copies().flat_map(|c| c.diagrams.iter()),
        cfg.pi_grid,
        cfg.pi_bandwidth,
        cfg.weighting,
    )?;
    let pi_size = pi_params.size();

    let mut per_set: BTreeMap<ViewSet, (Vec<Vec<f64>>, Vec<usize>)> = BTreeMap::new();
    for p in prepared {
        let (rows, y) = per_set.entry(p.view_set).or_default();
        for copy in &p.copies {
            rows.push(copy.descriptor(n_max, n_max, &pi_params)?.values);
            y.push(class_of(&p.label));
        }
    }
    for (set, (_, y)) in &per_set {
        let mut counts = vec![0usize; class_labels.len()];
        y.iter().for_each(|&c| counts[c] += 1);
        if let Some(c) = counts.iter().position(|&n| n == 1) {
            return Err(Error::InsufficientData(format!(
                "class '{}' has a single sample in the {set} set",
                class_labels[c]
            )));
        }
    }

    let jobs: Vec<(ViewSet, usize)> = per_set
        .keys()
        .flat_map(|&v| (1..=n_max).map(move |k| (v, k)))
        .collect();
    let trained: Vec<((ViewSet, usize), SoftmaxRegression)> = jobs
        .par_iter()
        .map(|&(v, k)| {
            let (rows, y) = &per_set[&v];
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            SoftmaxRegression::fit(&refs, y, &class_labels, k * pi_size, &cfg.softmax).map(|m| ((v, k), m))
        })
        .collect::<Result<_>>()?;

    let lib = ModelLibrary {
        slice_params: cfg.slice,
        alpha: cfg.alpha,
        pi_params,
        essential: cfg.essential,
        train_scale: cfg.train_scale,
        n_max,
        class_labels,
        models: trained.into_iter().collect(),
    };
    lib.check_complete()?;
    Ok(lib)
}

/// Views and augmented samples per view set.
pub fn set_summaries(prepared: &[PreparedView]) -> Vec<SetSummary> {
    ViewSet::ALL
        .iter()
        .filter_map(|&v| {
            let members: Vec<&PreparedView> = prepared.iter().filter(|p| p.view_set == v).collect();
            (!members.is_empty()).then(|| SetSummary {
                view_set: v,
                views: members.len(),
                samples: members.iter().map(|p| p.copies.len()).sum(),
            })
        })
        .collect()
}

const MAGIC: &[u8; 8] = b"SLTOPLIB";
const VERSION: u32 = 1;

impl ModelLibrary {
    pub fn view_sets(&self) -> Vec<ViewSet> {
        self.models
            .keys()
            .map(|&(v, _)| v)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn model(&self, view_set: ViewSet, n_slices: usize) -> Option<&SoftmaxRegression> {
        self.models.get(&(view_set, n_slices))
    }

    pub fn input_dim(&self) -> usize {
        self.n_max * self.pi_params.size()
    }

    /// Every present view set has a model for each slice count in
    /// `1..=n_max`, and all models share the labels and input size.
    pub fn check_complete(&self) -> Result<()> {
        for v in self.view_sets() {
            for k in 1..=self.n_max {
                let m = self
                    .model(v, k)
                    .ok_or_else(|| Error::Format(format!("missing model ({v}, {k})")))?;
                if m.class_labels() != self.class_labels.as_slice() || m.input_dim() != self.input_dim() {
                    return Err(Error::Format(format!("model ({v}, {k}) disagrees with the library")));
                }
            }
        }
        let extra = self.models.keys().find(|&&(_, k)| k == 0 || k > self.n_max);
        if let Some((v, k)) = extra {
            return Err(Error::Format(format!("unexpected model ({v}, {k})")));
        }
        Ok(())
    }

    /// Little-endian container: magic, version, parameters, labels, models,
    /// then a SHA-256 of everything before it.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        let s = &self.slice_params;
        for v in [s.sigma1, s.sigma2, s.eps1, s.eps2] {
            w.f64(v);
        }
        w.u8(match s.column_origin {
            ColumnOrigin::PerSlice => 0,
            ColumnOrigin::Frame => 1,
        });
        w.f64(self.alpha);
        let pi = &self.pi_params;
        w.u64(pi.rows as u64);
        w.u64(pi.cols as u64);
        for v in [pi.birth_range.0, pi.birth_range.1, pi.pers_range.0, pi.pers_range.1, pi.bandwidth] {
            w.f64(v);
        }
        w.u8(match pi.weighting {
            Weighting::LinearPersistence => 0,
            Weighting::Constant => 1,
        });
        w.u8(match self.essential {
            EssentialPolicy::Drop => 0,
            EssentialPolicy::CapAtMax => 1,
        });
        w.f64(self.train_scale);
        w.u64(self.n_max as u64);
        w.u64(self.class_labels.len() as u64);
        for l in &self.class_labels {
            w.string(l);
        }
        w.u64(self.models.len() as u64);
        for (&(v, k), m) in &self.models {
            w.u8(v.code());
            w.u64(k as u64);
            w.u64(m.input_dim() as u64);
            w.u64(m.n_classes() as u64);
            m.weights().iter().for_each(|&x| w.f64(x));
            m.bias().iter().for_each(|&x| w.f64(x));
        }
        let digest = Sha256::digest(&w.0);
        w.bytes(&digest);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Format("not a model library file".into()));
        }
        let mut r = Reader { buf: bytes, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "library version {version} is not supported (expected {VERSION})"
            )));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Format("library checksum mismatch (file corrupted)".into()));
        }
        r.buf = body;

        let (sigma1, sigma2, eps1, eps2) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let column_origin = match r.u8()? {
            0 => ColumnOrigin::PerSlice,
            1 => ColumnOrigin::Frame,
            b => return Err(Error::Format(format!("unknown column origin {b}"))),
        };
        let slice_params = SliceParams::with_epsilons(sigma1, sigma2, eps1, eps2)
            .map_err(|e| Error::Format(e.to_string()))?
            .with_column_origin(column_origin);
        let alpha = r.f64()?;
        let rows = r.usize()?;
        let cols = r.usize()?;
        let (b0, b1, p0, p1, bandwidth) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let weighting = match r.u8()? {
            0 => Weighting::LinearPersistence,
            1 => Weighting::Constant,
            b => return Err(Error::Format(format!("unknown weighting {b}"))),
        };
        let pi_params = PiParams {
            rows,
            cols,
            birth_range: (b0, b1),
            pers_range: (p0, p1),
            bandwidth,
            weighting,
        };
        pi_params.validate().map_err(|e| Error::Format(e.to_string()))?;
        let essential = match r.u8()? {
            0 => EssentialPolicy::Drop,
            1 => EssentialPolicy::CapAtMax,
            b => return Err(Error::Format(format!("unknown essential policy {b}"))),
        };
        let train_scale = r.f64()?;
        let n_max = r.usize()?;
        let n_labels = r.usize()?;
        let class_labels = (0..n_labels).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let n_models = r.usize()?;
        let mut models = BTreeMap::new();
        for _ in 0..n_models {
            let v = ViewSet::from_code(r.u8()?).ok_or_else(|| Error::Format("unknown view set".into()))?;
            let k = r.usize()?;
            let dim = r.usize()?;
            let n_classes = r.usize()?;
            let weights = r.f64s(n_classes.checked_mul(dim).ok_or_else(|| Error::Format("size overflow".into()))?)?;
            let bias = r.f64s(n_classes)?;
            let m = SoftmaxRegression::from_parts(class_labels.clone(), dim, weights, bias)
                .map_err(|e| Error::Format(e.to_string()))?;
            models.insert((v, k), m);
        }
        if r.pos != body.len() {
            return Err(Error::Format("trailing bytes after models".into()));
        }
        let lib = Self {
            slice_params,
            alpha,
            pi_params,
            essential,
            train_scale,
            n_max,
            class_labels,
            models,
        };
        lib.check_complete()?;
        Ok(lib)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    fn string(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.bytes(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("library file is truncated".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("size does not fit in memory".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn string(&mut self) -> Result<String> {
        let n = self.usize()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("label is not UTF-8".into()))
    }
}
