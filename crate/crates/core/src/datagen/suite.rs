//! Object catalogs, generated datasets and their directory layout.
//!
//! ```text
//! DIR/suite.txt                  suite, seed, classes, generation settings
//! DIR/train/manifest.tsv         cloud  label  view  scene
//! DIR/train/<label>_vNN.xyz      camera-frame partial view
//! DIR/train/<label>_vNN.scene    scene it was rendered from
//! DIR/probes/manifest.tsv        scene  label  view  target  requested  achieved
//! DIR/probes/<label>_vNN.scene   training view with an occluder added
//! DIR/seq_N/scene_SS.scene       cluttered scene with N objects
//! DIR/seq_N/scene_SS.depth       its rendering
//! DIR/seq_N/scene_SS.truth       id  label  hidden-fraction, one per object
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Rotation3, Vector3};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::mesh::PrimitiveKind;
use super::render::render_depth;
use super::scene::{look_at, Camera, SceneObject, SceneSpec};
use super::views::{gen_occluded_scene_along, icosahedron_directions, view_scene, OccluderConfig};
use crate::normalize::compute_obb;
use crate::cloud::{load_cloud, save_cloud, DepthScene, PointCloud, RigidTransform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Cuboidal,
    Curved,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassSpec {
    pub label: &'static str,
    pub kind: PrimitiveKind,
    pub family: Family,
}

const fn boxed(label: &'static str, sx: f64, sy: f64, sz: f64) -> ClassSpec {
    ClassSpec {
        label,
        kind: PrimitiveKind::Box { sx, sy, sz },
        family: Family::Cuboidal,
    }
}

const fn curved(label: &'static str, kind: PrimitiveKind) -> ClassSpec {
    ClassSpec {
        label,
        kind,
        family: Family::Curved,
    }
}

/// Every object class, decimetre-scale.
pub const CATALOG: [ClassSpec; 13] = [
    boxed("box_a", 0.50, 0.30, 0.20),
    boxed("box_b", 0.40, 0.40, 0.15),
    boxed("box_c", 0.30, 0.20, 0.60),
    boxed("box_d", 0.60, 0.15, 0.30),
    boxed("box_e", 0.25, 0.25, 0.25),
    curved("cyl_a", PrimitiveKind::Cylinder { radius: 0.10, height: 0.50 }),
    curved("cyl_b", PrimitiveKind::Cylinder { radius: 0.20, height: 0.25 }),
    curved("sphere_a", PrimitiveKind::Sphere { radius: 0.15 }),
    curved("sphere_b", PrimitiveKind::Sphere { radius: 0.25 }),
    curved("cone_a", PrimitiveKind::Cone { radius: 0.15, height: 0.45 }),
    curved("cone_b", PrimitiveKind::Cone { radius: 0.25, height: 0.30 }),
    ClassSpec {
        label: "lblock_a",
        kind: PrimitiveKind::LBlock {
            sx: 0.50,
            sy: 0.25,
            sz: 0.40,
            notch_x: 0.20,
            notch_z: 0.20,
        },
        family: Family::Cuboidal,
    },
    ClassSpec {
        label: "lblock_b",
        kind: PrimitiveKind::LBlock {
            sx: 0.40,
            sy: 0.30,
            sz: 0.50,
            notch_x: 0.15,
            notch_z: 0.30,
        },
        family: Family::Cuboidal,
    },
];

pub fn class_spec(label: &str) -> Option<ClassSpec> {
    CATALOG.iter().find(|c| c.label == label).copied()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Cuboidal,
    Curved,
    Mixed,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Cuboidal => "cuboidal",
            Suite::Curved => "curved",
            Suite::Mixed => "mixed",
        }
    }

    pub fn classes(self) -> Vec<ClassSpec> {
        let pick = |labels: &[&str]| labels.iter().map(|l| class_spec(l).expect("catalog label")).collect();
        match self {
            Suite::Cuboidal => pick(&["box_a", "box_b", "box_c", "box_d", "box_e"]),
            Suite::Curved => pick(&["cyl_a", "cyl_b", "sphere_a", "sphere_b", "cone_a", "cone_b"]),
            Suite::Mixed => pick(&[
                "box_a", "box_c", "box_d", "cyl_a", "cyl_b", "sphere_a", "sphere_b", "cone_a", "cone_b", "lblock_a",
                "lblock_b",
            ]),
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cuboidal" => Ok(Suite::Cuboidal),
            "curved" => Ok(Suite::Curved),
            "mixed" => Ok(Suite::Mixed),
            other => Err(Error::InvalidParams(format!(
                "unknown suite '{other}' (expected cuboidal, curved or mixed)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub seed: u64,
    /// Camera distance of training views.
    pub train_distance: f64,
    pub n_dirs: usize,
    /// Hidden fraction of every occluded probe.
    pub probe_fraction: f64,
    /// Rotation about y of the normalized frame whose z axis the probe
    /// occluders advance along.
    pub probe_alpha: f64,
    pub occluder: OccluderConfig,
    /// Objects per scene of each test sequence.
    pub sequence_sizes: Vec<usize>,
    pub scenes_per_sequence: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            train_distance: 2.5,
            n_dirs: 12,
            probe_fraction: 0.3,
            probe_alpha: 45f64.to_radians(),
            occluder: OccluderConfig::default(),
            sequence_sizes: vec![2, 5, 8],
            scenes_per_sequence: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingItem {
    pub label: String,
    pub view_index: usize,
    pub spec: SceneSpec,
    pub cloud: PointCloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub label: String,
    pub view_index: usize,
    pub spec: SceneSpec,
    pub target_id: u32,
    pub requested: f64,
    pub achieved: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthEntry {
    pub id: u32,
    pub label: String,
    /// Share of the object's own silhouette hidden by other objects.
    pub hidden_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceScene {
    pub spec: SceneSpec,
    pub scene: DepthScene,
    pub truth: Vec<TruthEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub objects_per_scene: usize,
    pub scenes: Vec<SequenceScene>,
}

impl Sequence {
    pub fn name(&self) -> String {
        format!("seq_{}", self.objects_per_scene)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub suite: Suite,
    pub config: DataConfig,
    pub classes: Vec<String>,
    pub train: Vec<TrainingItem>,
    pub probes: Vec<Probe>,
    pub sequences: Vec<Sequence>,
}

fn sub_seed(seed: u64, stream: u64, index: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ stream.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ index.wrapping_mul(0x1656_67B1_9E37_79F9)
}

pub fn generate(suite: Suite, cfg: &DataConfig) -> Result<Dataset> {
    let classes = suite.classes();
    let dirs = icosahedron_directions();
    if cfg.n_dirs == 0 || cfg.n_dirs > dirs.len() {
        return Err(Error::InvalidParams(format!("n_dirs must be in 1..=12, got {}", cfg.n_dirs)));
    }
    let jobs: Vec<(ClassSpec, usize)> = classes
        .iter()
        .flat_map(|c| (0..cfg.n_dirs).map(move |v| (*c, v)))
        .collect();

    let train = jobs
        .par_iter()
        .map(|&(c, v)| {
            let spec = view_scene(c.kind, c.label, &dirs[v], cfg.train_distance, 0)?;
            let cloud = render_depth(&spec)?.backproject(1)?;
            Ok(TrainingItem {
                label: c.label.to_string(),
                view_index: v,
                spec,
                cloud,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let probes = train
        .par_iter()
        .enumerate()
        .filter_map(|(i, item)| {
            let seed = sub_seed(cfg.seed, 1, i as u64);
            let direction = match slicing_direction(&item.cloud, cfg.probe_alpha, seed) {
                Ok(d) => d,
                Err(e) => return Some(Err(e)),
            };
            match gen_occluded_scene_along(&item.spec, 1, &cfg.occluder, cfg.probe_fraction, &direction, seed) {
                Ok(occ) => Some(Ok(Probe {
                    label: item.label.clone(),
                    view_index: item.view_index,
                    spec: occ.spec,
                    target_id: occ.target_id,
                    requested: occ.requested,
                    achieved: occ.achieved,
                })),
                Err(Error::UnreachableFraction { .. }) => None,
                Err(e) => Some(Err(e)),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let sequences = cfg
        .sequence_sizes
        .iter()
        .enumerate()
        .map(|(si, &n)| {
            let scenes = (0..cfg.scenes_per_sequence)
                .into_par_iter()
                .map(|s| cluttered_scene(&classes, n, sub_seed(cfg.seed, 2 + si as u64, s as u64)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Sequence {
                objects_per_scene: n,
                scenes,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Dataset {
        suite,
        config: cfg.clone(),
        classes: classes.iter().map(|c| c.label.to_string()).collect(),
        train,
        probes,
        sequences,
    })
}

/// Camera-frame direction of the normalized z axis of `cloud`, with a seeded
/// sign, so that an occluder sliding along it hides one end of the slice
/// stack.
pub fn slicing_direction(cloud: &PointCloud, alpha: f64, seed: u64) -> Result<Vector3<f64>> {
    let obb = compute_obb(&cloud.points)?;
    let (s, c) = alpha.sin_cos();
    let d = -s * obb.axis(0) + c * obb.axis(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = if rng.random_bool(0.5) { d } else { -d };
    if d.x.hypot(d.y) < 1e-6 {
        // Slicing axis along the line of sight: fall back to the long axis.
        return Ok(obb.axis(0));
    }
    Ok(d)
}

/// `n` objects drawn with replacement from `classes`, standing on the ground
/// plane at random yaw without overlapping footprints, seen from an elevated
/// camera.
pub fn cluttered_scene(classes: &[ClassSpec], n: usize, seed: u64) -> Result<SequenceScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<ClassSpec> = (0..n)
        .map(|_| *classes.choose(&mut rng).expect("non-empty class list"))
        .collect();
    let mut radius = 0.3 + 0.3 * (n as f64).sqrt();
    let mut placed: Vec<(Vector3<f64>, f64)> = Vec::new();
    let mut objects = Vec::new();
    for (i, c) in chosen.iter().enumerate() {
        let r = c.kind.footprint_radius();
        let mut attempts = 0;
        let position = loop {
            attempts += 1;
            if attempts % 200 == 0 {
                radius *= 1.2;
            }
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let dist = radius * rng.random_range(0.0f64..1.0).sqrt();
            let p = Vector3::new(dist * angle.cos(), dist * angle.sin(), 0.0);
            if placed.iter().all(|(q, rq)| (p - q).norm() >= r + rq + 0.05) {
                break p;
            }
        };
        placed.push((position, r));
        let yaw = rng.random_range(0.0..std::f64::consts::TAU);
        objects.push(SceneObject {
            id: i as u32 + 1,
            label: c.label.to_string(),
            kind: c.kind,
            pose: RigidTransform::new(*Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix(), position),
        });
    }
    let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
    let elevation = rng.random_range(35f64..55.0).to_radians();
    let distance = rng.random_range(3.0..3.5);
    let target = Vector3::new(0.0, 0.0, 0.2);
    let eye = target
        + Vector3::new(
            elevation.cos() * azimuth.cos(),
            elevation.cos() * azimuth.sin(),
            elevation.sin(),
        ) * distance;
    let mut spec = SceneSpec::new(Camera::with_pose(look_at(eye, target, Vector3::z())?), seed);
    spec.objects = objects;
    let scene = render_depth(&spec)?;

    let truth = spec
        .objects
        .iter()
        .map(|o| {
            let mut alone = spec.clone();
            alone.objects = vec![o.clone()];
            let full = render_depth(&alone)?.pixel_count(o.id);
            let seen = scene.pixel_count(o.id);
            Ok(TruthEntry {
                id: o.id,
                label: o.label.clone(),
                hidden_fraction: if full == 0 { 1.0 } else { 1.0 - seen as f64 / full as f64 },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SequenceScene { spec, scene, truth })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn view_stem(label: &str, view: usize) -> String {
    format!("{label}_v{view:02}")
}

pub fn write_dataset(data: &Dataset, dir: &Path) -> Result<()> {
    let cfg = &data.config;
    create_dir(dir)?;
    let mut header = String::new();
    let _ = writeln!(header, "suite {}", data.suite.name());
    let _ = writeln!(header, "seed {}", cfg.seed);
    let _ = writeln!(header, "classes {}", data.classes.join(" "));
    let _ = writeln!(header, "train_distance {}", cfg.train_distance);
    let _ = writeln!(header, "n_dirs {}", cfg.n_dirs);
    let _ = writeln!(header, "probe_fraction {}", cfg.probe_fraction);
    let _ = writeln!(header, "probe_alpha {}", cfg.probe_alpha);
    let sizes: Vec<String> = cfg.sequence_sizes.iter().map(|s| s.to_string()).collect();
    let _ = writeln!(header, "sequences {}", sizes.join(" "));
    let _ = writeln!(header, "scenes_per_sequence {}", cfg.scenes_per_sequence);
    write(&dir.join("suite.txt"), &header)?;

    let train_dir = dir.join("train");
    create_dir(&train_dir)?;
    let mut manifest = String::from("cloud\tlabel\tview\tscene\n");
    for item in &data.train {
        let stem = view_stem(&item.label, item.view_index);
        save_cloud(&item.cloud, train_dir.join(format!("{stem}.xyz")))?;
        item.spec.save(train_dir.join(format!("{stem}.scene")))?;
        let _ = writeln!(manifest, "{stem}.xyz\t{}\t{}\t{stem}.scene", item.label, item.view_index);
    }
    write(&train_dir.join("manifest.tsv"), &manifest)?;

    let probe_dir = dir.join("probes");
    create_dir(&probe_dir)?;
    let mut manifest = String::from("scene\tlabel\tview\ttarget\trequested\tachieved\n");
    for p in &data.probes {
        let stem = view_stem(&p.label, p.view_index);
        p.spec.save(probe_dir.join(format!("{stem}.scene")))?;
        let _ = writeln!(
            manifest,
            "{stem}.scene\t{}\t{}\t{}\t{}\t{}",
            p.label, p.view_index, p.target_id, p.requested, p.achieved
        );
    }
    write(&probe_dir.join("manifest.tsv"), &manifest)?;

    for seq in &data.sequences {
        let seq_dir = dir.join(seq.name());
        create_dir(&seq_dir)?;
        for (s, sc) in seq.scenes.iter().enumerate() {
            let stem = seq_dir.join(format!("scene_{s:02}"));
            sc.spec.save(stem.with_extension("scene"))?;
            sc.scene.save(stem.with_extension("depth"))?;
            let mut truth = String::from("# id label hidden_fraction\n");
            for t in &sc.truth {
                let _ = writeln!(truth, "{} {} {}", t.id, t.label, t.hidden_fraction);
            }
            write(&stem.with_extension("truth"), &truth)?;
        }
    }
    Ok(())
}

fn field<'a>(line: usize, fields: &[&'a str], i: usize) -> Result<&'a str> {
    fields
        .get(i)
        .copied()
        .ok_or_else(|| Error::parse(line, format!("missing column {}", i + 1)))
}

fn num<T: FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("invalid number '{s}'")))
}

/// Rows of a tab-separated manifest after its header line.
fn manifest_rows(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    Ok(read(path)?
        .lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split('\t').map(str::to_owned).collect()))
        .collect())
}

pub fn load_truth(path: &Path) -> Result<Vec<TruthEntry>> {
    read(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            let f: Vec<&str> = l.split_whitespace().collect();
            Ok(TruthEntry {
                id: num(i + 1, field(i + 1, &f, 0)?)?,
                label: field(i + 1, &f, 1)?.to_string(),
                hidden_fraction: num(i + 1, field(i + 1, &f, 2)?)?,
            })
        })
        .collect()
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let header_path = dir.join("suite.txt");
    if !header_path.exists() {
        return Err(Error::InsufficientData(format!(
            "{} is not a generated data directory (no suite.txt)",
            dir.display()
        )));
    }
    let mut suite = None;
    let mut cfg = DataConfig::default();
    let mut classes = Vec::new();
    for (i, line) in read(&header_path)?.lines().enumerate() {
        let n = i + 1;
        let f: Vec<&str> = line.split_whitespace().collect();
        let Some((&key, rest)) = f.split_first() else { continue };
        let one = || field(n, rest, 0);
        match key {
            "suite" => suite = Some(one()?.parse::<Suite>()?),
            "seed" => cfg.seed = num(n, one()?)?,
            "classes" => classes = rest.iter().map(|s| s.to_string()).collect(),
            "train_distance" => cfg.train_distance = num(n, one()?)?,
            "n_dirs" => cfg.n_dirs = num(n, one()?)?,
            "probe_fraction" => cfg.probe_fraction = num(n, one()?)?,
            "probe_alpha" => cfg.probe_alpha = num(n, one()?)?,
            "sequences" => cfg.sequence_sizes = rest.iter().map(|s| num(n, s)).collect::<Result<_>>()?,
            "scenes_per_sequence" => cfg.scenes_per_sequence = num(n, one()?)?,
            other => return Err(Error::parse(n, format!("unknown key '{other}'"))),
        }
    }
    let suite = suite.ok_or_else(|| Error::parse(0, "suite.txt lacks a 'suite' line"))?;

    let train_dir = dir.join("train");
    let mut train = Vec::new();
    for (n, row) in manifest_rows(&train_dir.join("manifest.tsv"))? {
        let f: Vec<&str> = row.iter().map(String::as_str).collect();
        let cloud = load_cloud(train_dir.join(field(n, &f, 0)?))?;
        train.push(TrainingItem {
            label: field(n, &f, 1)?.to_string(),
            view_index: num(n, field(n, &f, 2)?)?,
            spec: SceneSpec::load(train_dir.join(field(n, &f, 3)?))?,
            cloud,
        });
    }

    let probe_dir = dir.join("probes");
    let mut probes = Vec::new();
    if probe_dir.join("manifest.tsv").exists() {
        for (n, row) in manifest_rows(&probe_dir.join("manifest.tsv"))? {
            let f: Vec<&str> = row.iter().map(String::as_str).collect();
            probes.push(Probe {
                spec: SceneSpec::load(probe_dir.join(field(n, &f, 0)?))?,
                label: field(n, &f, 1)?.to_string(),
                view_index: num(n, field(n, &f, 2)?)?,
                target_id: num(n, field(n, &f, 3)?)?,
                requested: num(n, field(n, &f, 4)?)?,
                achieved: num(n, field(n, &f, 5)?)?,
            });
        }
    }

    let mut sequences = Vec::new();
    for &size in &cfg.sequence_sizes {
        let seq_dir = dir.join(format!("seq_{size}"));
        let mut scenes = Vec::new();
        for s in 0.. {
            let stem: PathBuf = seq_dir.join(format!("scene_{s:02}"));
            if !stem.with_extension("scene").exists() {
                break;
            }
            let spec = SceneSpec::load(stem.with_extension("scene"))?;
            let depth_path = stem.with_extension("depth");
            let scene = if depth_path.exists() {
                DepthScene::load(&depth_path)?
            } else {
                render_depth(&spec)?
            };
            scenes.push(SequenceScene {
                spec,
                scene,
                truth: load_truth(&stem.with_extension("truth"))?,
            });
        }
        sequences.push(Sequence {
            objects_per_scene: size,
            scenes,
        });
    }

    Ok(Dataset {
        suite,
        config: cfg,
        classes,
        train,
        probes,
        sequences,
    })
}
