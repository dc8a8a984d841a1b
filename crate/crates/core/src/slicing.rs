//! Slicing of a normalized cloud along z and quantization of each slice into
//! x-columns with their origin (lowest y) and termination (highest y) points.

use std::collections::BTreeMap;

use crate::cloud::Point3;
use crate::error::{Error, Result};

/// Where column index 0 starts along x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColumnOrigin {
    /// Each slice is measured from its own minimum x.
    #[default]
    PerSlice,
    /// All slices share the frame's minimum x.
    Frame,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceParams {
    /// Slice thickness along z.
    pub sigma1: f64,
    /// Column width along x.
    pub sigma2: f64,
    /// z-offset of origin points.
    pub eps1: f64,
    /// z-offset of termination points.
    pub eps2: f64,
    pub column_origin: ColumnOrigin,
}

impl Default for SliceParams {
    fn default() -> Self {
        Self::new(0.1, 0.025).expect("default slice parameters are valid")
    }
}

impl SliceParams {
    /// Uses `eps1 = 1e-4 * sigma1` and `eps2 = 3e-4 * sigma1`.
    pub fn new(sigma1: f64, sigma2: f64) -> Result<Self> {
        Self::with_epsilons(sigma1, sigma2, sigma1 * 1e-4, sigma1 * 3e-4)
    }

    pub fn with_epsilons(sigma1: f64, sigma2: f64, eps1: f64, eps2: f64) -> Result<Self> {
        let params = Self {
            sigma1,
            sigma2,
            eps1,
            eps2,
            column_origin: ColumnOrigin::default(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_column_origin(mut self, origin: ColumnOrigin) -> Self {
        self.column_origin = origin;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma1.is_finite()
            && self.sigma2.is_finite()
            && self.sigma1 > 0.0
            && self.sigma2 > 0.0
            && self.eps1 > 0.0
            && 2.0 * self.eps1 < self.eps2
            && self.eps2 < self.sigma1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "slice parameters must satisfy sigma1, sigma2 > 0 and 0 < 2*eps1 < eps2 < sigma1 \
                 (got sigma1={}, sigma2={}, eps1={}, eps2={})",
                self.sigma1, self.sigma2, self.eps1, self.eps2
            )))
        }
    }

    pub fn slice_z(&self, index: usize) -> f64 {
        index as f64 * self.sigma1
    }

    pub fn column_x(&self, column: usize) -> f64 {
        (column + 1) as f64 * self.sigma2
    }
}

/// Reference frame for slicing: z is measured from `z_min`, x from `x_min`
/// (when columns share the frame origin), and `height` bounds the slice index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceFrame {
    pub x_min: f64,
    pub z_min: f64,
    pub height: f64,
}

impl SliceFrame {
    /// The axis-aligned bounding box of the points.
    pub fn enclosing(points: &[Point3]) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let (mut x_min, mut z_min, mut z_max) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            x_min = x_min.min(p.x);
            z_min = z_min.min(p.z);
            z_max = z_max.max(p.z);
        }
        Some(Self {
            x_min,
            z_min,
            height: z_max - z_min,
        })
    }

    /// Number of slice indices the frame admits: the smallest `m >= 1` with
    /// `m * sigma1 >= height`, so a point exactly at the top joins the last
    /// slice instead of opening a new one.
    pub fn slice_count(&self, sigma1: f64) -> usize {
        if self.height <= 0.0 {
            return 1;
        }
        let mut m = (self.height / sigma1).ceil().max(1.0) as usize;
        while m > 1 && (m - 1) as f64 * sigma1 >= self.height {
            m -= 1;
        }
        while (m as f64) * sigma1 < self.height {
            m += 1;
        }
        m
    }

    pub fn slice_index(&self, z: f64, sigma1: f64) -> usize {
        let last = self.slice_count(sigma1) - 1;
        let raw = ((z - self.z_min) / sigma1).floor();
        if raw <= 0.0 {
            0
        } else {
            (raw as usize).min(last)
        }
    }
}

/// Points of one slice with z flattened to `index * sigma1` and x measured
/// from the column origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub index: usize,
    pub points: Vec<Point3>,
}

/// Slices `points` in `frame`. Empty slices are omitted; the remaining ones
/// are returned in increasing index order and keep their original indices.
pub fn slice_points(points: &[Point3], frame: &SliceFrame, params: &SliceParams) -> Result<Vec<Slice>> {
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut groups: BTreeMap<usize, Vec<Point3>> = BTreeMap::new();
    for p in points {
        let i = frame.slice_index(p.z, params.sigma1);
        groups.entry(i).or_default().push(*p);
    }
    Ok(groups
        .into_iter()
        .map(|(index, mut members)| {
            let z = params.slice_z(index);
            let x0 = match params.column_origin {
                ColumnOrigin::Frame => frame.x_min,
                ColumnOrigin::PerSlice => members.iter().map(|p| p.x).fold(f64::INFINITY, f64::min),
            };
            for p in &mut members {
                p.x -= x0;
                p.z = z;
            }
            Slice {
                index,
                points: members,
            }
        })
        .collect())
}

/// Slices a cloud in its own bounding-box frame.
pub fn slice_cloud(points: &[Point3], params: &SliceParams) -> Result<Vec<Slice>> {
    let frame = SliceFrame::enclosing(points).ok_or(Error::EmptyCloud)?;
    slice_points(points, &frame, params)
}

/// A slice with x snapped to column values and its per-column anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnizedSlice {
    /// Slice points with x replaced by `(j + 1) * sigma2`.
    pub slice: Slice,
    /// Position in `occupied_columns` of each slice point's column.
    pub point_columns: Vec<usize>,
    pub origins: Vec<Point3>,
    pub terminations: Vec<Point3>,
    pub occupied_columns: Vec<usize>,
}

impl ColumnizedSlice {
    pub fn column_count(&self) -> usize {
        self.occupied_columns.len()
    }
}

pub fn column_index(x: f64, sigma2: f64) -> usize {
    let j = (x / sigma2).floor();
    if j <= 0.0 {
        0
    } else {
        j as usize
    }
}

/// Quantizes x into columns of width `sigma2` (x is expected to be already
/// measured from the column origin) and builds one origin and one termination
/// per occupied column.
pub fn columnize(slice: &Slice, params: &SliceParams) -> Result<ColumnizedSlice> {
    if slice.points.is_empty() {
        return Err(Error::EmptySlice);
    }
    let raw_columns: Vec<usize> = slice
        .points
        .iter()
        .map(|p| column_index(p.x, params.sigma2))
        .collect();
    let mut spans: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for (p, &j) in slice.points.iter().zip(&raw_columns) {
        let span = spans.entry(j).or_insert((p.y, p.y));
        span.0 = span.0.min(p.y);
        span.1 = span.1.max(p.y);
    }
    let occupied_columns: Vec<usize> = spans.keys().copied().collect();
    let z = params.slice_z(slice.index);
    let origins = spans
        .iter()
        .map(|(&j, &(lo, _))| Point3::new(params.column_x(j), lo, z + params.eps1))
        .collect();
    let terminations = spans
        .iter()
        .map(|(&j, &(_, hi))| Point3::new(params.column_x(j), hi, z + params.eps2))
        .collect();
    let point_columns = raw_columns
        .iter()
        .map(|j| occupied_columns.binary_search(j).expect("column is occupied"))
        .collect();
    let points = slice
        .points
        .iter()
        .zip(&raw_columns)
        .map(|(p, &j)| Point3::new(params.column_x(j), p.y, p.z))
        .collect();
    Ok(ColumnizedSlice {
        slice: Slice {
            index: slice.index,
            points,
        },
        point_columns,
        origins,
        terminations,
        occupied_columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn origin_frame(height: f64) -> SliceFrame {
        SliceFrame {
            x_min: 0.0,
            z_min: 0.0,
            height,
        }
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(SliceParams::new(0.0, 0.1).is_err());
        assert!(SliceParams::with_epsilons(0.1, 0.1, 0.01, 0.015).is_err());
        assert!(SliceParams::with_epsilons(0.1, 0.1, 0.01, 0.2).is_err());
        assert!(SliceParams::new(0.1, 0.025).is_ok());
    }

    #[test]
    fn floor_assignment_keeps_sparse_indices() {
        let params = SliceParams::new(0.1, 0.025).unwrap();
        let pts = [
            Point3::new(0.0, 0.0, 0.05),
            Point3::new(0.0, 0.0, 0.12),
            Point3::new(0.0, 0.0, 0.31),
        ];
        let slices = slice_points(&pts, &origin_frame(0.31), &params).unwrap();
        let idx: Vec<usize> = slices.iter().map(|s| s.index).collect();
        assert_eq!(idx, vec![0, 1, 3]);
        assert_eq!(slices[2].points[0].z, 3.0 * 0.1);
    }

    #[test]
    fn flat_cloud_is_one_slice() {
        let params = SliceParams::default();
        let pts: Vec<Point3> = (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let slices = slice_cloud(&pts, &params).unwrap();
        assert_eq!(slices.len(), 1);
        assert_eq!(slices[0].index, 0);
        assert_eq!(slices[0].points.len(), 5);
    }

    #[test]
    fn uniform_cloud_partitions_into_four_slices() {
        let params = SliceParams::default();
        // Deterministic low-discrepancy z over [0, 0.35).
        let pts: Vec<Point3> = (0..200)
            .map(|i| {
                let z = ((i as f64) * 0.618_033_988_749_895).fract() * 0.35;
                Point3::new(0.01 * i as f64, 0.0, z)
            })
            .collect();
        let slices = slice_points(&pts, &origin_frame(0.35), &params).unwrap();
        let mut expected = [0usize; 4];
        for p in &pts {
            expected[(p.z / 0.1).floor() as usize] += 1;
        }
        assert_eq!(slices.len(), 4);
        let counts: Vec<usize> = slices.iter().map(|s| s.points.len()).collect();
        assert_eq!(counts, expected.to_vec());
        assert_eq!(counts.iter().sum::<usize>(), 200);
    }

    #[test]
    fn top_boundary_point_joins_last_slice() {
        let params = SliceParams::default();
        for h in [0.3, 0.4, 0.7] {
            let pts = [Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, h)];
            let slices = slice_cloud(&pts, &params).unwrap();
            let expected_last = origin_frame(h).slice_count(0.1) - 1;
            assert_eq!(slices.last().unwrap().index, expected_last);
            assert!((expected_last as f64) * 0.1 < h);
        }
    }

    #[test]
    fn empty_inputs_error() {
        let params = SliceParams::default();
        assert!(matches!(slice_cloud(&[], &params), Err(Error::EmptyCloud)));
        let empty = Slice {
            index: 0,
            points: vec![],
        };
        assert!(matches!(columnize(&empty, &params), Err(Error::EmptySlice)));
    }

    #[test]
    fn singleton_column() {
        let params = SliceParams::new(0.1, 0.025).unwrap();
        let slice = Slice {
            index: 0,
            points: vec![Point3::new(0.01, 0.4, 0.0)],
        };
        let cs = columnize(&slice, &params).unwrap();
        assert_eq!(cs.occupied_columns, vec![0]);
        assert_eq!(cs.origins, vec![Point3::new(0.025, 0.4, params.eps1)]);
        assert_eq!(cs.terminations, vec![Point3::new(0.025, 0.4, params.eps2)]);
    }

    #[test]
    fn hand_partitioned_columns() {
        let params = SliceParams::new(0.1, 0.025).unwrap();
        let slice = Slice {
            index: 0,
            points: vec![
                Point3::new(0.01, 0.2, 0.0),
                Point3::new(0.02, 0.9, 0.0),
                Point3::new(0.06, 0.5, 0.0),
            ],
        };
        let cs = columnize(&slice, &params).unwrap();
        assert_eq!(cs.occupied_columns, vec![0, 2]);
        assert_eq!((cs.origins[0].y, cs.terminations[0].y), (0.2, 0.9));
        assert_eq!((cs.origins[1].y, cs.terminations[1].y), (0.5, 0.5));
        assert_eq!(cs.point_columns, vec![0, 0, 1]);
        assert_eq!(cs.slice.points[2].x, 3.0 * 0.025);
    }

    fn blob(n: usize, seed: u64) -> Vec<Point3> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-0.2..0.6),
                    rng.random_range(0.0..0.5),
                    rng.random_range(-0.1..0.45),
                )
            })
            .collect()
    }

    proptest! {
        #[test]
        fn columns_are_consistent(seed in 0u64..500, n in 1usize..80) {
            let params = SliceParams::default();
            let pts = blob(n, seed);
            let slices = slice_cloud(&pts, &params).unwrap();
            prop_assert_eq!(slices.iter().map(|s| s.points.len()).sum::<usize>(), n);
            for s in &slices {
                let cs = columnize(s, &params).unwrap();
                prop_assert_eq!(cs.origins.len(), cs.occupied_columns.len());
                prop_assert_eq!(cs.terminations.len(), cs.occupied_columns.len());
                for (o, t) in cs.origins.iter().zip(&cs.terminations) {
                    prop_assert!(o.y <= t.y);
                }
                for p in &cs.slice.points {
                    prop_assert!(cs.occupied_columns.iter().any(|&j| params.column_x(j) == p.x));
                    prop_assert_eq!(p.z, params.slice_z(s.index));
                }
                let w = s.points.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(cs.column_count() <= (w / params.sigma2).ceil() as usize + 1);
            }
        }

        #[test]
        fn removing_a_slice_leaves_others_unchanged(seed in 0u64..500, victim in 0usize..5) {
            for origin in [ColumnOrigin::PerSlice, ColumnOrigin::Frame] {
                let params = SliceParams::default().with_column_origin(origin);
                let pts = blob(120, seed);
                let frame = SliceFrame::enclosing(&pts).unwrap();
                let full = slice_points(&pts, &frame, &params).unwrap();
                let kept: Vec<Point3> = pts
                    .iter()
                    .copied()
                    .filter(|p| frame.slice_index(p.z, params.sigma1) != victim)
                    .collect();
                if kept.is_empty() {
                    continue;
                }
                let partial = slice_points(&kept, &frame, &params).unwrap();
                let expected: Vec<&Slice> = full.iter().filter(|s| s.index != victim).collect();
                prop_assert_eq!(partial.len(), expected.len());
                for (a, b) in partial.iter().zip(expected) {
                    prop_assert_eq!(&columnize(a, &params).unwrap(), &columnize(b, &params).unwrap());
                }
            }
        }
    }
}
