//! From a normalized cloud to per-slice diagrams and a stacked descriptor.

use crate::cloud::Point3;
use crate::error::{Error, Result};
use crate::slicing::{columnize, slice_points, SliceFrame, SliceParams};
use crate::topology::{slice_diagram, EssentialPolicy, PersistenceDiagram};
use crate::vectorize::{build_descriptor, ObjectDescriptor, PiParams};

/// Filtered diagrams of every slice index from 0 through the last occupied
/// one. Unoccupied indices carry empty diagrams.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicedDiagrams {
    pub diagrams: Vec<PersistenceDiagram>,
    pub occupied: Vec<bool>,
}

impl SlicedDiagrams {
    pub fn n_slices(&self) -> usize {
        self.diagrams.len()
    }

    /// Occupied slice indices, the count used to pick a model.
    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    /// Descriptor of the first `k` slices (all when `k` exceeds the count),
    /// padded to `n_padded` slices.
    pub fn descriptor(&self, k: usize, n_padded: usize, pi: &PiParams) -> Result<ObjectDescriptor> {
        let k = k.min(self.diagrams.len());
        build_descriptor(&self.diagrams[..k], n_padded, pi)
    }
}

/// Slices `points` in `frame` and computes one filtered diagram per slice.
pub fn slice_diagrams(
    points: &[Point3],
    frame: &SliceFrame,
    params: &SliceParams,
    policy: EssentialPolicy,
) -> Result<SlicedDiagrams> {
    params.validate()?;
    let slices = slice_points(points, frame, params)?;
    let n = slices.last().map_or(0, |s| s.index + 1);
    let mut diagrams = vec![PersistenceDiagram::default(); n];
    let mut occupied = vec![false; n];
    for slice in &slices {
        let cs = columnize(slice, params)?;
        diagrams[slice.index] = slice_diagram(&cs, params, policy);
        occupied[slice.index] = true;
    }
    Ok(SlicedDiagrams { diagrams, occupied })
}

/// Slices `points` in their own bounding-box frame.
pub fn cloud_diagrams(points: &[Point3], params: &SliceParams, policy: EssentialPolicy) -> Result<SlicedDiagrams> {
    let frame = SliceFrame::enclosing(points).ok_or(Error::EmptyCloud)?;
    slice_diagrams(points, &frame, params, policy)
}
