//! Raster plots: persistence images tiled per slice and birth-persistence
//! scatter plots.

use image::{Rgb, RgbImage};
use slicetopo::{ObjectDescriptor, PersistenceDiagram};

/// Side of one persistence-image cell in pixels.
pub const CELL: u32 = 12;
/// Gap between tiles in pixels.
pub const GAP: u32 = 4;
pub const SCATTER_SIZE: u32 = 480;
pub const SCATTER_MARGIN: u32 = 40;
const MARKER_HALF: u32 = 3;

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([0, 0, 0]);
const DIAGONAL: Rgb<u8> = Rgb([190, 190, 190]);
pub const MARKER: Rgb<u8> = Rgb([200, 30, 30]);

/// Dark-to-bright ramp for intensities in [0, 1].
fn colormap(t: f64) -> Rgb<u8> {
    const STOPS: [[f64; 3]; 5] = [
        [0.0, 0.0, 4.0],
        [87.0, 16.0, 110.0],
        [188.0, 55.0, 84.0],
        [249.0, 142.0, 9.0],
        [252.0, 255.0, 164.0],
    ];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let c = |k: usize| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

/// One `rows x cols` tile per present slice, left to right, lowest slice
/// first. Persistence increases upwards inside a tile and all tiles share
/// one intensity scale.
pub fn descriptor_image(desc: &ObjectDescriptor, rows: usize, cols: usize) -> RgbImage {
    let k = desc.n_slices as u32;
    let tile_w = cols as u32 * CELL;
    let tile_h = rows as u32 * CELL;
    let width = (k * tile_w + k.saturating_sub(1) * GAP).max(1);
    let mut img = RgbImage::from_pixel(width, tile_h.max(1), BACKGROUND);
    let peak = desc.values[..desc.n_slices * desc.pi_size]
        .iter()
        .fold(0.0f64, |m, v| m.max(*v));
    for s in 0..desc.n_slices {
        let block = desc.block(s);
        let x0 = s as u32 * (tile_w + GAP);
        for r in 0..rows {
            for c in 0..cols {
                let v = block[r * cols + c];
                let color = colormap(if peak > 0.0 { v / peak } else { 0.0 });
                let y0 = (rows - 1 - r) as u32 * CELL;
                for dy in 0..CELL {
                    for dx in 0..CELL {
                        img.put_pixel(x0 + c as u32 * CELL + dx, y0 + dy, color);
                    }
                }
            }
        }
    }
    img
}

/// Maps diagram coordinates to pixels of the scatter plot. Both axes share
/// the range `[0, limit]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterLayout {
    pub limit: f64,
}

impl ScatterLayout {
    pub fn for_diagram(pd: &PersistenceDiagram) -> Self {
        let top = pd
            .points
            .iter()
            .fold(0.0f64, |m, p| m.max(p.birth).max(p.persistence()));
        Self {
            limit: if top > 0.0 { 1.1 * top } else { 1.0 },
        }
    }

    /// Pixel of `(birth, persistence)`.
    pub fn to_pixel(&self, birth: f64, persistence: f64) -> (u32, u32) {
        let span = (SCATTER_SIZE - 2 * SCATTER_MARGIN) as f64;
        let x = SCATTER_MARGIN as f64 + (birth / self.limit).clamp(0.0, 1.0) * span;
        let y = (SCATTER_SIZE - SCATTER_MARGIN) as f64 - (persistence / self.limit).clamp(0.0, 1.0) * span;
        (x.round() as u32, y.round() as u32)
    }
}

/// Birth on x, persistence on y, one square marker per finite pair.
pub fn diagram_image(pd: &PersistenceDiagram) -> RgbImage {
    let mut img = RgbImage::from_pixel(SCATTER_SIZE, SCATTER_SIZE, BACKGROUND);
    let layout = ScatterLayout::for_diagram(pd);
    let (x0, y0) = layout.to_pixel(0.0, 0.0);
    let (x1, y1) = layout.to_pixel(layout.limit, layout.limit);
    for i in 0..=(x1 - x0) {
        // Reference line persistence = birth.
        img.put_pixel(x0 + i, y0 - i * (y0 - y1) / (x1 - x0), DIAGONAL);
    }
    for x in x0..=x1 {
        img.put_pixel(x, y0, AXIS);
    }
    for y in y1..=y0 {
        img.put_pixel(x0, y, AXIS);
    }
    for p in &pd.points {
        let (cx, cy) = layout.to_pixel(p.birth, p.persistence());
        for y in cy.saturating_sub(MARKER_HALF)..=(cy + MARKER_HALF).min(SCATTER_SIZE - 1) {
            for x in cx.saturating_sub(MARKER_HALF)..=(cx + MARKER_HALF).min(SCATTER_SIZE - 1) {
                img.put_pixel(x, y, MARKER);
            }
        }
    }
    img
}
