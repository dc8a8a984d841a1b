//! Persistence images and stacked, zero-padded object descriptors.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::topology::PersistenceDiagram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Weight grows linearly with persistence, reaching 1 at the top of the
    /// persistence range.
    #[default]
    LinearPersistence,
    Constant,
}

/// Grid, ranges and kernel of a persistence image. Columns run along birth,
/// rows along persistence; cells are sampled at their centres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiParams {
    pub rows: usize,
    pub cols: usize,
    pub birth_range: (f64, f64),
    pub pers_range: (f64, f64),
    pub bandwidth: f64,
    pub weighting: Weighting,
}

impl PiParams {
    pub const DEFAULT_GRID: (usize, usize) = (16, 16);

    /// Ranges `[0, max]` over the pooled diagrams (1 when a range would be
    /// empty) and bandwidth `pers_range.1 / 16` unless given.
    pub fn calibrate<'a>(
        diagrams: impl IntoIterator<Item = &'a PersistenceDiagram>,
        grid: (usize, usize),
        bandwidth: Option<f64>,
        weighting: Weighting,
    ) -> Result<Self> {
        let (mut max_birth, mut max_pers) = (0.0f64, 0.0f64);
        for pd in diagrams {
            for p in &pd.points {
                max_birth = max_birth.max(p.birth);
                max_pers = max_pers.max(p.persistence());
            }
        }
        let positive = |v: f64| if v > 0.0 { v } else { 1.0 };
        let pers_hi = positive(max_pers);
        let params = Self {
            rows: grid.0,
            cols: grid.1,
            birth_range: (0.0, positive(max_birth)),
            pers_range: (0.0, pers_hi),
            bandwidth: bandwidth.unwrap_or(pers_hi / 16.0),
            weighting,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let ranges_ok = self.birth_range.1 > self.birth_range.0 && self.pers_range.1 > self.pers_range.0;
        let finite = [
            self.birth_range.0,
            self.birth_range.1,
            self.pers_range.0,
            self.pers_range.1,
            self.bandwidth,
        ]
        .iter()
        .all(|v| v.is_finite());
        if self.rows == 0 || self.cols == 0 || !(self.bandwidth > 0.0) || !ranges_ok || !finite {
            return Err(Error::InvalidParams(format!(
                "persistence image needs a positive grid, positive bandwidth and non-empty ranges \
                 (grid {}x{}, bandwidth {}, birth {:?}, persistence {:?})",
                self.rows, self.cols, self.bandwidth, self.birth_range, self.pers_range
            )));
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.rows * self.cols
    }

    pub fn birth_center(&self, col: usize) -> f64 {
        let (lo, hi) = self.birth_range;
        lo + (col as f64 + 0.5) * (hi - lo) / self.cols as f64
    }

    pub fn pers_center(&self, row: usize) -> f64 {
        let (lo, hi) = self.pers_range;
        lo + (row as f64 + 0.5) * (hi - lo) / self.rows as f64
    }

    pub fn cell_area(&self) -> f64 {
        (self.birth_range.1 - self.birth_range.0) / self.cols as f64
            * (self.pers_range.1 - self.pers_range.0)
            / self.rows as f64
    }

    fn max_weight(&self) -> f64 {
        match self.weighting {
            Weighting::Constant => 1.0,
            Weighting::LinearPersistence => {
                self.pers_range.0.abs().max(self.pers_range.1.abs()) / self.pers_range.1
            }
        }
    }

    /// Bound on how much one diagram point moving by a Euclidean distance of
    /// 1 in the birth-persistence plane can change any image entry: the
    /// kernel's maximal slope `w_max / (2 pi s^2) / s * e^(-1/2)`, plus the
    /// change of a linear weight times the kernel peak.
    pub fn lipschitz_per_point(&self) -> f64 {
        let s = self.bandwidth;
        let peak = 1.0 / (2.0 * PI * s * s);
        let slope = self.max_weight() * peak / s * (-0.5f64).exp();
        match self.weighting {
            Weighting::Constant => slope,
            Weighting::LinearPersistence => slope + peak / self.pers_range.1,
        }
    }
}

/// A `rows x cols` image stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceImage {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl PersistenceImage {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }
}

/// Gaussian-smoothed birth-persistence image of a diagram's finite pairs.
/// Pairs outside the ranges are clamped onto the range boundary; pairs are
/// accumulated in sorted order.
pub fn persistence_image(pd: &PersistenceDiagram, params: &PiParams) -> Result<PersistenceImage> {
    params.validate()?;
    let mut pts: Vec<(f64, f64)> = pd
        .points
        .iter()
        .map(|p| {
            (
                p.birth.clamp(params.birth_range.0, params.birth_range.1),
                p.persistence().clamp(params.pers_range.0, params.pers_range.1),
            )
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let s = params.bandwidth;
    let norm = 1.0 / (2.0 * PI * s * s);
    let inv = 1.0 / (2.0 * s * s);
    let births: Vec<f64> = (0..params.cols).map(|c| params.birth_center(c)).collect();
    let perss: Vec<f64> = (0..params.rows).map(|r| params.pers_center(r)).collect();

    let mut values = vec![0.0; params.size()];
    let mut gx = vec![0.0; params.cols];
    for &(b, p) in &pts {
        let w = match params.weighting {
            Weighting::Constant => 1.0,
            Weighting::LinearPersistence => p / params.pers_range.1,
        };
        for (g, &cb) in gx.iter_mut().zip(&births) {
            *g = (-(cb - b) * (cb - b) * inv).exp();
        }
        for (r, &cp) in perss.iter().enumerate() {
            let gy = w * norm * (-(cp - p) * (cp - p) * inv).exp();
            let row = &mut values[r * params.cols..(r + 1) * params.cols];
            for (v, g) in row.iter_mut().zip(&gx) {
                *v += gy * g;
            }
        }
    }
    Ok(PersistenceImage {
        rows: params.rows,
        cols: params.cols,
        values,
    })
}

/// Per-slice images concatenated in slice order, zero-padded to a fixed
/// number of slices.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectDescriptor {
    pub values: Vec<f64>,
    /// Slices actually present (the rest is padding).
    pub n_slices: usize,
    pub pi_size: usize,
}

impl ObjectDescriptor {
    pub fn padded_slices(&self) -> usize {
        self.values.len().checked_div(self.pi_size).unwrap_or(0)
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.values[i * self.pi_size..(i + 1) * self.pi_size]
    }

    /// One value per line, 17 significant digits, after a `#` header naming
    /// the slice count and image size.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 24 + 64);
        let _ = writeln!(
            out,
            "# slices={} padded={} pi_size={}",
            self.n_slices,
            self.padded_slices(),
            self.pi_size
        );
        for v in &self.values {
            let _ = writeln!(out, "{v:.16e}");
        }
        out
    }

    /// Parses the dump format. Without a header the whole vector is taken as
    /// `fallback_pi_size`-sized blocks, all counted as present.
    pub fn from_text(text: &str, fallback_pi_size: usize) -> Result<Self> {
        let mut values = Vec::new();
        let mut header: Option<(usize, usize)> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(comment) = line.strip_prefix('#') {
                let mut slices = None;
                let mut pi = None;
                for field in comment.split_whitespace() {
                    if let Some(v) = field.strip_prefix("slices=") {
                        slices = v.parse().ok();
                    } else if let Some(v) = field.strip_prefix("pi_size=") {
                        pi = v.parse().ok();
                    }
                }
                if let (Some(s), Some(p)) = (slices, pi) {
                    header = Some((s, p));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let v: f64 = line
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::parse(i + 1, format!("invalid value '{line}'")))?;
            values.push(v);
        }
        let (n_slices, pi_size) = match header {
            Some(h) => h,
            None => {
                if fallback_pi_size == 0 {
                    return Err(Error::InvalidParams("image size must be positive".into()));
                }
                (values.len() / fallback_pi_size, fallback_pi_size)
            }
        };
        if pi_size == 0 || values.len() % pi_size != 0 || n_slices * pi_size > values.len() {
            return Err(Error::parse(
                0,
                format!(
                    "{} values do not form {n_slices} blocks of {pi_size}",
                    values.len()
                ),
            ));
        }
        Ok(Self {
            values,
            n_slices,
            pi_size,
        })
    }
}

pub fn build_descriptor(
    slices: &[PersistenceDiagram],
    n_slices_padded: usize,
    params: &PiParams,
) -> Result<ObjectDescriptor> {
    if slices.len() > n_slices_padded {
        return Err(Error::TooManySlices {
            got: slices.len(),
            max: n_slices_padded,
        });
    }
    params.validate()?;
    let pi_size = params.size();
    let mut values = Vec::with_capacity(n_slices_padded * pi_size);
    for pd in slices {
        values.extend(persistence_image(pd, params)?.values);
    }
    values.resize(n_slices_padded * pi_size, 0.0);
    Ok(ObjectDescriptor {
        values,
        n_slices: slices.len(),
        pi_size,
    })
}
