//! Brushed region masks: rasterization, wire format, mode cycling and
//! per-layer downscaling.

mod importance;

pub use importance::{apply_mask_modes, filter_importance, filter_importance_mean, raw_overlap, MaskImportance};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_EPSILON: f64 = 1e-8;

/// What a mask does to the direction. Clicking cycles off → preserve → discard → off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    #[default]
    Off,
    Preserve,
    Discard,
}

impl MaskMode {
    pub fn next(self) -> Self {
        match self {
            MaskMode::Off => MaskMode::Preserve,
            MaskMode::Preserve => MaskMode::Discard,
            MaskMode::Discard => MaskMode::Off,
        }
    }
}

/// Polyline in pixel coordinates (`[x, y]`, pixel centres at `+0.5`) swept by a round brush.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub points: Vec<[f64; 2]>,
    pub radius: f64,
}

impl Stroke {
    /// Sets every pixel whose centre lies within `radius` of the polyline.
    pub fn rasterize(&self, height: usize, width: usize) -> Result<Vec<bool>> {
        if self.points.is_empty() {
            return Err(Error::Argument("stroke has no points".into()));
        }
        if !(self.radius.is_finite() && self.radius >= 0.0) || self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Argument("stroke coordinates and radius must be finite".into()));
        }
        let r2 = self.radius * self.radius;
        let segments: Vec<([f64; 2], [f64; 2])> = if self.points.len() == 1 {
            vec![(self.points[0], self.points[0])]
        } else {
            self.points.windows(2).map(|w| (w[0], w[1])).collect()
        };
        let mut grid = vec![false; height * width];
        for y in 0..height {
            for x in 0..width {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                grid[y * width + x] = segments.iter().any(|&(a, b)| segment_dist2(p, a, b) <= r2);
            }
        }
        Ok(grid)
    }
}

fn segment_dist2(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    cx * cx + cy * cy
}

/// Binary region at image resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub id: String,
    height: usize,
    width: usize,
    grid: Vec<bool>,
    pub mode: MaskMode,
    /// Seed of the test image the mask was drawn on.
    pub created_from: u64,
    pub stroke: Option<Stroke>,
}

impl Mask {
    pub fn new(id: impl Into<String>, height: usize, width: usize, grid: Vec<bool>, created_from: u64) -> Result<Self> {
        let id = id.into();
        if grid.len() != height * width {
            return Err(Error::Structural(format!(
                "mask `{id}`: grid has {} cells, expected {height}×{width}",
                grid.len()
            )));
        }
        if !grid.iter().any(|&b| b) {
            return Err(Error::Argument(format!("mask `{id}` covers no pixels")));
        }
        Ok(Self {
            id,
            height,
            width,
            grid,
            mode: MaskMode::Off,
            created_from,
            stroke: None,
        })
    }

    pub fn from_stroke(id: impl Into<String>, height: usize, width: usize, stroke: Stroke, created_from: u64) -> Result<Self> {
        let grid = stroke.rasterize(height, width)?;
        let mut mask = Self::new(id, height, width, grid, created_from)?;
        mask.stroke = Some(stroke);
        Ok(mask)
    }

    /// Mask of a rectangle `[y0, y1) × [x0, x1)`.
    pub fn rect(id: impl Into<String>, height: usize, width: usize, y0: usize, x0: usize, y1: usize, x1: usize) -> Result<Self> {
        let grid = (0..height * width)
            .map(|i| {
                let (y, x) = (i / width, i % width);
                y >= y0 && y < y1 && x >= x0 && x < x1
            })
            .collect();
        Self::new(id, height, width, grid, 0)
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn grid(&self) -> &[bool] {
        &self.grid
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.grid[y * self.width + x]
    }

    pub fn with_mode(mut self, mode: MaskMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn to_wire(&self) -> MaskWire {
        let mut runs = Vec::new();
        for y in 0..self.height {
            let row = &self.grid[y * self.width..(y + 1) * self.width];
            let mut x = 0;
            while x < self.width {
                if row[x] {
                    let start = x;
                    while x < self.width && row[x] {
                        x += 1;
                    }
                    runs.push([y, start, x - start]);
                } else {
                    x += 1;
                }
            }
        }
        MaskWire {
            id: self.id.clone(),
            mode: self.mode,
            resolution: [self.height, self.width],
            runs,
            created_from: self.created_from,
            stroke: self.stroke.clone(),
        }
    }

    pub fn from_wire(wire: &MaskWire) -> Result<Self> {
        let [h, w] = wire.resolution;
        let mut grid = vec![false; h * w];
        for &[y, start, len] in &wire.runs {
            if y >= h || start + len > w {
                return Err(Error::Structural(format!(
                    "mask `{}`: run ({y}, {start}, {len}) outside {h}×{w}",
                    wire.id
                )));
            }
            grid[y * w + start..y * w + start + len].iter_mut().for_each(|c| *c = true);
        }
        let mut mask = Self::new(wire.id.clone(), h, w, grid, wire.created_from)?;
        mask.mode = wire.mode;
        mask.stroke = wire.stroke.clone();
        Ok(mask)
    }
}

/// Text form of a mask: set pixels as `[row, start, length]` runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskWire {
    pub id: String,
    pub mode: MaskMode,
    /// `[height, width]`.
    pub resolution: [usize; 2],
    pub runs: Vec<[usize; 3]>,
    #[serde(default)]
    pub created_from: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stroke: Option<Stroke>,
}

pub fn cycle_mask_mode(mask: &Mask) -> Mask {
    let mut next = mask.clone();
    next.mode = mask.mode.next();
    next
}

/// Area-average pooling of the mask onto an `h × w` grid.
///
/// Cell `(i, j)` holds the fraction of its footprint covered by set pixels.
/// Footprints need not align with pixel boundaries; overlaps are counted in
/// units of `1/h` by `1/w` pixels, so the numerator is an exact integer.
pub fn downscale_mask<S: Scalar>(mask: &Mask, h: usize, w: usize) -> Result<Vec<S>> {
    if h == 0 || w == 0 {
        return Err(Error::Argument(format!("cannot downscale mask to {h}×{w}")));
    }
    let (mh, mw) = mask.resolution();
    // overlap of cell `i` ([i·n, (i+1)·n)) with pixel `p` ([p·cells, (p+1)·cells))
    let overlaps = |n: usize, cells: usize| -> Vec<Vec<(usize, usize)>> {
        (0..cells)
            .map(|i| {
                let (lo, hi) = (i * n, (i + 1) * n);
                (lo / cells..hi.div_ceil(cells))
                    .filter_map(|p| {
                        let o = hi.min((p + 1) * cells).saturating_sub(lo.max(p * cells));
                        (o > 0).then_some((p, o))
                    })
                    .collect()
            })
            .collect()
    };
    let ys = overlaps(mh, h);
    let xs = overlaps(mw, w);
    let denom = S::of_usize(mh * mw);
    let mut out = Vec::with_capacity(h * w);
    for row in &ys {
        for col in &xs {
            let mut covered = 0usize;
            for &(py, oy) in row {
                for &(px, ox) in col {
                    if mask.get(py, px) {
                        covered += oy * ox;
                    }
                }
            }
            out.push(S::of_usize(covered) / denom);
        }
    }
    Ok(out)
}
