//! Box algebra, IoU, per-box depth aggregation and the fused RGB-D similarity.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Axis-aligned pixel rectangle; `(x1, y1)` is the top-left corner.
///
/// Construction validates `x2 > x1`, `y2 > y1` and finiteness, so every
/// `BBox` in circulation has positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(GeometryError::NonFinite([x1, y1, x2, y2]));
        }
        if x2 <= x1 || y2 <= y1 {
            return Err(GeometryError::Degenerate([x1, y1, x2, y2]));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn from_array(c: [f64; 4]) -> Result<Self, GeometryError> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    /// Builds a box from center, area and aspect ratio (`w / h`).
    pub fn from_center_area_ratio(cx: f64, cy: f64, area: f64, ratio: f64) -> Result<Self, GeometryError> {
        let w = (area * ratio).sqrt();
        let h = area / w;
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    /// Intersection with the `[0, width] x [0, height]` frame, or `None` when empty.
    pub fn clip(&self, width: f64, height: f64) -> Option<Self> {
        Self::new(
            self.x1.max(0.0),
            self.y1.max(0.0),
            self.x2.min(width),
            self.y2.min(height),
        )
        .ok()
    }

    fn intersection_area(&self, other: &Self) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            x1: f64,
            y1: f64,
            x2: f64,
            y2: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        BBox::new(raw.x1, raw.y1, raw.x2, raw.y2).map_err(serde::de::Error::custom)
    }
}

/// Intersection over union. Symmetric by construction: the intersection is
/// computed with commutative min/max and the union sums both areas in a fixed
/// order.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Per-pixel metric depth in meters, row-major. A value of `0.0` marks an
/// invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self, GeometryError> {
        if values.len() != width * height {
            return Err(GeometryError::DepthShape {
                expected: width * height,
                actual: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(GeometryError::InvalidDepth(f64::from(*v)));
        }
        Ok(Self { width, height, values })
    }

    pub fn filled(width: usize, height: usize, meters: f32) -> Self {
        Self::new(width, height, vec![meters; width * height]).expect("constant fill is valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Sets every pixel whose center lies inside `b` to `meters`.
    pub fn fill_box(&mut self, b: &BBox, meters: f32) {
        if let Some((xs, ys)) = self.pixel_span(b) {
            for y in ys {
                let row = y * self.width;
                self.values[row + xs.start..row + xs.end].fill(meters);
            }
        }
    }

    /// Pixel columns and rows whose centers fall in the box clipped to the
    /// image, using half-open `[x1, x2)` membership on the center coordinate.
    fn pixel_span(&self, b: &BBox) -> Option<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let clipped = b.clip(self.width as f64, self.height as f64)?;
        let span = |lo: f64, hi: f64, limit: usize| {
            let start = ((lo - 0.5).ceil().max(0.0) as usize).min(limit);
            let end = ((hi - 0.5).ceil().max(0.0) as usize).min(limit);
            start..end
        };
        let xs = span(clipped.x1, clipped.x2, self.width);
        let ys = span(clipped.y1, clipped.y2, self.height);
        if xs.is_empty() || ys.is_empty() {
            None
        } else {
            Some((xs, ys))
        }
    }
}

/// Mean of the valid (nonzero) depth pixels inside the box, or `None` when the
/// clipped box covers no valid pixel.
pub fn mean_box_depth(depth: &DepthMap, b: &BBox) -> Option<f64> {
    let (xs, ys) = depth.pixel_span(b)?;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for y in ys {
        let row = &depth.values[y * depth.width + xs.start..y * depth.width + xs.end];
        for &v in row {
            if v > 0.0 {
                sum += f64::from(v);
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// `exp(-|d_det - d_trk| / sigma)`.
pub fn depth_similarity(d_det: f64, d_trk: f64, sigma: f64) -> f64 {
    (-(d_det - d_trk).abs() / sigma).exp()
}

/// Fusion weight, depth-decay scale and the neutral stand-in used when a
/// depth similarity cannot be computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    pub alpha: f64,
    pub sigma: f64,
    pub s_neutral: f64,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            sigma: 0.5,
            s_neutral: 0.5,
        }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(GeometryError::Param("alpha must lie in [0, 1]"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(GeometryError::Param("sigma must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&self.s_neutral) {
            return Err(GeometryError::Param("s_neutral must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Depth similarity for two optional depths; `None` when either is missing.
    pub fn depth_term(&self, d_det: Option<f64>, d_trk: Option<f64>) -> Option<f64> {
        Some(depth_similarity(d_det?, d_trk?, self.sigma))
    }
}

/// `alpha * iou + (1 - alpha) * s_d`, with `s_neutral` standing in for a
/// missing depth similarity.
pub fn rgbd_similarity(iou_score: f64, s_d: Option<f64>, params: &SimilarityParams) -> f64 {
    let depth = s_d.unwrap_or(params.s_neutral);
    params.alpha * iou_score + (1.0 - params.alpha) * depth
}
