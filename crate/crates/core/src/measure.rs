//! Bounding box → Kalman measurement `(center, yaw)`.
//!
//! A detection is a rotated box with four unordered pixel corners. The corner
//! nearest the principal point is the only one whose height is known: its two
//! sides hug the bottom of the chassis, so it sits at the clearance height and
//! its relief displacement can be removed exactly. The box is then rebuilt
//! from that anchor with the known vehicle length and width.
//!
//! Detection masks are assumed to cover the chassis only (no tires or mirrors).

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::angle::wrap_pi;
use crate::georef::FrameMapping;
use crate::Vec2;

/// Default opposite-side agreement for the rectangularity gate.
pub const DEFAULT_RECT_TOLERANCE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeasureError {
    #[error("degenerate bounding box: {0}")]
    DegenerateBox(&'static str),
    #[error("corner height {height} m is not below the camera at {altitude} m")]
    CornerAboveCamera { height: f64, altitude: f64 },
    #[error("negative corner height {0} m")]
    NegativeHeight(f64),
    #[error("zero side length")]
    ZeroSideLength,
    #[error("invalid vehicle dimensions: {0}")]
    InvalidDims(&'static str),
    #[error("invalid camera geometry: {0}")]
    InvalidCamera(&'static str),
}

/// Four corners of a detected vehicle, pixels, in no particular order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedBBox {
    pub corners: [Vec2; 4],
}

impl RotatedBBox {
    pub fn new(corners: [Vec2; 4]) -> Result<Self, MeasureError> {
        if corners.iter().any(|c| !c.x.is_finite() || !c.y.is_finite()) {
            return Err(MeasureError::DegenerateBox("non-finite corner"));
        }
        for i in 0..4 {
            for j in i + 1..4 {
                if corners[i] == corners[j] {
                    return Err(MeasureError::DegenerateBox("coincident corners"));
                }
            }
        }
        Ok(Self { corners })
    }

    /// Corners sorted counter-clockwise around their centroid.
    pub fn ordered(&self) -> [Vec2; 4] {
        let c = self.corners.iter().sum::<Vec2>() / 4.0;
        let mut out = self.corners;
        out.sort_by(|a, b| (a.y - c.y).atan2(a.x - c.x).total_cmp(&(b.y - c.y).atan2(b.x - c.x)));
        out
    }

    /// Convex, with opposite sides agreeing within `tolerance` (fraction).
    pub fn is_near_rectangular(&self, tolerance: f64) -> bool {
        let p = self.ordered();
        let side = |i: usize| (p[(i + 1) % 4] - p[i]).norm();
        let convex = (0..4).all(|i| {
            let a = p[(i + 1) % 4] - p[i];
            let b = p[(i + 2) % 4] - p[(i + 1) % 4];
            a.x * b.y - a.y * b.x > 0.0
        });
        let agree = |a: f64, b: f64| (a - b).abs() <= tolerance * a.max(b);
        convex && agree(side(0), side(2)) && agree(side(1), side(3))
    }
}

/// Known (or generic) vehicle dimensions, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleDims {
    pub width: f64,
    pub length: f64,
    /// Height of the chassis bottom above ground.
    pub clearance: f64,
}

impl Default for VehicleDims {
    /// Generic passenger car.
    fn default() -> Self {
        Self { width: 1.80, length: 4.50, clearance: 0.15 }
    }
}

impl VehicleDims {
    pub fn validate(&self) -> Result<(), MeasureError> {
        if !(self.width > 0.0 && self.width < self.length) {
            return Err(MeasureError::InvalidDims("need 0 < width < length"));
        }
        if !(0.05..=0.5).contains(&self.clearance) {
            return Err(MeasureError::InvalidDims("clearance outside [0.05, 0.5] m"));
        }
        Ok(())
    }
}

/// Nadir camera geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraGeometry {
    /// `(r_x, r_y)` pixels.
    pub resolution: [f64; 2],
    /// Meters above the ground plane.
    pub hover_altitude: f64,
    /// Meters per pixel at ground level.
    pub alpha: f64,
}

impl CameraGeometry {
    pub fn new(resolution: [f64; 2], hover_altitude: f64, alpha: f64) -> Result<Self, MeasureError> {
        let cam = Self { resolution, hover_altitude, alpha };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), MeasureError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if positive(self.resolution[0])
            && positive(self.resolution[1])
            && positive(self.hover_altitude)
            && positive(self.alpha)
        {
            Ok(())
        } else {
            Err(MeasureError::InvalidCamera("all fields must be positive"))
        }
    }

    /// Image centre `(r_x/2, r_y/2)`.
    pub fn principal_point(&self) -> Vec2 {
        Vec2::new(self.resolution[0] / 2.0, self.resolution[1] / 2.0)
    }

    /// Pixel coordinates relative to the image centre.
    pub fn seen(&self, p: Vec2) -> Vec2 {
        p - self.principal_point()
    }
}

/// Result of the side-length ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideOrder {
    pub anchor: usize,
    /// Corner across the short side (`k`).
    pub width_corner: usize,
    /// Corner across the long side (`j`).
    pub length_corner: usize,
    pub diagonal_corner: usize,
    /// Distances from the anchor, ascending.
    pub s: [f64; 3],
}

/// Orders the three non-anchor corners by distance from `anchor`; ties go
/// to the lower corner index.
pub fn side_order(bbox: &RotatedBBox, anchor: usize) -> Result<SideOrder, MeasureError> {
    let a = bbox.corners[anchor];
    let mut others: Vec<(f64, usize)> =
        (0..4).filter(|&i| i != anchor).map(|i| ((bbox.corners[i] - a).norm(), i)).collect();
    others.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    if others[0].0 == 0.0 {
        return Err(MeasureError::DegenerateBox("zero side"));
    }
    Ok(SideOrder {
        anchor,
        width_corner: others[0].1,
        length_corner: others[1].1,
        diagonal_corner: others[2].1,
        s: [others[0].0, others[1].0, others[2].0],
    })
}

/// Center of the axis-aligned extent of the (mapped) corners.
pub fn raw_center(corners: &[Vec2; 4]) -> Vec2 {
    let (mut lo, mut hi) = (corners[0], corners[0]);
    for c in &corners[1..] {
        lo = lo.inf(c);
        hi = hi.sup(c);
    }
    (lo + hi) / 2.0
}

/// Direction from the anchor to the length corner, in `(-π, π]`.
pub fn raw_yaw(corners: &[Vec2; 4], anchor: usize, length_corner: usize) -> Result<f64, MeasureError> {
    let d = corners[length_corner] - corners[anchor];
    if d.norm() == 0.0 {
        return Err(MeasureError::DegenerateBox("anchor and length corner coincide"));
    }
    Ok(wrap_pi(d.y.atan2(d.x)))
}

fn check_height(h: f64, cam: &CameraGeometry) -> Result<(), MeasureError> {
    if h < 0.0 {
        return Err(MeasureError::NegativeHeight(h));
    }
    if h >= cam.hover_altitude {
        return Err(MeasureError::CornerAboveCamera { height: h, altitude: cam.hover_altitude });
    }
    Ok(())
}

/// Removes the relief displacement of a corner at height `h_corner`,
/// returning the corrected pixel.
pub fn relief_shift(corner: Vec2, h_corner: f64, cam: &CameraGeometry) -> Result<Vec2, MeasureError> {
    check_height(h_corner, cam)?;
    let shift = cam.seen(corner) * (h_corner / cam.hover_altitude);
    Ok(corner - shift)
}

/// `η_b,i`: corner error from a 1 px detection ambiguity amplified by the
/// relief correction, meters.
pub fn corner_error_bound(h_corner: f64, cam: &CameraGeometry) -> f64 {
    (SQRT_2 + h_corner / cam.hover_altitude) * cam.alpha
}

/// `η_scale`: worst positioning error at `corner` when its height is only
/// known to lie in `[h_min, h_max]`, meters.
pub fn scale_error_bound(corner: Vec2, cam: &CameraGeometry, h_min: f64, h_max: f64) -> f64 {
    cam.seen(corner).norm() * cam.alpha * (h_max - h_min) / (2.0 * cam.hover_altitude)
}

/// Rebuilds the box from the relief-corrected anchor with the known
/// dimensions and returns its centre (pixels).
///
/// Side directions come from the detected box (`anchor_raw → corner`);
/// their lengths are replaced by `length/α` and `width/α`.
pub fn rescale_box(
    anchor_corrected: Vec2,
    anchor_raw: Vec2,
    length_corner: Vec2,
    width_corner: Vec2,
    dims: &VehicleDims,
    alpha: f64,
) -> Result<Vec2, MeasureError> {
    let dl = length_corner - anchor_raw;
    let dw = width_corner - anchor_raw;
    let (sl, sw) = (dl.norm(), dw.norm());
    if sl == 0.0 || sw == 0.0 {
        return Err(MeasureError::ZeroSideLength);
    }
    let bj = dl * (dims.length / (sl * alpha)) + anchor_corrected;
    let bk = dw * (dims.width / (sw * alpha)) + anchor_corrected;
    Ok((bj + bk) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Ok,
    /// Failed the rectangularity gate; no relief correction or rescaling applied.
    NonRectangular,
}

impl Quality {
    pub fn as_str(self) -> &'static str {
        match self {
            Quality::Ok => "ok",
            Quality::NonRectangular => "non_rectangular",
        }
    }
}

/// One Kalman measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub frame: i64,
    /// LTP meters.
    pub center: Vec2,
    /// Box direction in `(-π, π]`; the heading may be this plus π.
    pub yaw: f64,
    pub est_width: f64,
    pub est_length: f64,
    pub quality: Quality,
}

/// Options for [`make_measurement`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    /// Used when a detection carries no specific dimensions.
    pub generic_dims: VehicleDims,
    pub rect_tolerance: f64,
    pub relief_correction: bool,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self { generic_dims: VehicleDims::default(), rect_tolerance: DEFAULT_RECT_TOLERANCE, relief_correction: true }
    }
}

/// Index of the corner nearest the principal point, ties by index.
pub fn anchor_corner(bbox: &RotatedBBox, cam: &CameraGeometry) -> usize {
    let pp = cam.principal_point();
    let mut best = 0;
    for i in 1..4 {
        if (bbox.corners[i] - pp).norm() < (bbox.corners[best] - pp).norm() {
            best = i;
        }
    }
    best
}

/// Full measurement chain for one stabilized detection.
pub fn make_measurement(
    frame: i64,
    bbox: &RotatedBBox,
    mapping: &FrameMapping,
    cam: &CameraGeometry,
    dims: Option<&VehicleDims>,
    cfg: &MeasureConfig,
) -> Result<Measurement, MeasureError> {
    cam.validate()?;
    let dims = dims.unwrap_or(&cfg.generic_dims);
    let anchor = anchor_corner(bbox, cam);
    let order = side_order(bbox, anchor)?;
    let mapped = bbox.corners.map(|c| mapping.map_pixel(c));
    let yaw = raw_yaw(&mapped, anchor, order.length_corner)?;
    let est_width = order.s[0] * mapping.alpha;
    let est_length = order.s[1] * mapping.alpha;

    if !bbox.is_near_rectangular(cfg.rect_tolerance) {
        return Ok(Measurement {
            frame,
            center: raw_center(&mapped),
            yaw,
            est_width,
            est_length,
            quality: Quality::NonRectangular,
        });
    }

    let a_raw = bbox.corners[anchor];
    let a_corr = if cfg.relief_correction { relief_shift(a_raw, dims.clearance, cam)? } else { a_raw };
    let center_px = rescale_box(
        a_corr,
        a_raw,
        bbox.corners[order.length_corner],
        bbox.corners[order.width_corner],
        dims,
        mapping.alpha,
    )?;
    Ok(Measurement { frame, center: mapping.map_pixel(center_px), yaw, est_width, est_length, quality: Quality::Ok })
}
