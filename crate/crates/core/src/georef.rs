//! Pixel coordinate frame (PCF) → local tangent plane (LTP) mapping.
//!
//! A nadir camera over flat ground is modelled as a similarity: a scale `α`
//! (meters per pixel), an orientation offset `ξ_θ` and a linear offset `ξ_d`.
//! A pixel maps to the ground as `R(ξ_θ)ᵀ (α·p) − ξ_d`.
//!
//! PCF coordinates here use the mathematical y-up convention. Raw image rows
//! must be flipped once on ingest (see [`crate::io::flip_row`]).
//!
//! The second half of the module bounds what a pixel ambiguity `ζ` on the
//! ground control points does to each of the three parameters.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::angle::{circular_mean, rotate, wrap_pi};
use crate::Vec2;

/// Pairs closer than this (in pixels) are rejected instead of producing a huge `α`.
pub const MIN_PAIR_SEPARATION_PX: f64 = 1e-6;
const MIN_PAIR_SEPARATION_M: f64 = 1e-9;

/// Default pixel ambiguity.
pub const DEFAULT_ZETA_PX: f64 = 1.0;

/// Default minimum GCP separation for multi-pair compensation, as a fraction
/// of the image diagonal.
pub const DEFAULT_MIN_SEPARATION_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeorefError {
    #[error("at least 2 ground control points are required, got {found}")]
    InsufficientGcps { found: usize },
    #[error("ground control points `{0}` and `{1}` coincide")]
    CoincidentGcps(String, String),
    #[error("unknown ground control point `{0}`")]
    UnknownGcp(String),
    #[error("ground control point `{id}` lies outside the {width}x{height} image")]
    OutOfImage { id: String, width: f64, height: f64 },
    #[error("GCP pixel distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("pixel ambiguity must be non-negative, got {0}")]
    NegativeZeta(f64),
    #[error("baseline between the two GCPs is zero")]
    ZeroBaseline,
    #[error("invalid mapping: {0}")]
    InvalidMapping(&'static str),
}

/// Surveyed marker visible in the image.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundControlPoint {
    pub id: String,
    /// Meters, LTP (east, north).
    pub ltp: Vec2,
    /// Pixels, PCF (y-up).
    pub pcf: Vec2,
}

impl GroundControlPoint {
    pub fn new(id: impl Into<String>, ltp: Vec2, pcf: Vec2) -> Self {
        Self { id: id.into(), ltp, pcf }
    }

    pub fn validate(&self, width: f64, height: f64) -> Result<(), GeorefError> {
        let inside = self.pcf.x >= 0.0 && self.pcf.y >= 0.0 && self.pcf.x <= width && self.pcf.y <= height;
        if inside {
            Ok(())
        } else {
            Err(GeorefError::OutOfImage { id: self.id.clone(), width, height })
        }
    }
}

/// Similarity mapping from PCF pixels to LTP meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMapping {
    /// Meters per pixel.
    pub alpha: f64,
    /// `ξ_θ`, radians in `(-π, π]`.
    pub theta_offset: f64,
    /// `ξ_d`, meters.
    pub linear_offset: [f64; 2],
    pub source_gcp_ids: (String, String),
}

impl FrameMapping {
    pub fn new(alpha: f64, theta_offset: f64, linear_offset: Vec2) -> Result<Self, GeorefError> {
        let m = Self {
            alpha,
            theta_offset: wrap_pi(theta_offset),
            linear_offset: [linear_offset.x, linear_offset.y],
            source_gcp_ids: (String::new(), String::new()),
        };
        m.validate()?;
        Ok(m)
    }

    /// Unit scale, no rotation, no offset.
    pub fn identity() -> Self {
        Self::new(1.0, 0.0, Vec2::zeros()).expect("identity mapping is valid")
    }

    pub fn validate(&self) -> Result<(), GeorefError> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(GeorefError::InvalidMapping("alpha must be positive and finite"));
        }
        if !self.theta_offset.is_finite() || self.linear_offset.iter().any(|v| !v.is_finite()) {
            return Err(GeorefError::InvalidMapping("non-finite parameter"));
        }
        Ok(())
    }

    pub fn offset(&self) -> Vec2 {
        Vec2::new(self.linear_offset[0], self.linear_offset[1])
    }

    /// Pixel → LTP meters.
    pub fn map_pixel(&self, p: Vec2) -> Vec2 {
        rotate(p * self.alpha, -self.theta_offset) - self.offset()
    }

    /// LTP meters → pixel; exact inverse of [`Self::map_pixel`].
    pub fn unmap(&self, ltp: Vec2) -> Vec2 {
        rotate(ltp + self.offset(), self.theta_offset) / self.alpha
    }

    /// Maps a pixel-frame direction angle into the LTP.
    pub fn map_angle(&self, pcf_angle: f64) -> f64 {
        wrap_pi(pcf_angle - self.theta_offset)
    }
}

fn find<'a>(gcps: &'a [GroundControlPoint], id: &str) -> Result<&'a GroundControlPoint, GeorefError> {
    gcps.iter().find(|g| g.id == id).ok_or_else(|| GeorefError::UnknownGcp(id.to_owned()))
}

/// Fits the mapping from the ordered pair `(first, second)`.
pub fn fit_mapping(gcps: &[GroundControlPoint], pair: (&str, &str)) -> Result<FrameMapping, GeorefError> {
    if gcps.len() < 2 {
        return Err(GeorefError::InsufficientGcps { found: gcps.len() });
    }
    let a = find(gcps, pair.0)?;
    let b = find(gcps, pair.1)?;
    fit_pair(a, b)
}

fn fit_pair(a: &GroundControlPoint, b: &GroundControlPoint) -> Result<FrameMapping, GeorefError> {
    let d_pcf = b.pcf - a.pcf;
    let d_ltp = b.ltp - a.ltp;
    if d_pcf.norm() < MIN_PAIR_SEPARATION_PX || d_ltp.norm() < MIN_PAIR_SEPARATION_M {
        return Err(GeorefError::CoincidentGcps(a.id.clone(), b.id.clone()));
    }
    let alpha = d_ltp.norm() / d_pcf.norm();
    let a_m = a.pcf * alpha;
    let d_m = d_pcf * alpha;
    let theta_pcf = d_m.y.atan2(d_m.x);
    let theta_ltp = d_ltp.y.atan2(d_ltp.x);
    let theta_offset = wrap_pi(theta_pcf - theta_ltp);
    let rotated = rotate(a_m, -theta_offset);
    let offset = rotated - a.ltp;
    let mut m = FrameMapping::new(alpha, theta_offset, offset)?;
    m.source_gcp_ids = (a.id.clone(), b.id.clone());
    Ok(m)
}

/// Options for [`compensate_gcps`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensationConfig {
    /// Pairs closer than this many pixels are excluded.
    pub min_separation_px: f64,
}

impl CompensationConfig {
    pub fn for_resolution(width: f64, height: f64) -> Self {
        Self { min_separation_px: DEFAULT_MIN_SEPARATION_FRACTION * width.hypot(height) }
    }
}

/// Returns the index pair with the largest pixel separation.
pub fn farthest_pair(gcps: &[GroundControlPoint]) -> Result<(usize, usize), GeorefError> {
    if gcps.len() < 2 {
        return Err(GeorefError::InsufficientGcps { found: gcps.len() });
    }
    let mut best = (0, 1, f64::NEG_INFINITY);
    for i in 0..gcps.len() {
        for j in i + 1..gcps.len() {
            let d = (gcps[j].pcf - gcps[i].pcf).norm();
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    Ok((best.0, best.1))
}

/// Fits every admissible GCP pair and averages the resulting mappings.
///
/// `α` and `ξ_d` are arithmetic means, `ξ_θ` a circular mean. Pairs closer
/// than `min_separation_px` are skipped; when none qualifies the farthest pair
/// is used alone. The reported source pair is the farthest pair.
pub fn compensate_gcps(gcps: &[GroundControlPoint], cfg: &CompensationConfig) -> Result<FrameMapping, GeorefError> {
    let (fi, fj) = farthest_pair(gcps)?;
    if gcps.len() == 2 {
        return fit_pair(&gcps[0], &gcps[1]);
    }
    let mut fits = Vec::new();
    for i in 0..gcps.len() {
        for j in i + 1..gcps.len() {
            if (gcps[j].pcf - gcps[i].pcf).norm() >= cfg.min_separation_px {
                fits.push(fit_pair(&gcps[i], &gcps[j])?);
            }
        }
    }
    if fits.is_empty() {
        fits.push(fit_pair(&gcps[fi], &gcps[fj])?);
    }
    let n = fits.len() as f64;
    let alpha = fits.iter().map(|m| m.alpha).sum::<f64>() / n;
    let theta = circular_mean(fits.iter().map(|m| m.theta_offset))
        .ok_or(GeorefError::InvalidMapping("orientation offsets cancel out"))?;
    let offset = fits.iter().map(|m| m.offset()).sum::<Vec2>() / n;
    let mut m = FrameMapping::new(alpha, theta, offset)?;
    m.source_gcp_ids = (gcps[fi].id.clone(), gcps[fj].id.clone());
    Ok(m)
}

// ---------------------------------------------------------------------------
// Error budget under pixel ambiguity
// ---------------------------------------------------------------------------

/// `η_α`: worst-case ratio between seen and true spatial resolution when
/// each GCP may be off by `ζ` pixels per axis.
pub fn similarity_fraction(distance_px: f64, zeta: f64) -> Result<f64, GeorefError> {
    if !(distance_px > 0.0) {
        return Err(GeorefError::NonPositiveDistance(distance_px));
    }
    if !(zeta >= 0.0) {
        return Err(GeorefError::NegativeZeta(zeta));
    }
    Ok(distance_px / (distance_px + 2.0 * (2.0 * zeta * zeta).sqrt()))
}

/// `η_θ`: worst-case orientation offset error for a GCP baseline `delta`
/// (pixels). `ζ` is doubled because two GCPs enter the angle.
pub fn orientation_error_bound(delta: Vec2, zeta: f64) -> Result<f64, GeorefError> {
    if delta.norm() == 0.0 {
        return Err(GeorefError::ZeroBaseline);
    }
    if !(zeta >= 0.0) {
        return Err(GeorefError::NegativeZeta(zeta));
    }
    let base = delta.y.atan2(delta.x);
    let e = 2.0 * zeta;
    let worst = [(e, e), (e, -e), (-e, e), (-e, -e)]
        .iter()
        .map(|(ex, ey)| wrap_pi((delta.y + ey).atan2(delta.x + ex) - base).abs())
        .fold(0.0, f64::max);
    Ok(worst)
}

/// `η_b`: displacement of pixel `b` (meters) caused by rotating the mapping
/// about the PCF origin by `eta_theta`.
pub fn rotation_point_error(b: Vec2, eta_theta: f64, alpha: f64) -> f64 {
    (rotate(b, eta_theta) - b).norm() * alpha
}

/// `η_ξd`: linear offset error induced by scale and orientation errors on
/// the anchor GCP `g` (pixels).
pub fn offset_error(g: Vec2, eta_alpha: f64, eta_theta: f64, alpha: f64) -> Vec2 {
    (rotate(g * eta_alpha, -eta_theta) - g) * alpha
}

/// Worst-case ground displacement of pixel `b` when a pair fit with
/// baseline length `baseline_px`, anchored at `anchor` (the first GCP of the
/// pair), suffers a `ζ` ambiguity on both GCPs.
///
/// Combines the scale range implied by `η_α` (and its mirror for shrinking
/// baselines), the rotation term about the anchor, and the anchor's own
/// ambiguity `√2·ζ`.
pub fn mapping_point_error_bound(
    b: Vec2,
    anchor: Vec2,
    baseline: Vec2,
    zeta: f64,
    alpha: f64,
) -> Result<f64, GeorefError> {
    let d = baseline.norm();
    let spread = 2.0 * SQRT_2 * zeta;
    if d <= spread {
        return Ok(f64::INFINITY);
    }
    let eta_theta = orientation_error_bound(baseline, zeta)?;
    let alpha_hi = alpha * d / (d - spread);
    let v = b - anchor;
    Ok(rotation_point_error(v, eta_theta, alpha_hi) + (alpha_hi - alpha) * v.norm() + alpha_hi * SQRT_2 * zeta)
}

/// Error budget of a fitted mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingErrorBudget {
    pub eta_alpha: f64,
    /// Radians.
    pub eta_theta: f64,
    /// Meters; the worse of the two rotation senses.
    pub eta_offset: Vec2,
    pub zeta: f64,
    pub alpha: f64,
    pub gcp_pair_used: (String, String),
}

impl MappingErrorBudget {
    /// Budget for the pair `(a, b)` of `gcps` fitted into `mapping`.
    pub fn for_pair(
        gcps: &[GroundControlPoint],
        pair: (&str, &str),
        alpha: f64,
        zeta: f64,
    ) -> Result<Self, GeorefError> {
        let a = find(gcps, pair.0)?;
        let b = find(gcps, pair.1)?;
        let delta = b.pcf - a.pcf;
        let eta_alpha = similarity_fraction(delta.norm(), zeta)?;
        let eta_theta = orientation_error_bound(delta, zeta)?;
        let plus = offset_error(a.pcf, eta_alpha, eta_theta, alpha);
        let minus = offset_error(a.pcf, eta_alpha, -eta_theta, alpha);
        let eta_offset = if minus.norm() > plus.norm() { minus } else { plus };
        Ok(Self { eta_alpha, eta_theta, eta_offset, zeta, alpha, gcp_pair_used: (a.id.clone(), b.id.clone()) })
    }

    /// Budget of a mapping, evaluated on the pair recorded in the mapping.
    pub fn for_mapping(gcps: &[GroundControlPoint], mapping: &FrameMapping, zeta: f64) -> Result<Self, GeorefError> {
        let (a, b) = &mapping.source_gcp_ids;
        Self::for_pair(gcps, (a, b), mapping.alpha, zeta)
    }

    /// `η_b` at pixel `b`.
    pub fn eta_point(&self, b: Vec2) -> f64 {
        rotation_point_error(b, self.eta_theta, self.alpha)
    }
}
