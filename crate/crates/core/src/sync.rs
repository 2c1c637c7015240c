//! Frame index to UTC time from LED events driven by a PPS signal.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SyncError {
    #[error("need at least 2 LED events, got {0}")]
    InsufficientEvents(usize),
    #[error("fps must be positive, got {0}")]
    NonPositiveFps(f64),
    #[error("LED events must increase in both frame and second (frame {frame})")]
    NonMonotonicEvents { frame: i64 },
    #[error("LED event at frame {frame} is {residual:.4} s off the fitted line (limit {limit:.4} s)")]
    ResidualTooLarge { frame: i64, residual: f64, limit: f64 },
    #[error("fitted frame period {slope} s deviates more than 5% from 1/{fps}")]
    SlopeMismatch { slope: f64, fps: f64 },
}

/// First frame at which the LED is visibly on, and the UTC second it marks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedEvent {
    pub frame: i64,
    pub utc_second: i64,
}

/// Linear frame clock: `t = offset + slope · frame`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBase {
    #[serde(rename = "slope_s_per_frame")]
    pub slope: f64,
    #[serde(rename = "offset_utc_s")]
    pub offset: f64,
    #[serde(rename = "residual_max_s")]
    pub residual_max: f64,
    #[serde(rename = "eta_tau_s")]
    pub eta_tau: f64,
    #[serde(skip)]
    pub fps_nominal: f64,
}

impl TimeBase {
    pub fn frame_to_utc(&self, frame: i64) -> f64 {
        frame_to_utc(self, frame)
    }
}

/// Least-squares line through the `(frame, utc_second)` pairs.
///
/// The LED is seen up to one frame late, so every residual must stay below
/// one frame period; a larger one means a mis-detected LED frame.
pub fn fit_timebase(events: &[LedEvent], fps_nominal: f64) -> Result<TimeBase, SyncError> {
    if !(fps_nominal > 0.0 && fps_nominal.is_finite()) {
        return Err(SyncError::NonPositiveFps(fps_nominal));
    }
    if events.len() < 2 {
        return Err(SyncError::InsufficientEvents(events.len()));
    }
    for w in events.windows(2) {
        if w[1].frame <= w[0].frame || w[1].utc_second <= w[0].utc_second {
            return Err(SyncError::NonMonotonicEvents { frame: w[1].frame });
        }
    }
    // centre both axes to keep the normal equations well conditioned
    let n = events.len() as f64;
    let f0 = events[0].frame;
    let s0 = events[0].utc_second;
    let xs: Vec<f64> = events.iter().map(|e| (e.frame - f0) as f64).collect();
    let ys: Vec<f64> = events.iter().map(|e| (e.utc_second - s0) as f64).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let period = 1.0 / fps_nominal;
    if !(slope > 0.0) || (slope - period).abs() >= 0.05 * period {
        return Err(SyncError::SlopeMismatch { slope, fps: fps_nominal });
    }
    let local_offset = my - slope * mx;
    let mut residual_max = 0.0f64;
    for (e, (x, y)) in events.iter().zip(xs.iter().zip(&ys)) {
        let r = (y - (local_offset + slope * x)).abs();
        if r > period {
            return Err(SyncError::ResidualTooLarge { frame: e.frame, residual: r, limit: period });
        }
        residual_max = residual_max.max(r);
    }
    let offset = s0 as f64 + local_offset - slope * f0 as f64;
    Ok(TimeBase { slope, offset, residual_max, eta_tau: period, fps_nominal })
}

/// [`fit_timebase`] with the offset moved to the middle of the band the
/// LED lag allows.
///
/// Each event frame was exposed in `[second, second + 1/fps)`. For the
/// fitted slope the offsets consistent with every event form an interval;
/// its midpoint replaces the least-squares offset, which sits about half a
/// frame early. Between the first and last event the timestamp error is
/// then below one frame period. If the interval is empty (slope error from
/// few events) the least-squares offset is kept.
pub fn fit_timebase_lag_corrected(events: &[LedEvent], fps_nominal: f64) -> Result<TimeBase, SyncError> {
    let mut tb = fit_timebase(events, fps_nominal)?;
    let period = 1.0 / fps_nominal;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for e in events {
        let c = e.utc_second as f64 - tb.slope * e.frame as f64;
        lo = lo.max(c);
        hi = hi.min(c + period);
    }
    if lo <= hi {
        tb.offset = 0.5 * (lo + hi);
    }
    Ok(tb)
}

pub fn frame_to_utc(tb: &TimeBase, frame: i64) -> f64 {
    tb.offset + tb.slope * frame as f64
}

/// Worst-case synchronization errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncBounds {
    /// Timestamp error, s.
    pub eta_tau: f64,
    /// Position error at the given speed, m.
    pub eta_pos: f64,
    /// Velocity error at the given acceleration, m/s.
    pub eta_vel: f64,
}

/// `η_τ = 1/fps`, `η_pos = v·η_τ`, `η_vel = a·η_τ`.
pub fn sync_error_bounds(fps: f64, speed: f64, accel: f64) -> Result<SyncBounds, SyncError> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(SyncError::NonPositiveFps(fps));
    }
    let eta_tau = 1.0 / fps;
    Ok(SyncBounds { eta_tau, eta_pos: speed.abs() * eta_tau, eta_vel: accel.abs() * eta_tau })
}
