//! Linear Kalman filter over `[x, y, vx, vy, ax, ay, ψ, ψ̇]`.
//!
//! Translation follows a white-jerk constant-acceleration model per axis, yaw
//! a white-angular-acceleration constant-rate model. Only `(x, y, ψ)` are
//! measured; velocity, acceleration and yaw rate come from propagation.
//! Course over ground and sideslip are computed from the filtered state, not
//! estimated.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::angle::wrap_pi;
use crate::measure::{Measurement, Quality};

pub type StateVector = SVector<f64, 8>;
pub type StateMatrix = SMatrix<f64, 8, 8>;

pub const IX: usize = 0;
pub const IY: usize = 1;
pub const IVX: usize = 2;
pub const IVY: usize = 3;
pub const IAX: usize = 4;
pub const IAY: usize = 5;
pub const IYAW: usize = 6;
pub const IYAW_RATE: usize = 7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("measurement for frame {0} is not finite")]
    NonFiniteMeasurement(i64),
    #[error("track is empty")]
    EmptyTrack,
    #[error("timestamps must strictly increase (frame {frame})")]
    NonMonotonicTime { frame: i64 },
    #[error("invalid filter config: {0}")]
    InvalidConfig(&'static str),
}

/// Noise and gating parameters. All keys are optional in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Jerk spectral density, (m/s³)²·s.
    pub q_jerk: f64,
    /// Yaw acceleration spectral density, (rad/s²)²·s.
    pub q_yaw_acc: f64,
    /// Position measurement variance, m².
    pub r_pos: f64,
    /// Yaw measurement variance, rad².
    pub r_yaw: f64,
    /// Below this speed course over ground is undefined, m/s.
    pub v_min_cog: f64,
    /// Multiplies the unit prior variances of the unmeasured states.
    pub init_cov_scale: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            q_jerk: 5.0,
            q_yaw_acc: 1.0,
            // (ζ·α)² with ζ = 1 px, α = 0.0334 m/px
            r_pos: 0.0334 * 0.0334,
            r_yaw: 2f64.to_radians().powi(2),
            v_min_cog: 0.5,
            init_cov_scale: 100.0,
        }
    }
}

impl FilterConfig {
    /// Default config with `r_pos = (ζ·α)²`.
    pub fn for_resolution(alpha: f64, zeta: f64) -> Self {
        Self { r_pos: (zeta * alpha).powi(2), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        let all = [self.q_jerk, self.q_yaw_acc, self.r_pos, self.r_yaw, self.v_min_cog, self.init_cov_scale];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(FilterError::InvalidConfig("all parameters must be positive"))
        }
    }
}

/// Filtered vehicle state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    /// Seconds UTC.
    pub t: f64,
    pub frame: i64,
    pub mean: StateVector,
    pub cov: StateMatrix,
    /// Set once the yaw has been aligned with the course over ground.
    pub heading_locked: bool,
}

impl VehicleState {
    pub fn x(&self) -> f64 {
        self.mean[IX]
    }
    pub fn y(&self) -> f64 {
        self.mean[IY]
    }
    pub fn vx(&self) -> f64 {
        self.mean[IVX]
    }
    pub fn vy(&self) -> f64 {
        self.mean[IVY]
    }
    pub fn ax(&self) -> f64 {
        self.mean[IAX]
    }
    pub fn ay(&self) -> f64 {
        self.mean[IAY]
    }
    pub fn yaw(&self) -> f64 {
        self.mean[IYAW]
    }
    pub fn yaw_rate(&self) -> f64 {
        self.mean[IYAW_RATE]
    }
    pub fn speed(&self) -> f64 {
        self.vx().hypot(self.vy())
    }
    pub fn course(&self) -> f64 {
        self.vy().atan2(self.vx())
    }

    /// Symmetric within `tol` and all eigenvalues `≥ -tol`.
    pub fn covariance_is_valid(&self, tol: f64) -> bool {
        let asym = (self.cov - self.cov.transpose()).abs().max();
        if asym > tol {
            return false;
        }
        let sym = (self.cov + self.cov.transpose()) * 0.5;
        sym.symmetric_eigenvalues().iter().all(|&e| e >= -tol)
    }
}

/// Course over ground and sideslip derived from a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedState {
    pub cog: f64,
    /// `wrap(cog − ψ)`; zero when invalid.
    pub sideslip: f64,
    pub speed: f64,
    pub valid_sideslip: bool,
}

/// State transition for a step of `dt` seconds.
pub fn transition(dt: f64) -> StateMatrix {
    let mut f = StateMatrix::identity();
    for (p, v, a) in [(IX, IVX, IAX), (IY, IVY, IAY)] {
        f[(p, v)] = dt;
        f[(p, a)] = 0.5 * dt * dt;
        f[(v, a)] = dt;
    }
    f[(IYAW, IYAW_RATE)] = dt;
    f
}

/// Exact discretization of the continuous white-jerk / white-yaw-acceleration noise.
pub fn process_noise(dt: f64, cfg: &FilterConfig) -> StateMatrix {
    let mut q = StateMatrix::zeros();
    let (d2, d3, d4, d5) = (dt.powi(2), dt.powi(3), dt.powi(4), dt.powi(5));
    let block = [[d5 / 20.0, d4 / 8.0, d3 / 6.0], [d4 / 8.0, d3 / 3.0, d2 / 2.0], [d3 / 6.0, d2 / 2.0, dt]];
    for idx in [[IX, IVX, IAX], [IY, IVY, IAY]] {
        for r in 0..3 {
            for c in 0..3 {
                q[(idx[r], idx[c])] = cfg.q_jerk * block[r][c];
            }
        }
    }
    q[(IYAW, IYAW)] = cfg.q_yaw_acc * d3 / 3.0;
    q[(IYAW, IYAW_RATE)] = cfg.q_yaw_acc * d2 / 2.0;
    q[(IYAW_RATE, IYAW)] = cfg.q_yaw_acc * d2 / 2.0;
    q[(IYAW_RATE, IYAW_RATE)] = cfg.q_yaw_acc * dt;
    q
}

fn symmetrize(p: &StateMatrix) -> StateMatrix {
    (p + p.transpose()) * 0.5
}

/// Initial state from a first measurement: zero velocity and acceleration,
/// prior variances inflated by `init_cov_scale`.
pub fn initialize(t: f64, z: &Measurement, cfg: &FilterConfig) -> VehicleState {
    let mut mean = StateVector::zeros();
    mean[IX] = z.center.x;
    mean[IY] = z.center.y;
    mean[IYAW] = wrap_pi(z.yaw);
    let s = cfg.init_cov_scale;
    let cov = StateMatrix::from_diagonal(&StateVector::from([cfg.r_pos, cfg.r_pos, s, s, s, s, cfg.r_yaw, 0.1 * s]));
    VehicleState { t, frame: z.frame, mean, cov, heading_locked: false }
}

pub fn predict(state: &VehicleState, dt: f64, cfg: &FilterConfig) -> Result<VehicleState, FilterError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FilterError::NonPositiveDt(dt));
    }
    let f = transition(dt);
    let mut mean = f * state.mean;
    mean[IYAW] = wrap_pi(mean[IYAW]);
    let cov = symmetrize(&(f * state.cov * f.transpose() + process_noise(dt, cfg)));
    Ok(VehicleState { t: state.t + dt, frame: state.frame, mean, cov, heading_locked: state.heading_locked })
}

/// Innovation statistics of one update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateInfo {
    /// Normalized innovation squared.
    pub nis: f64,
    /// Measurement dimension (3, or 2 for position-only updates).
    pub dim: usize,
    /// The measured box direction was turned by π.
    pub yaw_flipped: bool,
}

pub fn update(state: &VehicleState, z: &Measurement, cfg: &FilterConfig) -> Result<VehicleState, FilterError> {
    update_detailed(state, z, cfg).map(|(s, _)| s)
}

/// Kalman update in Joseph form, also returning innovation statistics.
///
/// The measured yaw is a box direction with a π ambiguity. Once the speed
/// exceeds `v_min_cog` it is turned to lie within ±90° of the course over
/// ground (and the state yaw is aligned the first time this happens);
/// below that speed it is turned towards the current yaw estimate.
/// Detections that failed the rectangularity gate update position only.
pub fn update_detailed(
    state: &VehicleState,
    z: &Measurement,
    cfg: &FilterConfig,
) -> Result<(VehicleState, UpdateInfo), FilterError> {
    if !(z.center.x.is_finite() && z.center.y.is_finite() && z.yaw.is_finite()) {
        return Err(FilterError::NonFiniteMeasurement(z.frame));
    }
    let mut prior = state.clone();
    let moving = prior.speed() > cfg.v_min_cog;
    lock_heading(&mut prior, cfg);
    let reference = if moving { prior.course() } else { prior.yaw() };
    let mut z_yaw = wrap_pi(z.yaw);
    let yaw_flipped = wrap_pi(z_yaw - reference).abs() > FRAC_PI_2;
    if yaw_flipped {
        z_yaw = wrap_pi(z_yaw + PI);
    }

    let (mean, cov, nis, dim) = if z.quality == Quality::Ok {
        let mut h = SMatrix::<f64, 3, 8>::zeros();
        h[(0, IX)] = 1.0;
        h[(1, IY)] = 1.0;
        h[(2, IYAW)] = 1.0;
        let r = SMatrix::<f64, 3, 3>::from_diagonal(&SVector::<f64, 3>::new(cfg.r_pos, cfg.r_pos, cfg.r_yaw));
        let innov =
            SVector::<f64, 3>::new(z.center.x - prior.x(), z.center.y - prior.y(), wrap_pi(z_yaw - prior.yaw()));
        joseph(&prior, &h, &r, &innov)
    } else {
        let mut h = SMatrix::<f64, 2, 8>::zeros();
        h[(0, IX)] = 1.0;
        h[(1, IY)] = 1.0;
        let r = SMatrix::<f64, 2, 2>::from_diagonal(&SVector::<f64, 2>::new(cfg.r_pos, cfg.r_pos));
        let innov = SVector::<f64, 2>::new(z.center.x - prior.x(), z.center.y - prior.y());
        joseph(&prior, &h, &r, &innov)
    };
    let mut mean = mean;
    mean[IYAW] = wrap_pi(mean[IYAW]);
    let mut post = VehicleState { t: prior.t, frame: z.frame, mean, cov, heading_locked: prior.heading_locked };
    // the first update can carry the track from standstill past v_min_cog
    lock_heading(&mut post, cfg);
    Ok((post, UpdateInfo { nis, dim, yaw_flipped }))
}

/// Once the track moves, resolves the detector's π yaw ambiguity against the course.
fn lock_heading(state: &mut VehicleState, cfg: &FilterConfig) {
    if state.heading_locked || state.speed() <= cfg.v_min_cog {
        return;
    }
    if wrap_pi(state.yaw() - state.course()).abs() > FRAC_PI_2 {
        state.mean[IYAW] = wrap_pi(state.yaw() + PI);
    }
    state.heading_locked = true;
}

fn joseph<const M: usize>(
    prior: &VehicleState,
    h: &SMatrix<f64, M, 8>,
    r: &SMatrix<f64, M, M>,
    innov: &SVector<f64, M>,
) -> (StateVector, StateMatrix, f64, usize) {
    let p = &prior.cov;
    let s = h * p * h.transpose() + r;
    let s_inv = s.try_inverse().expect("innovation covariance is positive definite");
    let k = p * h.transpose() * s_inv;
    let mean = prior.mean + k * innov;
    let i_kh = StateMatrix::identity() - k * h;
    let cov = symmetrize(&(i_kh * p * i_kh.transpose() + k * r * k.transpose()));
    let nis = (innov.transpose() * s_inv * innov)[(0, 0)];
    (mean, cov, nis, M)
}

pub fn derive(state: &VehicleState, cfg: &FilterConfig) -> DerivedState {
    let speed = state.speed();
    let cog = wrap_pi(state.course());
    let valid_sideslip = speed > cfg.v_min_cog && state.heading_locked;
    let sideslip = if valid_sideslip { wrap_pi(cog - state.yaw()) } else { 0.0 };
    DerivedState { cog, sideslip, speed, valid_sideslip }
}

/// A measurement with its UTC time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedMeasurement {
    pub t: f64,
    pub measurement: Measurement,
}

/// One output row of [`run_track`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrackPoint {
    pub state: VehicleState,
    pub derived: DerivedState,
    /// False for predict-only frames inside a detection gap.
    pub measured: bool,
    pub update: Option<UpdateInfo>,
}

/// Filters a single-vehicle track, emitting one state per frame from the
/// first to the last measured frame. Frames missing inside the track are
/// predicted only, at times interpolated between their neighbours.
pub fn run_track(measurements: &[TimedMeasurement], cfg: &FilterConfig) -> Result<Vec<TrackPoint>, FilterError> {
    cfg.validate()?;
    let first = measurements.first().ok_or(FilterError::EmptyTrack)?;
    for w in measurements.windows(2) {
        if !(w[1].t > w[0].t) || w[1].measurement.frame <= w[0].measurement.frame {
            return Err(FilterError::NonMonotonicTime { frame: w[1].measurement.frame });
        }
    }
    let mut state = initialize(first.t, &first.measurement, cfg);
    let mut out = vec![TrackPoint { derived: derive(&state, cfg), state: state.clone(), measured: true, update: None }];
    for w in measurements.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        let gap = next.measurement.frame - prev.measurement.frame;
        let step = (next.t - prev.t) / gap as f64;
        for k in 1..gap {
            state = predict(&state, step, cfg)?;
            state.frame = prev.measurement.frame + k;
            out.push(TrackPoint { derived: derive(&state, cfg), state: state.clone(), measured: false, update: None });
        }
        let dt = next.t - state.t;
        state = predict(&state, dt, cfg)?;
        state.t = next.t;
        let (updated, info) = update_detailed(&state, &next.measurement, cfg)?;
        state = updated;
        out.push(TrackPoint { derived: derive(&state, cfg), state: state.clone(), measured: true, update: Some(info) });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angle::abs_diff;
    use crate::Vec2;

    fn meas(frame: i64, x: f64, y: f64, yaw: f64) -> Measurement {
        Measurement { frame, center: Vec2::new(x, y), yaw, est_width: 1.8, est_length: 4.5, quality: Quality::Ok }
    }

    fn state_with(v: [f64; 8]) -> VehicleState {
        VehicleState {
            t: 0.0,
            frame: 0,
            mean: StateVector::from(v),
            cov: StateMatrix::identity() * 0.1,
            heading_locked: false,
        }
    }

    fn locked(v: [f64; 8]) -> VehicleState {
        VehicleState { heading_locked: true, ..state_with(v) }
    }

    /// Van Loan discretization computed by series expansion of the block
    /// matrix exponential, independent of the closed form.
    fn van_loan(dt: f64, cfg: &FilterConfig) -> StateMatrix {
        let mut a = StateMatrix::zeros();
        for (p, v, acc) in [(IX, IVX, IAX), (IY, IVY, IAY)] {
            a[(p, v)] = 1.0;
            a[(v, acc)] = 1.0;
        }
        a[(IYAW, IYAW_RATE)] = 1.0;
        let mut qc = StateMatrix::zeros();
        qc[(IAX, IAX)] = cfg.q_jerk;
        qc[(IAY, IAY)] = cfg.q_jerk;
        qc[(IYAW_RATE, IYAW_RATE)] = cfg.q_yaw_acc;
        let mut m = SMatrix::<f64, 16, 16>::zeros();
        m.fixed_view_mut::<8, 8>(0, 0).copy_from(&(-a * dt));
        m.fixed_view_mut::<8, 8>(0, 8).copy_from(&(qc * dt));
        m.fixed_view_mut::<8, 8>(8, 8).copy_from(&(a.transpose() * dt));
        let mut term = SMatrix::<f64, 16, 16>::identity();
        let mut e = term;
        for k in 1..40 {
            term = term * m / k as f64;
            e += term;
        }
        let phi_t = e.fixed_view::<8, 8>(8, 8).into_owned();
        let g = e.fixed_view::<8, 8>(0, 8).into_owned();
        phi_t.transpose() * g
    }

    #[test]
    fn process_noise_matches_van_loan() {
        let cfg = FilterConfig { q_jerk: 3.7, q_yaw_acc: 0.6, ..Default::default() };
        for dt in [0.02, 0.1, 0.7] {
            let diff = (process_noise(dt, &cfg) - van_loan(dt, &cfg)).abs().max();
            assert!(diff < 1e-9, "dt={dt} diff={diff}");
        }
        assert!(
            (transition(0.3) - {
                let mut a = StateMatrix::zeros();
                for (p, v, acc) in [(IX, IVX, IAX), (IY, IVY, IAY)] {
                    a[(p, v)] = 1.0;
                    a[(v, acc)] = 1.0;
                }
                a[(IYAW, IYAW_RATE)] = 1.0;
                StateMatrix::identity() + a * 0.3 + a * a * 0.045
            })
            .abs()
            .max()
                < 1e-15
        );
    }

    #[test]
    fn predict_kinematics() {
        let cfg = FilterConfig::default();
        let s = state_with([0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let p = predict(&s, 1.0, &cfg).unwrap();
        assert!((p.x() - 1.0).abs() < 1e-15);
        assert!(p.cov[(IX, IX)] > s.cov[(IX, IX)]);
        let s = state_with([0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let p = predict(&s, 2.0, &cfg).unwrap();
        assert!((p.y() - 2.0).abs() < 1e-15);
        assert!((p.vy() - 2.0).abs() < 1e-15);
        assert_eq!(predict(&s, 0.0, &cfg), Err(FilterError::NonPositiveDt(0.0)));
        assert!(predict(&s, -1.0, &cfg).is_err());
    }

    #[test]
    fn predict_wraps_yaw() {
        let s = state_with([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0, 1.0]);
        let p = predict(&s, 0.5, &FilterConfig::default()).unwrap();
        assert!((p.yaw() - wrap_pi(3.5)).abs() < 1e-12);
    }

    #[test]
    fn half_steps_equal_full_step() {
        let cfg = FilterConfig::default();
        let mut s = state_with([1.0, -2.0, 3.0, 0.5, 0.2, -0.1, 0.3, 0.05]);
        s.cov = StateMatrix::from_fn(|r, c| if r == c { 0.5 + r as f64 * 0.1 } else { 0.01 });
        let one = predict(&s, 0.1, &cfg).unwrap();
        let two = predict(&predict(&s, 0.05, &cfg).unwrap(), 0.05, &cfg).unwrap();
        assert!((one.mean - two.mean).abs().max() < 1e-9);
        assert!((one.cov - two.cov).abs().max() < 1e-6);
    }

    #[test]
    fn zero_innovation_keeps_mean_shrinks_cov() {
        let cfg = FilterConfig::default();
        let s = state_with([5.0, 6.0, 0.0, 0.0, 0.0, 0.0, 0.4, 0.0]);
        let u = update(&s, &meas(1, 5.0, 6.0, 0.4), &cfg).unwrap();
        assert!((u.mean - s.mean).abs().max() < 1e-15);
        assert!(u.cov.trace() < s.cov.trace());
        assert!(u.covariance_is_valid(1e-9));
    }

    #[test]
    fn yaw_innovation_wraps() {
        let cfg = FilterConfig::default();
        let s = state_with([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 179f64.to_radians(), 0.0]);
        let (u, info) = update_detailed(&s, &meas(1, 0.0, 0.0, (-179f64).to_radians()), &cfg).unwrap();
        assert!(!info.yaw_flipped);
        // innovation is +2°, so the estimate moves past 179° towards 181°
        let moved = wrap_pi(u.yaw() - 179f64.to_radians());
        assert!(moved > 0.0 && moved < 2f64.to_radians());
    }

    #[test]
    fn heading_flip_towards_course() {
        let cfg = FilterConfig::default();
        let mut s = state_with([0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        s.heading_locked = true;
        let (u, info) = update_detailed(&s, &meas(1, 0.0, 0.0, PI - 0.01), &cfg).unwrap();
        assert!(info.yaw_flipped);
        assert!(u.yaw().abs() < 0.02);
    }

    #[test]
    fn heading_locks_on_first_motion() {
        let cfg = FilterConfig::default();
        // box direction says 180°, but the car moves east
        let s = state_with([0.0, 0.0, 5.0, 0.0, 0.0, 0.0, PI, 0.0]);
        let u = update(&s, &meas(1, 0.0, 0.0, PI), &cfg).unwrap();
        assert!(u.heading_locked);
        assert!(u.yaw().abs() < 1e-9);
    }

    #[test]
    fn heading_locks_when_first_update_starts_motion() {
        let cfg = FilterConfig::default();
        let z0 = meas(0, 0.0, 0.0, PI);
        let s = predict(&initialize(0.0, &z0, &cfg), 0.02, &cfg).unwrap();
        assert!(!s.heading_locked && s.speed() == 0.0);
        // moves 0.2 m east in one frame while the box still reads 180°
        let u = update(&s, &meas(1, 0.2, 0.0, PI), &cfg).unwrap();
        assert!(u.speed() > cfg.v_min_cog && u.heading_locked);
        assert!(abs_diff(u.yaw(), 0.0) < 0.05, "yaw {}", u.yaw());
        assert!(derive(&u, &cfg).sideslip.abs() < 0.05);
    }

    #[test]
    fn non_finite_rejected() {
        let s = state_with([0.0; 8]);
        assert_eq!(
            update(&s, &meas(4, f64::NAN, 0.0, 0.0), &FilterConfig::default()),
            Err(FilterError::NonFiniteMeasurement(4))
        );
    }

    #[test]
    fn derive_cases() {
        let cfg = FilterConfig::default();
        let d = derive(&locked([0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 45f64.to_radians(), 0.0]), &cfg);
        assert!((d.cog.to_degrees() - 45.0).abs() < 1e-12);
        assert!(d.sideslip.abs() < 1e-12 && d.valid_sideslip);
        let d = derive(&locked([0.0, 0.0, 1.0, 0.0, 0.0, 0.0, (-10f64).to_radians(), 0.0]), &cfg);
        assert!((d.sideslip.to_degrees() - 10.0).abs() < 1e-12);
        let d = derive(&locked([0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 1.0, 0.0]), &cfg);
        assert!(!d.valid_sideslip && d.sideslip == 0.0);
        let d = derive(&state_with([0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 3.0, 0.0]), &cfg);
        assert!(!d.valid_sideslip, "heading not locked yet");
    }

    #[test]
    fn sideslip_is_a_function_of_velocity_and_yaw() {
        let cfg = FilterConfig::default();
        for (vx, vy, yaw) in [(3.0, -4.0, 0.2), (-7.0, 0.5, -2.9), (0.0, 2.0, 3.1)] {
            let mut a = locked([0.0, 0.0, vx, vy, 0.0, 0.0, yaw, 0.0]);
            let b = a.clone();
            a.mean[IX] = 99.0;
            a.mean[IAX] = -3.0;
            a.cov *= 7.0;
            assert_eq!(derive(&a, &cfg), derive(&b, &cfg));
            assert_eq!(derive(&a, &cfg).sideslip, wrap_pi(f64::atan2(vy, vx) - yaw));
        }
    }

    #[test]
    fn run_track_errors_and_single() {
        let cfg = FilterConfig::default();
        assert_eq!(run_track(&[], &cfg), Err(FilterError::EmptyTrack));
        let one = [TimedMeasurement { t: 10.0, measurement: meas(0, 1.0, 2.0, 0.3) }];
        let out = run_track(&one, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].state, initialize(10.0, &one[0].measurement, &cfg));
        let bad = [one[0], TimedMeasurement { t: 10.0, measurement: meas(1, 1.0, 2.0, 0.3) }];
        assert_eq!(run_track(&bad, &cfg), Err(FilterError::NonMonotonicTime { frame: 1 }));
    }

    fn cv_track(n: i64, skip: impl Fn(i64) -> bool) -> Vec<TimedMeasurement> {
        (0..n)
            .filter(|&k| !skip(k))
            .map(|k| {
                let t = 100.0 + k as f64 * 0.02;
                TimedMeasurement { t, measurement: meas(k, 8.0 * (t - 100.0), 3.0 * (t - 100.0), 3f64.atan2(8.0)) }
            })
            .collect()
    }

    #[test]
    fn constant_velocity_converges() {
        let cfg = FilterConfig::default();
        let out = run_track(&cv_track(200, |_| false), &cfg).unwrap();
        let truth = 8f64.hypot(3.0);
        let p = &out[50].state;
        assert!((Vec2::new(p.vx(), p.vy()) - Vec2::new(8.0, 3.0)).norm() < 0.01 * truth);
        assert!(out.iter().all(|tp| tp.state.covariance_is_valid(1e-9)));
    }

    #[test]
    fn gap_is_predicted_and_inflates_covariance() {
        let cfg = FilterConfig::default();
        let full = run_track(&cv_track(100, |_| false), &cfg).unwrap();
        let gappy = run_track(&cv_track(100, |k| (60..65).contains(&k)), &cfg).unwrap();
        assert_eq!(full.len(), gappy.len());
        for (a, b) in full.iter().zip(&gappy) {
            assert_eq!(a.state.frame, b.state.frame);
            assert!((a.state.t - b.state.t).abs() < 1e-9);
        }
        assert!(!gappy[62].measured);
        assert!(gappy[64].state.cov[(IX, IX)] > full[64].state.cov[(IX, IX)]);
        assert!(gappy[64].state.cov[(IX, IX)] > gappy[59].state.cov[(IX, IX)]);
        let p = &gappy[64].state;
        assert!((p.x() - 8.0 * 64.0 * 0.02).abs() < 0.01);
    }

    #[test]
    fn nonrectangular_updates_position_only() {
        let cfg = FilterConfig::default();
        let s = state_with([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut z = meas(1, 1.0, 1.0, 1.0);
        z.quality = Quality::NonRectangular;
        let (u, info) = update_detailed(&s, &z, &cfg).unwrap();
        assert_eq!(info.dim, 2);
        assert!(u.x() > 0.5 && u.yaw().abs() < 1e-6);
    }
}
