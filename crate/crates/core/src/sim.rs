//! Synthetic scene generator used as a ground-truth oracle.
//!
//! A vehicle box follows an analytic trajectory on the ground plane and is
//! seen through a nadir pinhole camera: every corner is displaced radially
//! by its height, the silhouette is reduced to its minimum-area rectangle,
//! the camera drifts by a random-walk similarity, and corners are perturbed
//! and quantized. GCPs, static-point correspondences, LED events and a
//! reference trace are produced alongside, all from one seeded RNG.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::angle::{rotate, wrap_pi};
use crate::bench::ReferenceSample;
use crate::geometry::min_area_rect;
use crate::georef::{
    farthest_pair, fit_mapping, mapping_point_error_bound, orientation_error_bound, similarity_fraction, FrameMapping,
    GroundControlPoint,
};
use crate::io::{self, DetectionRow, IoError};
use crate::measure::{corner_error_bound, relief_shift, scale_error_bound, CameraGeometry, VehicleDims};
use crate::stabilize::{Correspondence, SimilarityTransform};
use crate::sync::{fit_timebase_lag_corrected, LedEvent};
use crate::Vec2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::InvalidScenario(msg.into())
}

/// Driven trajectory. Speeds in m/s, angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Maneuver {
    Straight {
        speed: f64,
        accel: f64,
        heading_deg: f64,
    },
    Circle {
        speed: f64,
        radius: f64,
    },
    LaneChange {
        speed: f64,
        offset_m: f64,
        start_s: f64,
        duration_s: f64,
        heading_deg: f64,
    },
    /// Circle with a sideslip that rises smoothly to `peak_sideslip_deg`
    /// over `ramp_s` and then holds.
    Drift {
        speed: f64,
        radius: f64,
        peak_sideslip_deg: f64,
        ramp_s: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimCamera {
    pub resolution: [f64; 2],
    pub hover_altitude_m: f64,
    /// Focal length in pixels; `α = altitude / focal`.
    pub focal_px: f64,
    /// Angle of the image x axis against the LTP x axis.
    pub image_rotation_deg: f64,
    /// LTP point seen at the principal point.
    pub ground_center_m: [f64; 2],
}

impl Default for SimCamera {
    fn default() -> Self {
        Self {
            resolution: [1920.0, 1080.0],
            hover_altitude_m: 50.0,
            focal_px: 1497.0,
            image_rotation_deg: 20.0,
            ground_center_m: [500.0, 300.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimVehicle {
    pub width_m: f64,
    pub length_m: f64,
    pub clearance_m: f64,
    pub roof_height_m: f64,
}

impl Default for SimVehicle {
    fn default() -> Self {
        Self { width_m: 1.8, length_m: 4.5, clearance_m: 0.15, roof_height_m: 1.45 }
    }
}

/// Per-frame random-walk steps of the camera drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftWalk {
    pub scale_std: f64,
    pub rotation_std_deg: f64,
    pub translation_std_px: f64,
}

impl Default for DriftWalk {
    fn default() -> Self {
        Self { scale_std: 1e-4, rotation_std_deg: 0.01, translation_std_px: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Gaussian noise on detected corners.
    pub corner_std_px: f64,
    /// Round detected corners to integer pixels.
    pub quantize: bool,
    /// GCP pixel ambiguity, uniform per axis.
    pub gcp_zeta_px: f64,
    pub match_std_px: f64,
    pub outlier_rate: f64,
    pub matches_per_frame: usize,
    /// Probability that a detection is missing (never the first or last frame).
    pub dropout_rate: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            corner_std_px: 0.3,
            quantize: true,
            gcp_zeta_px: 1.0,
            match_std_px: 0.5,
            outlier_rate: 0.3,
            matches_per_frame: 40,
            dropout_rate: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub maneuver: Maneuver,
    pub duration_s: f64,
    /// Nominal frame rate.
    pub fps: f64,
    /// Camera clock error; the true frame rate is `fps·(1 + ppm·1e-6)`.
    pub clock_ppm: f64,
    /// Whole UTC second before the first frame; a random sub-second phase is added.
    pub t0_utc_s: f64,
    pub camera: SimCamera,
    pub vehicle: SimVehicle,
    pub drift: DriftWalk,
    pub noise: NoiseModel,
    pub reference_rate_hz: f64,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            maneuver: Maneuver::Circle { speed: 8.0, radius: 12.0 },
            duration_s: 4.0,
            fps: 50.0,
            clock_ppm: 200.0,
            t0_utc_s: 1_700_000_000.0,
            camera: SimCamera::default(),
            vehicle: SimVehicle::default(),
            drift: DriftWalk::default(),
            noise: NoiseModel::default(),
            reference_rate_hz: 100.0,
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn drift_default() -> Self {
        Self {
            maneuver: Maneuver::Drift { speed: 8.0, radius: 12.0, peak_sideslip_deg: 27.69, ramp_s: 1.0 },
            duration_s: 5.0,
            ..Self::default()
        }
    }

    pub fn alpha(&self) -> f64 {
        self.camera.hover_altitude_m / self.camera.focal_px
    }

    pub fn camera_geometry(&self) -> CameraGeometry {
        CameraGeometry {
            resolution: self.camera.resolution,
            hover_altitude: self.camera.hover_altitude_m,
            alpha: self.alpha(),
        }
    }

    pub fn dims(&self) -> VehicleDims {
        VehicleDims { width: self.vehicle.width_m, length: self.vehicle.length_m, clearance: self.vehicle.clearance_m }
    }

    pub fn true_fps(&self) -> f64 {
        self.fps * (1.0 + self.clock_ppm * 1e-6)
    }

    pub fn frame_count(&self) -> i64 {
        (self.duration_s * self.fps).round() as i64
    }

    /// Ground-truth pixel → LTP mapping: principal point onto the ground centre.
    pub fn true_mapping(&self) -> FrameMapping {
        let theta = self.camera.image_rotation_deg.to_radians();
        let pp = self.camera_geometry().principal_point();
        let [cx, cy] = self.camera.ground_center_m;
        let offset = rotate(pp * self.alpha(), -theta) - Vec2::new(cx, cy);
        FrameMapping::new(self.alpha(), theta, offset).expect("validated scenario")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        if !pos(self.duration_s) || self.duration_s < 2.0 {
            return Err(invalid("duration must be at least 2 s to see two LED events"));
        }
        if !pos(self.fps) || !pos(self.reference_rate_hz) || !self.clock_ppm.is_finite() || self.clock_ppm.abs() >= 1e4
        {
            return Err(invalid("rates must be positive"));
        }
        let c = &self.camera;
        if !(pos(c.resolution[0]) && pos(c.resolution[1]) && pos(c.hover_altitude_m) && pos(c.focal_px)) {
            return Err(invalid("camera fields must be positive"));
        }
        let v = &self.vehicle;
        if !(pos(v.width_m) && pos(v.length_m) && nonneg(v.clearance_m) && v.roof_height_m >= v.clearance_m) {
            return Err(invalid("vehicle needs positive size and 0 ≤ clearance ≤ roof height"));
        }
        if v.roof_height_m >= c.hover_altitude_m {
            return Err(invalid("roof above the camera"));
        }
        let d = &self.drift;
        let n = &self.noise;
        if ![d.scale_std, d.rotation_std_deg, d.translation_std_px, n.corner_std_px, n.gcp_zeta_px, n.match_std_px]
            .iter()
            .all(|&x| nonneg(x))
        {
            return Err(invalid("noise levels must be non-negative"));
        }
        if !prob(n.outlier_rate) || !prob(n.dropout_rate) || n.outlier_rate > 0.5 || n.dropout_rate > 0.5 {
            return Err(invalid("outlier and dropout rates must lie in [0, 0.5]"));
        }
        if n.matches_per_frame < 4 {
            return Err(invalid("need at least 4 matches per frame"));
        }
        let ok = match self.maneuver {
            Maneuver::Straight { speed, accel, .. } => nonneg(speed) && speed + accel * self.duration_s >= 0.0,
            Maneuver::Circle { speed, radius } => pos(speed) && pos(radius),
            Maneuver::LaneChange { speed, start_s, duration_s, .. } => {
                pos(speed) && nonneg(start_s) && pos(duration_s) && start_s + duration_s <= self.duration_s
            }
            Maneuver::Drift { speed, radius, peak_sideslip_deg, ramp_s } => {
                pos(speed) && pos(radius) && pos(ramp_s) && peak_sideslip_deg.abs() < 90.0
            }
        };
        if !ok {
            return Err(invalid("maneuver parameters out of range"));
        }
        Ok(())
    }

    /// Ground-truth kinematics `tau` seconds after the first frame.
    pub fn kinematics(&self, tau: f64) -> Kinematics {
        let [cx, cy] = self.camera.ground_center_m;
        let center = Vec2::new(cx, cy);
        let dur = self.duration_s;
        let (pos, vel, acc, sideslip) = match self.maneuver {
            Maneuver::Straight { speed, accel, heading_deg } => {
                let dir = rotate(Vec2::new(1.0, 0.0), heading_deg.to_radians());
                let dist = |t: f64| speed * t + 0.5 * accel * t * t;
                let start = center - dir * (dist(dur) / 2.0);
                (start + dir * dist(tau), dir * (speed + accel * tau), dir * accel, 0.0)
            }
            Maneuver::Circle { speed, radius } => {
                let (p, v, a) = circle(center, speed, radius, tau);
                (p, v, a, 0.0)
            }
            Maneuver::LaneChange { speed, offset_m, start_s, duration_s, heading_deg } => {
                let dir = rotate(Vec2::new(1.0, 0.0), heading_deg.to_radians());
                let nrm = Vec2::new(-dir.y, dir.x);
                let u = ((tau - start_s) / duration_s).clamp(0.0, 1.0);
                let inside = tau > start_s && tau < start_s + duration_s;
                // cycloidal profile: lateral acceleration is zero at both ends
                let tp = 2.0 * PI;
                let s = u - (tp * u).sin() / tp;
                let ds = if inside { (1.0 - (tp * u).cos()) / duration_s } else { 0.0 };
                let dds = if inside { tp * (tp * u).sin() / (duration_s * duration_s) } else { 0.0 };
                let start = center - dir * (speed * dur / 2.0) - nrm * (offset_m / 2.0);
                (
                    start + dir * (speed * tau) + nrm * (offset_m * s),
                    dir * speed + nrm * (offset_m * ds),
                    nrm * (offset_m * dds),
                    0.0,
                )
            }
            Maneuver::Drift { speed, radius, peak_sideslip_deg, ramp_s } => {
                let (p, v, a) = circle(center, speed, radius, tau);
                let u = (tau / ramp_s).clamp(0.0, 1.0);
                (p, v, a, peak_sideslip_deg.to_radians() * u * u * (3.0 - 2.0 * u))
            }
        };
        let cog = if vel.norm() > 1e-9 { vel.y.atan2(vel.x) } else { self.initial_heading() };
        Kinematics { pos, vel, acc, yaw: wrap_pi(cog - sideslip), sideslip, cog }
    }

    fn initial_heading(&self) -> f64 {
        match self.maneuver {
            Maneuver::Straight { heading_deg, .. } | Maneuver::LaneChange { heading_deg, .. } => {
                heading_deg.to_radians()
            }
            Maneuver::Circle { .. } | Maneuver::Drift { .. } => 0.0,
        }
    }

    /// Vehicle footprint corners (LTP) for a pose.
    pub fn footprint(&self, k: &Kinematics) -> [Vec2; 4] {
        let (l, w) = (self.vehicle.length_m / 2.0, self.vehicle.width_m / 2.0);
        [(-l, -w), (l, -w), (l, w), (-l, w)].map(|(a, b)| k.pos + rotate(Vec2::new(a, b), k.yaw))
    }
}

/// Counter-clockwise circle starting at the bottom, heading +x.
fn circle(center: Vec2, speed: f64, radius: f64, tau: f64) -> (Vec2, Vec2, Vec2) {
    let w = speed / radius;
    let phi = -FRAC_PI_2 + w * tau;
    let (s, c) = phi.sin_cos();
    (center + Vec2::new(c, s) * radius, Vec2::new(-s, c) * (radius * w), Vec2::new(c, s) * (-radius * w * w))
}

/// Kinematic ground truth at one instant. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub pos: Vec2,
    pub vel: Vec2,
    pub acc: Vec2,
    pub yaw: f64,
    /// `cog − yaw`.
    pub sideslip: f64,
    pub cog: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthSample {
    pub frame: i64,
    /// True UTC time of the exposure.
    pub t: f64,
    pub kin: Kinematics,
    pub footprint: [Vec2; 4],
}

/// Everything one scenario run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub truth: Vec<TruthSample>,
    pub detections: Vec<DetectionRow>,
    pub gcps: Vec<GroundControlPoint>,
    pub matches: Vec<(i64, Vec<Correspondence>)>,
    pub led_events: Vec<LedEvent>,
    pub reference: Vec<ReferenceSample>,
    pub true_mapping: FrameMapping,
    /// Camera drift per frame, reference → current image.
    pub drift: Vec<SimilarityTransform>,
}

/// Pinhole image of a point at height `h` whose ground footprint is pixel `g`.
pub fn project(g: Vec2, h: f64, cam: &CameraGeometry) -> Vec2 {
    let pp = cam.principal_point();
    pp + (g - pp) * (cam.hover_altitude / (cam.hover_altitude - h))
}

/// Noise-free detected rectangle (reference image) of a footprint: the
/// minimum-area rectangle around the 8 projected box corners.
pub fn silhouette_rect(footprint: &[Vec2; 4], scn: &Scenario, mapping: &FrameMapping) -> [Vec2; 4] {
    let cam = scn.camera_geometry();
    let mut pts = Vec::with_capacity(8);
    for c in footprint {
        let g = mapping.unmap(*c);
        pts.push(project(g, scn.vehicle.clearance_m, &cam));
        pts.push(project(g, scn.vehicle.roof_height_m, &cam));
    }
    min_area_rect(&pts).expect("a vehicle box has area")
}

fn in_image(p: Vec2, res: [f64; 2]) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x <= res[0] && p.y <= res[1]
}

fn uniform_point(rng: &mut ChaCha8Rng, res: [f64; 2]) -> Vec2 {
    Vec2::new(rng.random_range(0.0..res[0]), rng.random_range(0.0..res[1]))
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("validated non-negative std")
}

/// Drift step about the principal point.
fn drift_step(rng: &mut ChaCha8Rng, walk: &DriftWalk, pp: Vec2) -> SimilarityTransform {
    let s = (normal(walk.scale_std).sample(rng)).exp();
    let r = normal(walk.rotation_std_deg.to_radians()).sample(rng);
    let t = Vec2::new(normal(walk.translation_std_px).sample(rng), normal(walk.translation_std_px).sample(rng));
    let translation = pp - rotate(pp, r) * s + t;
    SimilarityTransform { scale: s, rotation: r, translation: [translation.x, translation.y] }
}

/// Runs a scenario.
pub fn generate(scn: &Scenario) -> Result<SimOutput, SimError> {
    scn.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scn.seed);
    let cam = scn.camera_geometry();
    let res = scn.camera.resolution;
    let pp = cam.principal_point();
    let mapping = scn.true_mapping();
    let fps = scn.true_fps();
    let t_start = scn.t0_utc_s + rng.random_range(0.0..1.0);
    let n = scn.frame_count();

    let mut truth = Vec::with_capacity(n as usize);
    for k in 0..n {
        let tau = k as f64 / fps;
        let kin = scn.kinematics(tau);
        let footprint = scn.footprint(&kin);
        for c in &footprint {
            if !in_image(mapping.unmap(*c), res) {
                return Err(invalid(format!("vehicle leaves the image at frame {k}")));
            }
        }
        truth.push(TruthSample { frame: k, t: t_start + tau, kin, footprint });
    }

    let zeta = scn.noise.gcp_zeta_px;
    let inset = 40f64.min(res[0] / 4.0).min(res[1] / 4.0);
    let gcp_px = [
        Vec2::new(inset, inset),
        Vec2::new(res[0] - inset, inset),
        Vec2::new(res[0] - inset, res[1] - inset),
        Vec2::new(inset, res[1] - inset),
    ];
    let gcps: Vec<GroundControlPoint> = gcp_px
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let noise = Vec2::new(rng.random_range(-zeta..=zeta), rng.random_range(-zeta..=zeta));
            GroundControlPoint::new(format!("G{}", i + 1), mapping.map_pixel(p), p + noise)
        })
        .collect();

    let mut drift = vec![SimilarityTransform::identity()];
    for _ in 1..n {
        let step = drift_step(&mut rng, &scn.drift, pp);
        drift.push(step.compose(drift.last().expect("non-empty")));
    }

    let match_noise = normal(scn.noise.match_std_px);
    let mut matches = Vec::with_capacity(n as usize);
    for (k, d) in drift.iter().enumerate() {
        let corrs = (0..scn.noise.matches_per_frame)
            .map(|_| {
                let r = uniform_point(&mut rng, res);
                let cur = if rng.random_bool(scn.noise.outlier_rate) {
                    uniform_point(&mut rng, res)
                } else {
                    d.apply(r) + Vec2::new(match_noise.sample(&mut rng), match_noise.sample(&mut rng))
                };
                Correspondence::new(r, cur)
            })
            .collect();
        matches.push((k as i64, corrs));
    }

    let corner_noise = normal(scn.noise.corner_std_px);
    let mut detections = Vec::with_capacity(n as usize);
    for (s, d) in truth.iter().zip(&drift) {
        let rect = silhouette_rect(&s.footprint, scn, &mapping);
        let dropped = rng.random_bool(scn.noise.dropout_rate);
        let corners = rect.map(|c| {
            let p = d.apply(c) + Vec2::new(corner_noise.sample(&mut rng), corner_noise.sample(&mut rng));
            if scn.noise.quantize {
                p.map(f64::round)
            } else {
                p
            }
        });
        if !dropped || s.frame == 0 || s.frame == n - 1 {
            detections.push(DetectionRow::new(s.frame, &corners));
        }
    }

    let t_last = t_start + (n - 1) as f64 / fps;
    let led_events = led_events(t_start, fps, t_last, n);

    // half a second of margin keeps estimated timestamps inside the trace
    let margin = 0.5;
    let steps = ((t_last - t_start + 2.0 * margin) * scn.reference_rate_hz).ceil() as i64;
    let reference = (0..=steps)
        .map(|j| {
            let tau = -margin + j as f64 / scn.reference_rate_hz;
            reference_sample(t_start + tau, &scn.kinematics(tau))
        })
        .collect();

    Ok(SimOutput { truth, detections, gcps, matches, led_events, reference, true_mapping: mapping, drift })
}

/// First frame at or after every whole UTC second within the recording.
pub fn led_events(t_start: f64, fps: f64, t_last: f64, n_frames: i64) -> Vec<LedEvent> {
    let mut out = Vec::new();
    let mut s = t_start.ceil();
    while s <= t_last {
        let frame = ((s - t_start) * fps).ceil() as i64;
        if frame < n_frames {
            out.push(LedEvent { frame, utc_second: s as i64 });
        }
        s += 1.0;
    }
    out
}

pub fn reference_sample(t: f64, k: &Kinematics) -> ReferenceSample {
    ReferenceSample {
        t,
        pos: k.pos,
        v_over_ground: k.vel.norm(),
        a_over_ground: k.acc.norm(),
        yaw: k.yaw,
        sideslip: k.sideslip,
        cog: k.cog,
    }
}

/// Writes `gcps.csv`, `matches.csv`, `detections.csv`, `led_events.csv`,
/// `reference.csv` and `true_mapping.json` into `dir`.
pub fn write_fixtures(out: &SimOutput, dir: &Path) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::Io { path: dir.to_path_buf(), source: e })?;
    io::write_gcps(&dir.join("gcps.csv"), &out.gcps)?;
    io::write_matches(&dir.join("matches.csv"), &out.matches)?;
    io::write_detections(&dir.join("detections.csv"), &out.detections)?;
    io::write_led_events(&dir.join("led_events.csv"), &out.led_events)?;
    io::write_reference(&dir.join("reference.csv"), &out.reference)?;
    io::write_json(&dir.join("true_mapping.json"), &out.true_mapping)
}

// ---------------------------------------------------------------------------
// Bound validation
// ---------------------------------------------------------------------------

/// Measured-versus-bound statistics of one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub checks: usize,
    pub violations: usize,
    /// Largest measured / bound ratio seen over checks with a positive bound.
    pub worst_ratio: f64,
    pub max_measured: f64,
}

impl StageReport {
    fn new(stage: &str) -> Self {
        Self { stage: stage.to_string(), checks: 0, violations: 0, worst_ratio: 0.0, max_measured: 0.0 }
    }

    fn check(&mut self, measured: f64, bound: f64) {
        self.checks += 1;
        // relative slack for rounding in the error computation itself
        if measured > bound * (1.0 + 1e-9) + 1e-12 {
            self.violations += 1;
        }
        self.max_measured = self.max_measured.max(measured);
        if bound > 0.0 {
            self.worst_ratio = self.worst_ratio.max(measured / bound);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetValidation {
    pub trials: usize,
    pub stages: Vec<StageReport>,
    pub checks: usize,
    pub violations: usize,
    pub violation_rate: f64,
}

impl BudgetValidation {
    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == name)
    }
}

/// Monte-Carlo check of the closed-form bounds against errors measured on
/// perturbed inputs, one fresh seed per trial.
///
/// Stages: GCP scale (`η_α`), GCP orientation (`η_θ`), mapped point,
/// relief-corrected corner, height-range corner (`η_scale`) and frame
/// timestamps with their position and velocity consequences.
pub fn validate_budget(scn: &Scenario, n_trials: usize) -> Result<BudgetValidation, SimError> {
    scn.validate()?;
    let cam = scn.camera_geometry();
    let res = scn.camera.resolution;
    let pp = cam.principal_point();
    let alpha = scn.alpha();
    let zeta = scn.noise.gcp_zeta_px;
    let truth_map = scn.true_mapping();
    let (h_min, h_max) = (scn.vehicle.clearance_m, scn.vehicle.roof_height_m);
    let eta_tau = 1.0 / scn.fps;
    let (v_max, a_max) = kinematic_extremes(scn, eta_tau);

    let mut scale = StageReport::new("mapping_scale");
    let mut orient = StageReport::new("mapping_orientation");
    let mut point = StageReport::new("mapping_point");
    let mut relief = StageReport::new("relief_corner");
    let mut height = StageReport::new("height_range_corner");
    let mut time = StageReport::new("sync_time");
    let mut pos = StageReport::new("sync_position");
    let mut vel = StageReport::new("sync_velocity");

    for trial in 0..n_trials {
        let mut rng =
            ChaCha8Rng::seed_from_u64(scn.seed.wrapping_add(trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));

        // GCPs anywhere in the image, perturbed by up to ζ per axis
        let true_px: Vec<Vec2> = (0..4).map(|_| uniform_point(&mut rng, res)).collect();
        let gcps: Vec<GroundControlPoint> = true_px
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let e = Vec2::new(rng.random_range(-zeta..=zeta), rng.random_range(-zeta..=zeta));
                GroundControlPoint::new(format!("G{i}"), truth_map.map_pixel(p), p + e)
            })
            .collect();
        let (i, j) = farthest_pair(&gcps).expect("4 GCPs");
        let baseline = true_px[j] - true_px[i];
        if baseline.norm() <= 2.0 * std::f64::consts::SQRT_2 * zeta + 1e-9 {
            continue;
        }
        let fitted = fit_mapping(&gcps, (&gcps[i].id, &gcps[j].id)).expect("separated GCPs");
        let eta_alpha = similarity_fraction(baseline.norm(), zeta).expect("positive distance");
        // the seen baseline is d ± 2√2ζ, so α̃/α lies in [d/(d+2√2ζ), d/(d−2√2ζ)]
        let ratio = fitted.alpha / alpha;
        let d = baseline.norm();
        let upper = d / (d - 2.0 * std::f64::consts::SQRT_2 * zeta);
        if ratio < 1.0 {
            scale.check(1.0 - ratio, 1.0 - eta_alpha);
        } else {
            scale.check(ratio - 1.0, upper - 1.0);
        }
        let eta_theta = orientation_error_bound(baseline, zeta).expect("non-zero baseline");
        orient.check(wrap_pi(fitted.theta_offset - truth_map.theta_offset).abs(), eta_theta);
        for _ in 0..10 {
            let b = uniform_point(&mut rng, res);
            let err = (fitted.map_pixel(b) - truth_map.map_pixel(b)).norm();
            let bound = mapping_point_error_bound(b, true_px[i], baseline, zeta, alpha).expect("valid inputs");
            point.check(err, bound);
        }

        for _ in 0..10 {
            // relief: exact projection at clearance, perturbed by up to ζ per axis
            let g = uniform_point(&mut rng, res);
            let img = project(g, h_min, &cam);
            let e = Vec2::new(rng.random_range(-zeta..=zeta), rng.random_range(-zeta..=zeta));
            let corrected = relief_shift(img + e, h_min, &cam).expect("height below camera");
            relief.check((corrected - g).norm() * alpha, corner_error_bound(h_min, &cam));

            // height only known to lie in [h_min, h_max]; corrected at mid height
            let img = uniform_point(&mut rng, res);
            let h = rng.random_range(h_min..=h_max);
            let ground = pp + (img - pp) * ((cam.hover_altitude - h) / cam.hover_altitude);
            let guess = relief_shift(img, 0.5 * (h_min + h_max), &cam).expect("height below camera");
            height.check((guess - ground).norm() * alpha, scale_error_bound(img, &cam, h_min, h_max));
        }

        // LED-derived time base with a random sub-second phase and clock error
        let ppm = rng.random_range(-1.0..=1.0) * scn.clock_ppm;
        let fps = scn.fps * (1.0 + ppm * 1e-6);
        let t_start = scn.t0_utc_s + rng.random_range(0.0..1.0);
        let n = scn.frame_count();
        let t_last = t_start + (n - 1) as f64 / fps;
        let events = led_events(t_start, fps, t_last, n);
        let Ok(tb) = fit_timebase_lag_corrected(&events, scn.fps) else {
            time.check(f64::INFINITY, eta_tau);
            continue;
        };
        for k in 0..n {
            let tau_true = k as f64 / fps;
            let tau_est = tb.frame_to_utc(k) - t_start;
            let dt = (tau_est - tau_true).abs();
            time.check(dt, eta_tau);
            let (a, b) = (scn.kinematics(tau_true), scn.kinematics(tau_est));
            pos.check((a.pos - b.pos).norm(), v_max * eta_tau);
            vel.check((a.vel - b.vel).norm(), a_max * eta_tau);
        }
    }

    let stages = vec![scale, orient, point, relief, height, time, pos, vel];
    let checks = stages.iter().map(|s| s.checks).sum();
    let violations = stages.iter().map(|s| s.violations).sum();
    Ok(BudgetValidation {
        trials: n_trials,
        stages,
        checks,
        violations,
        violation_rate: if checks == 0 { 0.0 } else { violations as f64 / checks as f64 },
    })
}

/// Largest speed and acceleration magnitude over the run plus `margin`
/// seconds each side, sampled every millisecond and padded by 0.1%.
fn kinematic_extremes(scn: &Scenario, margin: f64) -> (f64, f64) {
    let steps = ((scn.duration_s + 2.0 * margin) * 1000.0).ceil() as usize;
    let (mut v, mut a) = (0.0f64, 0.0f64);
    for i in 0..=steps {
        let k = scn.kinematics(-margin + i as f64 / 1000.0);
        v = v.max(k.vel.norm());
        a = a.max(k.acc.norm());
    }
    (v * 1.001, a * 1.001)
}

/// Mean ground error of the uncorrected silhouette centre per altitude,
/// with the log-log slope of error against altitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AltitudeSweep {
    pub altitudes_m: Vec<f64>,
    pub mean_center_error_m: Vec<f64>,
    pub log_log_slope: f64,
}

/// Relief-induced centre error for a fixed focal length at several
/// altitudes. The vehicle is placed at fixed ground offsets from nadir so
/// only the altitude changes.
pub fn relief_altitude_sweep(scn: &Scenario, altitudes: &[f64]) -> Result<AltitudeSweep, SimError> {
    let mut errors = Vec::with_capacity(altitudes.len());
    for &h in altitudes {
        let mut s = *scn;
        s.camera.hover_altitude_m = h;
        s.validate()?;
        let mapping = s.true_mapping();
        let [cx, cy] = s.camera.ground_center_m;
        let mut sum = 0.0;
        let mut count = 0;
        for (r, bearing, heading) in [(8.0, 0.3, 0.0), (12.0, 2.0, 1.0), (10.0, -1.2, 2.5), (6.0, 3.0, -0.7)] {
            let kin = Kinematics {
                pos: Vec2::new(cx, cy) + rotate(Vec2::new(r, 0.0), bearing),
                vel: Vec2::zeros(),
                acc: Vec2::zeros(),
                yaw: heading,
                sideslip: 0.0,
                cog: heading,
            };
            let rect = silhouette_rect(&s.footprint(&kin), &s, &mapping);
            let center = rect.iter().sum::<Vec2>() / 4.0;
            sum += (mapping.map_pixel(center) - kin.pos).norm();
            count += 1;
        }
        errors.push(sum / count as f64);
    }
    let xs: Vec<f64> = altitudes.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(AltitudeSweep { altitudes_m: altitudes.to_vec(), mean_center_error_m: errors, log_log_slope: sxy / sxx })
}
