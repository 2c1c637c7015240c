//! Error metrics of an estimated trajectory against a reference trace.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::angle::{abs_diff, lerp as lerp_angle};
use crate::filter::TrackPoint;
use crate::Vec2;

/// Query times may sit this far outside the trace and are clamped.
const SPAN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error("reference trace is empty")]
    EmptyTrace,
    #[error("reference times must strictly increase (sample {0})")]
    NonMonotonicTrace(usize),
    #[error("time {0} s is outside the reference span")]
    OutOfSpan(f64),
    #[error("estimate has {est} samples, reference {reference}")]
    LengthMismatch { est: usize, reference: usize },
    #[error("sample {index}: estimate at {est} s, reference at {reference} s")]
    TimeMismatch { index: usize, est: f64, reference: f64 },
}

/// One reference-sensor sample. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    pub t: f64,
    pub pos: Vec2,
    pub v_over_ground: f64,
    pub a_over_ground: f64,
    pub yaw: f64,
    pub sideslip: f64,
    pub cog: f64,
}

/// Estimated quantities at one instant, in the reference's terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateSample {
    pub t: f64,
    pub pos: Vec2,
    pub speed: f64,
    /// Magnitude of the acceleration vector.
    pub accel: f64,
    pub yaw: f64,
    pub sideslip: f64,
    pub cog: f64,
    /// Course and sideslip are defined (vehicle moving).
    pub valid: bool,
}

impl From<&TrackPoint> for EstimateSample {
    fn from(tp: &TrackPoint) -> Self {
        let s = &tp.state;
        Self {
            t: s.t,
            pos: Vec2::new(s.x(), s.y()),
            speed: tp.derived.speed,
            accel: s.ax().hypot(s.ay()),
            yaw: s.yaw(),
            sideslip: tp.derived.sideslip,
            cog: tp.derived.cog,
            valid: tp.derived.valid_sideslip,
        }
    }
}

fn check_trace(trace: &[ReferenceSample]) -> Result<(), BenchError> {
    if trace.is_empty() {
        return Err(BenchError::EmptyTrace);
    }
    match trace.windows(2).position(|w| !(w[1].t > w[0].t)) {
        Some(i) => Err(BenchError::NonMonotonicTrace(i + 1)),
        None => Ok(()),
    }
}

/// Reference interpolated at `times`: linear per field, angles along the
/// shortest arc.
pub fn resample_reference(trace: &[ReferenceSample], times: &[f64]) -> Result<Vec<ReferenceSample>, BenchError> {
    check_trace(trace)?;
    let (first, last) = (trace[0].t, trace[trace.len() - 1].t);
    times
        .iter()
        .map(|&t| {
            if !(t >= first - SPAN_EPS && t <= last + SPAN_EPS) {
                return Err(BenchError::OutOfSpan(t));
            }
            let t = t.clamp(first, last);
            let i = trace.partition_point(|s| s.t <= t);
            if i == 0 {
                return Ok(trace[0]);
            }
            let a = &trace[i - 1];
            if a.t == t || i == trace.len() {
                return Ok(ReferenceSample { t, ..*a });
            }
            let b = &trace[i];
            let f = (t - a.t) / (b.t - a.t);
            let lin = |x: f64, y: f64| x + (y - x) * f;
            Ok(ReferenceSample {
                t,
                pos: a.pos + (b.pos - a.pos) * f,
                v_over_ground: lin(a.v_over_ground, b.v_over_ground),
                a_over_ground: lin(a.a_over_ground, b.a_over_ground),
                yaw: lerp_angle(a.yaw, b.yaw, f),
                sideslip: lerp_angle(a.sideslip, b.sideslip, f),
                cog: lerp_angle(a.cog, b.cog, f),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Position,
    Velocity,
    Acceleration,
    Yaw,
    Sideslip,
    Cog,
}

impl Variable {
    pub const ALL: [Variable; 6] =
        [Self::Position, Self::Velocity, Self::Acceleration, Self::Yaw, Self::Sideslip, Self::Cog];

    pub fn name(self) -> &'static str {
        match self {
            Self::Position => "position",
            Self::Velocity => "velocity",
            Self::Acceleration => "acceleration",
            Self::Yaw => "yaw",
            Self::Sideslip => "sideslip",
            Self::Cog => "cog",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Self::Position => "m",
            Self::Velocity => "m/s",
            Self::Acceleration => "m/s^2",
            _ => "deg",
        }
    }
}

/// Error statistics of one variable. Angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableReport {
    pub variable: Variable,
    pub unit: String,
    pub count: usize,
    pub mean_abs: Option<f64>,
    pub rmse: Option<f64>,
    pub max: Option<f64>,
    /// `(error, fraction of samples with error ≤ it)` at every distinct error.
    #[serde(skip)]
    pub cumulative: Vec<(f64, f64)>,
}

impl VariableReport {
    fn from_errors(variable: Variable, mut errors: Vec<f64>) -> Self {
        errors.sort_by(f64::total_cmp);
        let n = errors.len();
        let (mean_abs, rmse, max) = if n == 0 {
            (None, None, None)
        } else {
            let mean = errors.iter().sum::<f64>() / n as f64;
            let ms = errors.iter().map(|e| e * e).sum::<f64>() / n as f64;
            (Some(mean), Some(ms.sqrt()), errors.last().copied())
        };
        let mut cumulative: Vec<(f64, f64)> = Vec::new();
        for (i, &e) in errors.iter().enumerate() {
            let frac = (i + 1) as f64 / n as f64;
            match cumulative.last_mut() {
                Some(last) if last.0 == e => last.1 = frac,
                _ => cumulative.push((e, frac)),
            }
        }
        Self { variable, unit: variable.unit().to_string(), count: n, mean_abs, rmse, max, cumulative }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub samples: usize,
    pub variables: Vec<VariableReport>,
}

impl BenchReport {
    pub fn get(&self, v: Variable) -> &VariableReport {
        self.variables.iter().find(|r| r.variable == v).expect("all variables present")
    }
}

/// Per-variable errors of `est` against a reference resampled at its times.
///
/// Course and sideslip are skipped where the estimate is too slow for them
/// to be defined.
pub fn compare(est: &[EstimateSample], reference: &[ReferenceSample]) -> Result<BenchReport, BenchError> {
    if est.len() != reference.len() {
        return Err(BenchError::LengthMismatch { est: est.len(), reference: reference.len() });
    }
    for (index, (e, r)) in est.iter().zip(reference).enumerate() {
        if (e.t - r.t).abs() > 1e-6 {
            return Err(BenchError::TimeMismatch { index, est: e.t, reference: r.t });
        }
    }
    let pairs = || est.iter().zip(reference);
    let deg = |a: f64, b: f64| abs_diff(a, b).to_degrees();
    let errors = |v: Variable| -> Vec<f64> {
        match v {
            Variable::Position => pairs().map(|(e, r)| (e.pos - r.pos).norm()).collect(),
            Variable::Velocity => pairs().map(|(e, r)| (e.speed - r.v_over_ground).abs()).collect(),
            Variable::Acceleration => pairs().map(|(e, r)| (e.accel - r.a_over_ground).abs()).collect(),
            Variable::Yaw => pairs().map(|(e, r)| deg(e.yaw, r.yaw)).collect(),
            Variable::Sideslip => pairs().filter(|(e, _)| e.valid).map(|(e, r)| deg(e.sideslip, r.sideslip)).collect(),
            Variable::Cog => pairs().filter(|(e, _)| e.valid).map(|(e, r)| deg(e.cog, r.cog)).collect(),
        }
    };
    Ok(BenchReport {
        samples: est.len(),
        variables: Variable::ALL.iter().map(|&v| VariableReport::from_errors(v, errors(v))).collect(),
    })
}

/// Cumulative table as `.dat` text: header `error percent`, then one
/// `error fraction` row per distinct error with the fraction in `[0, 1]`.
pub fn plotdata(report: &VariableReport) -> String {
    let mut s = String::from("error percent\n");
    for (e, f) in &report.cumulative {
        writeln!(s, "{e:.6} {f:.6}").expect("writing to a String");
    }
    s
}

/// Writes `<variable>.dat` for all six variables into `out_dir`.
pub fn emit_plotdata(report: &BenchReport, out_dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    report
        .variables
        .iter()
        .map(|r| {
            let path = out_dir.join(format!("{}.dat", r.variable.name()));
            std::fs::write(&path, plotdata(r))?;
            Ok(path)
        })
        .collect()
}
