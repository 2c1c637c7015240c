//! CSV and JSON file formats. Files carry degrees; rows convert to the
//! radian-based domain types.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bench::{EstimateSample, ReferenceSample};
use crate::filter::TrackPoint;
use crate::georef::GroundControlPoint;
use crate::measure::{Measurement, Quality};
use crate::stabilize::{Correspondence, RobustFitReport, SimilarityTransform};
use crate::sync::LedEvent;
use crate::Vec2;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot access {}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// Malformed content; `line` and `column` are 1-based, 0 when unknown.
    #[error("{}:{line}:{column}: {msg}", file.display())]
    Schema { file: PathBuf, line: u64, column: u64, msg: String },
}

impl IoError {
    pub fn schema(file: &Path, line: u64, column: u64, msg: impl Into<String>) -> Self {
        Self::Schema { file: file.to_path_buf(), line, column, msg: msg.into() }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    fn from_csv(path: &Path, e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line());
        match e.into_kind() {
            csv::ErrorKind::Io(source) => Self::io(path, source),
            csv::ErrorKind::Deserialize { err, .. } => {
                let column = err.field().map_or(0, |f| f + 1);
                Self::schema(path, line, column, err.kind().to_string())
            }
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Self::schema(
                path,
                line,
                len.min(expected_len) + 1,
                format!("expected {expected_len} fields, found {len}"),
            ),
            kind => Self::schema(path, line, 0, format!("{kind:?}")),
        }
    }
}

/// Reads a headed CSV whose header must be exactly `header`.
pub fn read_csv<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>, IoError> {
    let file = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let found = rdr.headers().map_err(|e| IoError::from_csv(path, e))?.clone();
    if found.is_empty() || (found.len() == 1 && found[0].is_empty()) {
        return Err(IoError::schema(path, 1, 1, format!("missing header, expected `{}`", header.join(","))));
    }
    for (i, want) in header.iter().enumerate() {
        if found.get(i) != Some(want) {
            return Err(IoError::schema(
                path,
                1,
                i as u64 + 1,
                format!("expected column `{want}`, found `{}`", found.get(i).unwrap_or("")),
            ));
        }
    }
    if found.len() != header.len() {
        return Err(IoError::schema(path, 1, header.len() as u64 + 1, "unexpected extra column"));
    }
    rdr.deserialize().map(|r| r.map_err(|e| IoError::from_csv(path, e))).collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let wrap = |e: csv::Error| IoError::from_csv(path, e);
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.serialize(r).map_err(wrap)?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| IoError::schema(path, e.line() as u64, e.column() as u64, e.to_string()))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| IoError::io(path, e))
}

/// Rows must be sorted by their key; reports the first offending data line.
fn check_sorted<T>(path: &Path, rows: &[T], key: impl Fn(&T) -> i64, strict: bool) -> Result<(), IoError> {
    for (i, w) in rows.windows(2).enumerate() {
        let (a, b) = (key(&w[0]), key(&w[1]));
        if b < a || (strict && b == a) {
            return Err(IoError::schema(path, i as u64 + 3, 1, format!("frame {b} out of order after {a}")));
        }
    }
    Ok(())
}

pub const GCP_HEADER: [&str; 5] = ["id", "x_ltp_m", "y_ltp_m", "x_pcf_px", "y_pcf_px"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcpRow {
    pub id: String,
    pub x_ltp_m: f64,
    pub y_ltp_m: f64,
    pub x_pcf_px: f64,
    pub y_pcf_px: f64,
}

impl From<&GroundControlPoint> for GcpRow {
    fn from(g: &GroundControlPoint) -> Self {
        Self { id: g.id.clone(), x_ltp_m: g.ltp.x, y_ltp_m: g.ltp.y, x_pcf_px: g.pcf.x, y_pcf_px: g.pcf.y }
    }
}

pub fn read_gcps(path: &Path) -> Result<Vec<GroundControlPoint>, IoError> {
    let rows: Vec<GcpRow> = read_csv(path, &GCP_HEADER)?;
    Ok(rows
        .into_iter()
        .map(|r| GroundControlPoint::new(r.id, Vec2::new(r.x_ltp_m, r.y_ltp_m), Vec2::new(r.x_pcf_px, r.y_pcf_px)))
        .collect())
}

pub fn write_gcps(path: &Path, gcps: &[GroundControlPoint]) -> Result<(), IoError> {
    write_csv(path, &gcps.iter().map(GcpRow::from).collect::<Vec<_>>(), &GCP_HEADER)
}

pub const MATCH_HEADER: [&str; 5] = ["frame", "x_ref_px", "y_ref_px", "x_cur_px", "y_cur_px"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchRow {
    pub frame: i64,
    pub x_ref_px: f64,
    pub y_ref_px: f64,
    pub x_cur_px: f64,
    pub y_cur_px: f64,
}

/// Correspondences grouped by frame, in file order of frames.
pub fn read_matches(path: &Path) -> Result<Vec<(i64, Vec<Correspondence>)>, IoError> {
    let rows: Vec<MatchRow> = read_csv(path, &MATCH_HEADER)?;
    check_sorted(path, &rows, |r| r.frame, false)?;
    let mut out: Vec<(i64, Vec<Correspondence>)> = Vec::new();
    for r in rows {
        let c = Correspondence::new(Vec2::new(r.x_ref_px, r.y_ref_px), Vec2::new(r.x_cur_px, r.y_cur_px));
        match out.last_mut() {
            Some((f, cs)) if *f == r.frame => cs.push(c),
            _ => out.push((r.frame, vec![c])),
        }
    }
    Ok(out)
}

pub fn write_matches(path: &Path, frames: &[(i64, Vec<Correspondence>)]) -> Result<(), IoError> {
    let rows: Vec<MatchRow> = frames
        .iter()
        .flat_map(|(f, cs)| {
            cs.iter().map(move |c| MatchRow {
                frame: *f,
                x_ref_px: c.ref_pt.x,
                y_ref_px: c.ref_pt.y,
                x_cur_px: c.cur_pt.x,
                y_cur_px: c.cur_pt.y,
            })
        })
        .collect();
    write_csv(path, &rows, &MATCH_HEADER)
}

pub const STAB_HEADER: [&str; 7] = ["frame", "scale", "rotation_deg", "tx_px", "ty_px", "inliers", "rms_px"];

/// Per-frame stabilization transform, current frame → reference frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabRow {
    pub frame: i64,
    pub scale: f64,
    pub rotation_deg: f64,
    pub tx_px: f64,
    pub ty_px: f64,
    pub inliers: usize,
    pub rms_px: f64,
}

impl StabRow {
    pub fn new(frame: i64, t: &SimilarityTransform, report: &RobustFitReport) -> Self {
        Self {
            frame,
            scale: t.scale,
            rotation_deg: t.rotation.to_degrees(),
            tx_px: t.translation[0],
            ty_px: t.translation[1],
            inliers: report.inlier_count,
            rms_px: report.residual_rms,
        }
    }

    pub fn transform(&self) -> SimilarityTransform {
        SimilarityTransform {
            scale: self.scale,
            rotation: self.rotation_deg.to_radians(),
            translation: [self.tx_px, self.ty_px],
        }
    }
}

pub fn read_stab(path: &Path) -> Result<Vec<StabRow>, IoError> {
    let rows: Vec<StabRow> = read_csv(path, &STAB_HEADER)?;
    check_sorted(path, &rows, |r| r.frame, true)?;
    Ok(rows)
}

pub fn write_stab(path: &Path, rows: &[StabRow]) -> Result<(), IoError> {
    write_csv(path, rows, &STAB_HEADER)
}

pub const DETECTION_HEADER: [&str; 9] = ["frame", "x1", "y1", "x2", "y2", "x3", "y3", "x4", "y4"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub frame: i64,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub x3: f64,
    pub y3: f64,
    pub x4: f64,
    pub y4: f64,
}

impl DetectionRow {
    pub fn new(frame: i64, c: &[Vec2; 4]) -> Self {
        Self { frame, x1: c[0].x, y1: c[0].y, x2: c[1].x, y2: c[1].y, x3: c[2].x, y3: c[2].y, x4: c[3].x, y4: c[3].y }
    }

    pub fn corners(&self) -> [Vec2; 4] {
        [
            Vec2::new(self.x1, self.y1),
            Vec2::new(self.x2, self.y2),
            Vec2::new(self.x3, self.y3),
            Vec2::new(self.x4, self.y4),
        ]
    }
}

/// One detection per frame, frames strictly increasing.
pub fn read_detections(path: &Path) -> Result<Vec<DetectionRow>, IoError> {
    let rows: Vec<DetectionRow> = read_csv(path, &DETECTION_HEADER)?;
    check_sorted(path, &rows, |r| r.frame, true)?;
    Ok(rows)
}

pub fn write_detections(path: &Path, rows: &[DetectionRow]) -> Result<(), IoError> {
    write_csv(path, rows, &DETECTION_HEADER)
}

pub const MEASUREMENT_HEADER: [&str; 7] = ["frame", "x_m", "y_m", "yaw_deg", "width_m", "length_m", "quality"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRow {
    pub frame: i64,
    pub x_m: f64,
    pub y_m: f64,
    pub yaw_deg: f64,
    pub width_m: f64,
    pub length_m: f64,
    pub quality: String,
}

impl From<&Measurement> for MeasurementRow {
    fn from(m: &Measurement) -> Self {
        Self {
            frame: m.frame,
            x_m: m.center.x,
            y_m: m.center.y,
            yaw_deg: m.yaw.to_degrees(),
            width_m: m.est_width,
            length_m: m.est_length,
            quality: m.quality.as_str().to_string(),
        }
    }
}

pub fn write_measurements(path: &Path, ms: &[Measurement]) -> Result<(), IoError> {
    write_csv(path, &ms.iter().map(MeasurementRow::from).collect::<Vec<_>>(), &MEASUREMENT_HEADER)
}

pub fn read_measurements(path: &Path) -> Result<Vec<Measurement>, IoError> {
    let rows: Vec<MeasurementRow> = read_csv(path, &MEASUREMENT_HEADER)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let quality = match r.quality.as_str() {
                "ok" => Quality::Ok,
                "non_rectangular" => Quality::NonRectangular,
                other => return Err(IoError::schema(path, i as u64 + 2, 7, format!("unknown quality `{other}`"))),
            };
            Ok(Measurement {
                frame: r.frame,
                center: Vec2::new(r.x_m, r.y_m),
                yaw: r.yaw_deg.to_radians(),
                est_width: r.width_m,
                est_length: r.length_m,
                quality,
            })
        })
        .collect()
}

pub const STATE_HEADER: [&str; 13] = [
    "t_utc_s",
    "frame",
    "x_m",
    "y_m",
    "vx_mps",
    "vy_mps",
    "ax_mps2",
    "ay_mps2",
    "yaw_deg",
    "yawrate_degps",
    "cog_deg",
    "sideslip_deg",
    "sideslip_valid",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateRow {
    pub t_utc_s: f64,
    pub frame: i64,
    pub x_m: f64,
    pub y_m: f64,
    pub vx_mps: f64,
    pub vy_mps: f64,
    pub ax_mps2: f64,
    pub ay_mps2: f64,
    pub yaw_deg: f64,
    pub yawrate_degps: f64,
    pub cog_deg: f64,
    pub sideslip_deg: f64,
    pub sideslip_valid: bool,
}

impl From<&TrackPoint> for StateRow {
    fn from(tp: &TrackPoint) -> Self {
        let s = &tp.state;
        Self {
            t_utc_s: s.t,
            frame: s.frame,
            x_m: s.x(),
            y_m: s.y(),
            vx_mps: s.vx(),
            vy_mps: s.vy(),
            ax_mps2: s.ax(),
            ay_mps2: s.ay(),
            yaw_deg: s.yaw().to_degrees(),
            yawrate_degps: s.yaw_rate().to_degrees(),
            cog_deg: tp.derived.cog.to_degrees(),
            sideslip_deg: tp.derived.sideslip.to_degrees(),
            sideslip_valid: tp.derived.valid_sideslip,
        }
    }
}

impl From<&StateRow> for EstimateSample {
    fn from(r: &StateRow) -> Self {
        Self {
            t: r.t_utc_s,
            pos: Vec2::new(r.x_m, r.y_m),
            speed: r.vx_mps.hypot(r.vy_mps),
            accel: r.ax_mps2.hypot(r.ay_mps2),
            yaw: r.yaw_deg.to_radians(),
            sideslip: r.sideslip_deg.to_radians(),
            cog: r.cog_deg.to_radians(),
            valid: r.sideslip_valid,
        }
    }
}

pub fn read_states(path: &Path) -> Result<Vec<StateRow>, IoError> {
    read_csv(path, &STATE_HEADER)
}

pub fn write_states(path: &Path, track: &[TrackPoint]) -> Result<(), IoError> {
    write_csv(path, &track.iter().map(StateRow::from).collect::<Vec<_>>(), &STATE_HEADER)
}

pub const LED_HEADER: [&str; 2] = ["frame", "utc_second"];

pub fn read_led_events(path: &Path) -> Result<Vec<LedEvent>, IoError> {
    read_csv(path, &LED_HEADER)
}

pub fn write_led_events(path: &Path, events: &[LedEvent]) -> Result<(), IoError> {
    write_csv(path, events, &LED_HEADER)
}

pub const REFERENCE_HEADER: [&str; 8] =
    ["t_utc_s", "x_m", "y_m", "v_mps", "a_mps2", "yaw_deg", "sideslip_deg", "cog_deg"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub t_utc_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub v_mps: f64,
    pub a_mps2: f64,
    pub yaw_deg: f64,
    pub sideslip_deg: f64,
    pub cog_deg: f64,
}

impl From<&ReferenceSample> for ReferenceRow {
    fn from(s: &ReferenceSample) -> Self {
        Self {
            t_utc_s: s.t,
            x_m: s.pos.x,
            y_m: s.pos.y,
            v_mps: s.v_over_ground,
            a_mps2: s.a_over_ground,
            yaw_deg: s.yaw.to_degrees(),
            sideslip_deg: s.sideslip.to_degrees(),
            cog_deg: s.cog.to_degrees(),
        }
    }
}

impl From<&ReferenceRow> for ReferenceSample {
    fn from(r: &ReferenceRow) -> Self {
        Self {
            t: r.t_utc_s,
            pos: Vec2::new(r.x_m, r.y_m),
            v_over_ground: r.v_mps,
            a_over_ground: r.a_mps2,
            yaw: r.yaw_deg.to_radians(),
            sideslip: r.sideslip_deg.to_radians(),
            cog: r.cog_deg.to_radians(),
        }
    }
}

pub fn read_reference(path: &Path) -> Result<Vec<ReferenceSample>, IoError> {
    let rows: Vec<ReferenceRow> = read_csv(path, &REFERENCE_HEADER)?;
    Ok(rows.iter().map(ReferenceSample::from).collect())
}

pub fn write_reference(path: &Path, trace: &[ReferenceSample]) -> Result<(), IoError> {
    write_csv(path, &trace.iter().map(ReferenceRow::from).collect::<Vec<_>>(), &REFERENCE_HEADER)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn gcps_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let gcps = vec![
            GroundControlPoint::new("a", Vec2::new(1.5, -2.0), Vec2::new(10.0, 20.0)),
            GroundControlPoint::new("b", Vec2::new(30.25, 4.0), Vec2::new(1900.0, 1000.0)),
        ];
        let p = dir.path().join("gcps.csv");
        write_gcps(&p, &gcps).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("id,x_ltp_m,y_ltp_m,x_pcf_px,y_pcf_px\n"));
        assert_eq!(read_gcps(&p).unwrap(), gcps);
    }

    #[test]
    fn bad_value_names_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "gcps.csv", "id,x_ltp_m,y_ltp_m,x_pcf_px,y_pcf_px\na,1,2,3,4\nb,1,oops,3,4\n");
        match read_gcps(&p) {
            Err(IoError::Schema { line, column, .. }) => assert_eq!((line, column), (3, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_header_and_short_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "led.csv", "frame,second\n0,1\n");
        assert!(matches!(read_led_events(&p), Err(IoError::Schema { line: 1, column: 2, .. })));
        let p = write(dir.path(), "led2.csv", "frame,utc_second\n0,1\n5\n");
        assert!(matches!(read_led_events(&p), Err(IoError::Schema { line: 3, .. })));
        let p = write(dir.path(), "empty.csv", "");
        assert!(matches!(read_led_events(&p), Err(IoError::Schema { line: 1, column: 1, .. })));
        assert!(matches!(read_led_events(&dir.path().join("missing.csv")), Err(IoError::Io { .. })));
    }

    #[test]
    fn detections_must_be_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "frame,x1,y1,x2,y2,x3,y3,x4,y4\n2,0,0,1,0,1,1,0,1\n1,0,0,1,0,1,1,0,1\n");
        assert!(matches!(read_detections(&p), Err(IoError::Schema { line: 3, .. })));
    }

    #[test]
    fn matches_grouped_by_frame() {
        let dir = tempfile::tempdir().unwrap();
        let p =
            write(dir.path(), "m.csv", "frame,x_ref_px,y_ref_px,x_cur_px,y_cur_px\n0,1,1,1,1\n0,2,2,2,2\n3,5,5,6,6\n");
        let m = read_matches(&p).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].1.len(), 2);
        assert_eq!(m[1].0, 3);
        let q = dir.path().join("m2.csv");
        write_matches(&q, &m).unwrap();
        assert_eq!(read_matches(&q).unwrap(), m);
    }

    #[test]
    fn json_error_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.json", "{\n  \"alpha\": 1.0,\n  \"bogus\" 2\n}\n");
        match read_json::<serde_json::Value>(&p) {
            Err(IoError::Schema { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
