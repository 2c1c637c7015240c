//! Detections to filtered states: stabilize, measure, timestamp, filter.

use crate::bench::{compare, resample_reference, BenchReport, EstimateSample};
use crate::filter::{run_track, FilterConfig, TimedMeasurement, TrackPoint};
use crate::georef::{compensate_gcps, CompensationConfig, FrameMapping};
use crate::io::{DetectionRow, StabRow};
use crate::measure::{make_measurement, CameraGeometry, MeasureConfig, Measurement, RotatedBBox, VehicleDims};
use crate::sim::{generate, Scenario, SimOutput};
use crate::stabilize::{estimate_transform, Correspondence, RobustFitConfig, RobustFitReport, SimilarityTransform};
use crate::sync::{fit_timebase_lag_corrected, TimeBase};
use crate::{Error, Result};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("no detections")]
    NoDetections,
    #[error("no stabilization transform for frame {0}")]
    MissingStabilization(i64),
    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: i64,
        #[source]
        source: Box<Error>,
    },
}

fn at(frame: i64) -> impl FnOnce(Error) -> Error {
    move |e| PipelineError::AtFrame { frame, source: Box::new(e) }.into()
}

/// Per-frame stabilization. A frame whose fit fails keeps the previous
/// frame's transform (identity before the first success) and is reported.
pub fn stabilize_frames(
    frames: &[(i64, Vec<Correspondence>)],
    cfg: &RobustFitConfig,
) -> (Vec<StabRow>, Vec<(i64, crate::stabilize::StabilizeError)>) {
    let mut rows = Vec::with_capacity(frames.len());
    let mut failures = Vec::new();
    let mut last = SimilarityTransform::identity();
    for (frame, corrs) in frames {
        match estimate_transform(corrs, cfg) {
            Ok((t, report)) => {
                last = t;
                rows.push(StabRow::new(*frame, &t, &report));
            }
            Err(e) => {
                let report =
                    RobustFitReport { inlier_count: 0, inlier_ratio: 0.0, residual_rms: 0.0, iterations_used: 0 };
                rows.push(StabRow::new(*frame, &last, &report));
                failures.push((*frame, e));
            }
        }
    }
    (rows, failures)
}

/// Static inputs of [`track`].
#[derive(Debug, Clone)]
pub struct TrackSetup<'a> {
    pub mapping: &'a FrameMapping,
    pub camera: &'a CameraGeometry,
    pub dims: Option<&'a VehicleDims>,
    pub measure: &'a MeasureConfig,
    pub filter: &'a FilterConfig,
    pub timebase: &'a TimeBase,
}

/// Measurements and filtered states for one vehicle track.
///
/// `stab` must cover every detected frame when given; without it the
/// detections are taken as already stabilized.
pub fn track(
    detections: &[DetectionRow],
    stab: Option<&[StabRow]>,
    setup: &TrackSetup<'_>,
) -> Result<(Vec<Measurement>, Vec<TrackPoint>)> {
    if detections.is_empty() {
        return Err(PipelineError::NoDetections.into());
    }
    let mut measurements = Vec::with_capacity(detections.len());
    let mut timed = Vec::with_capacity(detections.len());
    for d in detections {
        let t = match stab {
            None => SimilarityTransform::identity(),
            Some(rows) => rows
                .binary_search_by_key(&d.frame, |r| r.frame)
                .map(|i| rows[i].transform())
                .map_err(|_| Error::from(PipelineError::MissingStabilization(d.frame)))?,
        };
        let corners = d.corners().map(|c| t.apply(c));
        let bbox = RotatedBBox::new(corners).map_err(|e| at(d.frame)(e.into()))?;
        let m = make_measurement(d.frame, &bbox, setup.mapping, setup.camera, setup.dims, setup.measure)
            .map_err(|e| at(d.frame)(e.into()))?;
        timed.push(TimedMeasurement { t: setup.timebase.frame_to_utc(d.frame), measurement: m });
        measurements.push(m);
    }
    let states = run_track(&timed, setup.filter)?;
    Ok((measurements, states))
}

/// Everything produced by an end-to-end simulated run.
#[derive(Debug, Clone)]
pub struct SimulatedRun {
    pub sim: SimOutput,
    pub mapping: FrameMapping,
    pub timebase: TimeBase,
    pub stab: Vec<StabRow>,
    pub measurements: Vec<Measurement>,
    pub states: Vec<TrackPoint>,
    pub report: BenchReport,
}

/// Generates a scenario and runs the full pipeline on its fixtures with the
/// scenario's camera, vehicle dimensions and ζ; the filter uses
/// `r_pos = (ζ·α)²` unless `filter` is given.
pub fn run_simulated(scn: &Scenario, filter: Option<&FilterConfig>) -> Result<SimulatedRun> {
    let sim = generate(scn)?;
    let [rx, ry] = scn.camera.resolution;
    let mapping = compensate_gcps(&sim.gcps, &CompensationConfig::for_resolution(rx, ry))?;
    let timebase = fit_timebase_lag_corrected(&sim.led_events, scn.fps)?;
    let robust = RobustFitConfig {
        sigma: scn.noise.match_std_px.max(0.1),
        image_size: scn.camera.resolution,
        seed: scn.seed,
        ..RobustFitConfig::default()
    };
    let (stab, _) = stabilize_frames(&sim.matches, &robust);
    let camera = CameraGeometry { alpha: mapping.alpha, ..scn.camera_geometry() };
    let dims = scn.dims();
    let filter =
        filter.copied().unwrap_or_else(|| FilterConfig::for_resolution(mapping.alpha, scn.noise.gcp_zeta_px.max(0.5)));
    let setup = TrackSetup {
        mapping: &mapping,
        camera: &camera,
        dims: Some(&dims),
        measure: &MeasureConfig::default(),
        filter: &filter,
        timebase: &timebase,
    };
    let (measurements, states) = track(&sim.detections, Some(&stab), &setup)?;
    let est: Vec<EstimateSample> = states.iter().map(EstimateSample::from).collect();
    let times: Vec<f64> = est.iter().map(|e| e.t).collect();
    let reference = resample_reference(&sim.reference, &times)?;
    let report = compare(&est, &reference)?;
    Ok(SimulatedRun { sim, mapping, timebase, stab, measurements, states, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::Variable;

    #[test]
    fn empty_detections_rejected() {
        let m = FrameMapping::identity();
        let cam = CameraGeometry::new([1920.0, 1080.0], 50.0, 0.0334).unwrap();
        let tb = TimeBase { slope: 0.02, offset: 0.0, residual_max: 0.0, eta_tau: 0.02, fps_nominal: 50.0 };
        let setup = TrackSetup {
            mapping: &m,
            camera: &cam,
            dims: None,
            measure: &MeasureConfig::default(),
            filter: &FilterConfig::default(),
            timebase: &tb,
        };
        assert!(matches!(track(&[], None, &setup), Err(Error::Pipeline(PipelineError::NoDetections))));
        let d = DetectionRow::new(3, &[crate::Vec2::zeros(); 4]);
        let err = track(&[d], None, &setup).unwrap_err();
        assert!(err.to_string().starts_with("frame 3:"), "{err}");
    }

    #[test]
    fn default_scenario_end_to_end() {
        let run = run_simulated(&Scenario::default(), None).unwrap();
        assert_eq!(run.states.len() as i64, Scenario::default().frame_count());
        let pos = run.report.get(Variable::Position).mean_abs.unwrap();
        assert!(pos < 0.3, "mean position error {pos}");
    }
}
