use uavstate::bench::Variable;
use uavstate::filter::FilterConfig;
use uavstate::georef::{compensate_gcps, CompensationConfig, FrameMapping};
use uavstate::io;
use uavstate::measure::{CameraGeometry, MeasureConfig};
use uavstate::pipeline::{run_simulated, track, TrackSetup};
use uavstate::sim::{generate, relief_altitude_sweep, write_fixtures, Maneuver, Scenario};
use uavstate::sync::fit_timebase_lag_corrected;

#[test]
fn uncorrected_relief_error_falls_as_inverse_altitude() {
    let sweep = relief_altitude_sweep(&Scenario::default(), &[25.0, 50.0, 75.0, 100.0, 150.0]).unwrap();
    assert!(sweep.mean_center_error_m.windows(2).all(|w| w[1] < w[0]), "{:?}", sweep.mean_center_error_m);
    assert!((sweep.log_log_slope + 1.0).abs() < 0.1, "slope {}", sweep.log_log_slope);
}

#[test]
fn pipeline_from_written_fixtures_matches_in_memory_run() {
    let scn = Scenario {
        maneuver: Maneuver::LaneChange { speed: 8.0, offset_m: 3.5, start_s: 0.5, duration_s: 2.0, heading_deg: 10.0 },
        seed: 4,
        ..Scenario::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let out = generate(&scn).unwrap();
    write_fixtures(&out, dir.path()).unwrap();

    let gcps = io::read_gcps(&dir.path().join("gcps.csv")).unwrap();
    let dets = io::read_detections(&dir.path().join("detections.csv")).unwrap();
    let leds = io::read_led_events(&dir.path().join("led_events.csv")).unwrap();
    let truth: FrameMapping = io::read_json(&dir.path().join("true_mapping.json")).unwrap();
    assert_eq!(dets.len(), out.detections.len());
    assert!((truth.alpha - scn.alpha()).abs() < 1e-12);

    let [rx, ry] = scn.camera.resolution;
    let mapping = compensate_gcps(&gcps, &CompensationConfig::for_resolution(rx, ry)).unwrap();
    let tb = fit_timebase_lag_corrected(&leds, scn.fps).unwrap();
    let memory = run_simulated(&scn, None).unwrap();
    let cam = CameraGeometry { alpha: mapping.alpha, ..scn.camera_geometry() };
    let filter = FilterConfig::for_resolution(mapping.alpha, scn.noise.gcp_zeta_px.max(0.5));
    let dims = scn.dims();
    let setup = TrackSetup {
        mapping: &mapping,
        camera: &cam,
        dims: Some(&dims),
        measure: &MeasureConfig::default(),
        filter: &filter,
        timebase: &tb,
    };
    let (_, states) = track(&dets, Some(&memory.stab), &setup).unwrap();
    assert_eq!(states.len(), memory.states.len());
    // CSV stores fixed decimals, so agreement is to the written precision
    for (a, b) in states.iter().zip(&memory.states) {
        assert!((a.state.x() - b.state.x()).hypot(a.state.y() - b.state.y()) < 1e-3);
    }
    assert!(memory.report.get(Variable::Position).mean_abs.unwrap() < 0.3);
}
