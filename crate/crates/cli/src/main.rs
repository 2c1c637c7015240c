//! `uavstate`: command-line front end of the vehicle state estimation pipeline.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use uavstate::bench::{compare, emit_plotdata, resample_reference, EstimateSample, Variable};
use uavstate::georef::{
    compensate_gcps, mapping_point_error_bound, CompensationConfig, FrameMapping, MappingErrorBudget,
};
use uavstate::io;
use uavstate::measure::CameraGeometry;
use uavstate::pipeline::{stabilize_frames, track, TrackSetup};
use uavstate::sim::{generate, write_fixtures, Scenario};
use uavstate::sync::{fit_timebase, fit_timebase_lag_corrected};
use uavstate::Vec2;

use config::{Loaded, PipelineConfig};

/// GCP pairs closer than this fraction of the image diagonal trigger a warning.
const NEAR_GCP_FRACTION: f64 = 0.25;

#[derive(Parser)]
#[command(name = "uavstate", version, about = "Vehicle state estimation from hovering-UAV nadir video")]
struct Cli {
    /// Pipeline configuration (JSON). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the seed of the stabilization or simulation RNG.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the pixel-to-ground mapping from GCPs and report its error budget.
    Calibrate {
        #[arg(long)]
        gcps: Option<PathBuf>,
    },
    /// Estimate per-frame stabilization transforms from point matches.
    Stabilize {
        #[arg(long)]
        matches: Option<PathBuf>,
    },
    /// Turn detections into filtered, UTC-stamped vehicle states.
    Track {
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// Detections are taken as already stabilized when omitted.
        #[arg(long)]
        stab: Option<PathBuf>,
        #[arg(long)]
        led_events: Option<PathBuf>,
    },
    /// Print every closed-form error bound for the configured geometry.
    Errors {
        /// Take α from a fitted mapping instead of the config.
        #[arg(long)]
        mapping: Option<PathBuf>,
    },
    /// Compare estimated states against a reference trace.
    Bench {
        #[arg(long)]
        states: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Generate a synthetic scene and its input files.
    Simulate {
        /// Scenario JSON; the default scenario when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let loaded = Loaded::load(cli.config.as_deref())?;
    let out = cli.out.as_deref();
    match &cli.cmd {
        Command::Calibrate { gcps } => calibrate(&loaded, gcps.as_deref(), require_out(out)?),
        Command::Stabilize { matches } => stabilize(&loaded, matches.as_deref(), require_out(out)?, cli.seed),
        Command::Track { detections, mapping, stab, led_events } => {
            let inputs = TrackInputs {
                detections: loaded.input(detections.as_deref(), &loaded.cfg.paths.detections, "detections")?,
                mapping: loaded.input(mapping.as_deref(), &loaded.cfg.paths.mapping, "mapping")?,
                stab: loaded.optional(stab.as_deref(), &loaded.cfg.paths.stab),
                led_events: loaded.input(led_events.as_deref(), &loaded.cfg.paths.led_events, "led_events")?,
            };
            track_cmd(&loaded.cfg, &inputs, require_out(out)?)
        }
        Command::Errors { mapping } => errors(&loaded, mapping.as_deref(), out),
        Command::Bench { states, reference } => {
            bench(&loaded, states.as_deref(), reference.as_deref(), require_out(out)?)
        }
        Command::Simulate { scenario } => simulate(scenario.as_deref(), require_out(out)?, cli.seed),
    }
}

fn require_out(out: Option<&Path>) -> Result<&Path> {
    let out = out.context("--out <dir> is required for this subcommand")?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

#[derive(Serialize)]
struct CalibrationBudget {
    gcp_pair_used: (String, String),
    gcp_separation_px: f64,
    separation_fraction_of_diagonal: f64,
    zeta_px: f64,
    alpha_m_per_px: f64,
    eta_alpha: f64,
    eta_theta_deg: f64,
    eta_offset_m: [f64; 2],
    /// Worst composite mapping error over the four image corners.
    eta_point_m_at_corner: f64,
}

fn calibrate(l: &Loaded, gcps: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = &l.cfg;
    let path = l.input(gcps, &cfg.paths.gcps, "gcps")?;
    let gcps = io::read_gcps(&path)?;
    let [rx, ry] = cfg.camera.resolution;
    for g in &gcps {
        g.validate(rx, ry).with_context(|| path.display().to_string())?;
    }
    let mapping = compensate_gcps(&gcps, &CompensationConfig::for_resolution(rx, ry))?;
    let budget = MappingErrorBudget::for_mapping(&gcps, &mapping, cfg.zeta_px)?;
    let pcf = |id: &str| gcps.iter().find(|g| g.id == id).map(|g| g.pcf).expect("pair taken from the GCP list");
    let (a, b) = (pcf(&mapping.source_gcp_ids.0), pcf(&mapping.source_gcp_ids.1));
    let separation = (b - a).norm();
    let diagonal = rx.hypot(ry);
    if separation < NEAR_GCP_FRACTION * diagonal {
        eprintln!(
            "warning: farthest GCP pair {}/{} is {:.0} px apart, {:.0}% of the image diagonal; \
             place GCPs as far apart as possible",
            mapping.source_gcp_ids.0,
            mapping.source_gcp_ids.1,
            separation,
            100.0 * separation / diagonal
        );
    }
    let corners = [Vec2::zeros(), Vec2::new(rx, 0.0), Vec2::new(0.0, ry), Vec2::new(rx, ry)];
    let mut eta_point = 0.0f64;
    for c in corners {
        eta_point = eta_point.max(mapping_point_error_bound(c, a, b - a, cfg.zeta_px, mapping.alpha)?);
    }
    let report = CalibrationBudget {
        gcp_pair_used: budget.gcp_pair_used.clone(),
        gcp_separation_px: separation,
        separation_fraction_of_diagonal: separation / diagonal,
        zeta_px: cfg.zeta_px,
        alpha_m_per_px: mapping.alpha,
        eta_alpha: budget.eta_alpha,
        eta_theta_deg: budget.eta_theta.to_degrees(),
        eta_offset_m: [budget.eta_offset.x, budget.eta_offset.y],
        eta_point_m_at_corner: eta_point,
    };
    io::write_json(&out.join("mapping.json"), &mapping)?;
    io::write_json(&out.join("mapping_budget.json"), &report)?;
    println!(
        "alpha {:.6} m/px, theta offset {:.4} deg, eta_point at corner {:.4} m",
        mapping.alpha,
        mapping.theta_offset.to_degrees(),
        eta_point
    );
    Ok(())
}

fn stabilize(l: &Loaded, matches: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let path = l.input(matches, &l.cfg.paths.matches, "matches")?;
    let frames = io::read_matches(&path)?;
    let mut robust = l.cfg.stabilization.clone();
    if let Some(s) = seed {
        robust.seed = s;
    }
    let (rows, failures) = stabilize_frames(&frames, &robust);
    for (frame, e) in &failures {
        eprintln!("warning: frame {frame}: {e}; keeping the previous transform");
    }
    io::write_stab(&out.join("stab.csv"), &rows)?;
    println!(
        "{} frames stabilized, {} fell back to the previous transform",
        rows.len() - failures.len(),
        failures.len()
    );
    Ok(())
}

struct TrackInputs {
    detections: PathBuf,
    mapping: PathBuf,
    stab: Option<PathBuf>,
    led_events: PathBuf,
}

fn track_cmd(cfg: &PipelineConfig, inputs: &TrackInputs, out: &Path) -> Result<()> {
    let detections = io::read_detections(&inputs.detections)?;
    let mapping: FrameMapping = io::read_json(&inputs.mapping)?;
    mapping.validate().with_context(|| inputs.mapping.display().to_string())?;
    let stab = inputs.stab.as_deref().map(io::read_stab).transpose()?;
    let leds = io::read_led_events(&inputs.led_events)?;
    let timebase = if cfg.sync.lag_correction {
        fit_timebase_lag_corrected(&leds, cfg.sync.fps)
    } else {
        fit_timebase(&leds, cfg.sync.fps)
    }
    .with_context(|| inputs.led_events.display().to_string())?;
    let camera = CameraGeometry::new(cfg.camera.resolution, cfg.camera.hover_altitude_m, mapping.alpha)?;
    let filter = cfg.filter_for(mapping.alpha);
    let setup = TrackSetup {
        mapping: &mapping,
        camera: &camera,
        dims: cfg.vehicle.as_ref(),
        measure: &cfg.measure,
        filter: &filter,
        timebase: &timebase,
    };
    let (measurements, states) = track(&detections, stab.as_deref(), &setup)?;
    if let Some(bad) = states.iter().find(|tp| !tp.state.covariance_is_valid(1e-9)) {
        bail!("frame {}: state covariance is not symmetric positive semi-definite", bad.state.frame);
    }
    io::write_measurements(&out.join("measurements.csv"), &measurements)?;
    io::write_states(&out.join("state.csv"), &states)?;
    io::write_json(&out.join("timebase.json"), &timebase)?;
    let predicted = states.iter().filter(|tp| !tp.measured).count();
    println!("{} states written ({} predicted across gaps)", states.len(), predicted);
    Ok(())
}

fn errors(l: &Loaded, mapping: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let alpha = match l.optional(mapping, &l.cfg.paths.mapping) {
        Some(p) => io::read_json::<FrameMapping>(&p)?.alpha,
        None => l.cfg.camera.alpha_m_per_px,
    };
    let report = uavstate::budget::evaluate(&l.cfg.budget_input(alpha))?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    print!("{text}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        io::write_json(&dir.join("errors.json"), &report)?;
    }
    Ok(())
}

fn bench(l: &Loaded, states: Option<&Path>, reference: Option<&Path>, out: &Path) -> Result<()> {
    let states_path = l.input(states, &l.cfg.paths.states, "states")?;
    let reference_path = l.input(reference, &l.cfg.paths.reference, "reference")?;
    let rows = io::read_states(&states_path)?;
    let est: Vec<EstimateSample> = rows.iter().map(EstimateSample::from).collect();
    let trace = io::read_reference(&reference_path)?;
    let times: Vec<f64> = est.iter().map(|e| e.t).collect();
    let reference = resample_reference(&trace, &times).with_context(|| reference_path.display().to_string())?;
    let report = compare(&est, &reference)?;
    io::write_json(&out.join("report.json"), &report)?;
    emit_plotdata(&report, out).with_context(|| format!("writing plot data to {}", out.display()))?;
    for v in Variable::ALL {
        let r = report.get(v);
        match (r.mean_abs, r.rmse) {
            (Some(mean), Some(rmse)) => {
                println!("{:<10} mean {mean:.4} {u}, rmse {rmse:.4} {u} ({} samples)", v.name(), r.count, u = v.unit())
            }
            _ => println!("{:<10} no samples", v.name()),
        }
    }
    Ok(())
}

fn simulate(scenario: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut scn = match scenario {
        Some(p) => io::read_json::<Scenario>(p)?,
        None => Scenario::default(),
    };
    if let Some(s) = seed {
        scn.seed = s;
    }
    let sim = generate(&scn)?;
    write_fixtures(&sim, out)?;
    io::write_json(&out.join("scenario.json"), &scn)?;
    let mut cfg = PipelineConfig::default();
    cfg.camera.resolution = scn.camera.resolution;
    cfg.camera.hover_altitude_m = scn.camera.hover_altitude_m;
    cfg.camera.alpha_m_per_px = scn.alpha();
    cfg.zeta_px = scn.noise.gcp_zeta_px;
    cfg.vehicle = Some(scn.dims());
    cfg.stabilization.sigma = scn.noise.match_std_px.max(0.1);
    cfg.stabilization.image_size = scn.camera.resolution;
    cfg.stabilization.seed = scn.seed;
    cfg.sync.fps = scn.fps;
    cfg.paths.gcps = Some("gcps.csv".into());
    cfg.paths.matches = Some("matches.csv".into());
    cfg.paths.detections = Some("detections.csv".into());
    cfg.paths.mapping = Some("mapping.json".into());
    cfg.paths.stab = Some("stab.csv".into());
    cfg.paths.led_events = Some("led_events.csv".into());
    cfg.paths.states = Some("state.csv".into());
    cfg.paths.reference = Some("reference.csv".into());
    io::write_json(&out.join("config.json"), &cfg)?;
    println!("{} frames, {} detections written to {}", scn.frame_count(), sim.detections.len(), out.display());
    Ok(())
}
