//! Command implementations. Every command writes its outputs atomically
//! into the target directory, then a `manifest.txt` in `sha256sum` format
//! covering them, so reruns can be compared byte for byte.

use anyhow::Context;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::{BufReader, Write as _};
use std::path::{Path, PathBuf};

use evcast::baselines::{run_linear, run_vanilla_kalman};
use evcast::eval::{
    common_emission_times, evaluate_sequence, filter_emissions_to, ground_truth_on_grid,
    AggregateRow, SampledGroundTruth, Stats,
};
use evcast::events::{track_ids, track_observations, EventStream, SensorGeometry};
use evcast::io;
use evcast::kalman::{run_forecaster, ForecastEmission, TrajectoryPoint};
use evcast::rpm::{estimate_rpm_stream, RpmEstimate};
use evcast::scenario::parse_scenario;
use evcast::svg::{render_boxplot, render_overlay, BoxplotSeries};
use evcast::synth::simulate_scene;

use crate::config::{Method, RunConfig};

/// User errors (bad paths, malformed input, invalid configuration) exit
/// with status 2; everything else is an internal failure and exits 1.
pub enum CliError {
    User(String),
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Internal(e)
    }
}

fn user(msg: impl Into<String>) -> CliError {
    CliError::User(msg.into())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

type CmdResult = Result<(), CliError>;

/// Collects output files and finishes with a manifest over all of them.
/// Files land via a temp file plus rename in the same directory, so a
/// crashed run never leaves a half-written output behind.
struct OutDir {
    dir: PathBuf,
    entries: Vec<(String, String)>,
}

impl OutDir {
    fn create(dir: &Path) -> Result<OutDir, CliError> {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(OutDir { dir: dir.to_path_buf(), entries: Vec::new() })
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CmdResult {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)
            .with_context(|| format!("creating temp file in {}", self.dir.display()))?;
        tmp.write_all(bytes).context("writing output")?;
        tmp.flush().context("flushing output")?;
        let path = self.dir.join(name);
        tmp.persist(&path).with_context(|| format!("renaming into {}", path.display()))?;
        self.entries.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> CmdResult {
        let mut buf = Vec::new();
        f(&mut buf).context("serializing output")?;
        self.write_bytes(name, &buf)
    }

    fn finish(mut self) -> CmdResult {
        self.entries.sort();
        let mut manifest = String::new();
        for (name, digest) in &self.entries {
            manifest.push_str(digest);
            manifest.push_str("  ");
            manifest.push_str(name);
            manifest.push('\n');
        }
        let bytes = manifest.into_bytes();
        self.write_bytes("manifest.txt", &bytes)?;
        Ok(())
    }
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| user(format!("reading {}: {e}", path.display())))
}

pub fn load_config(
    config_path: Option<&Path>,
    sets: &[String],
) -> Result<RunConfig, CliError> {
    let text = match config_path {
        Some(p) => Some(read_to_string(p)?),
        None => None,
    };
    RunConfig::resolve(text.as_deref(), sets).map_err(|e| user(e.to_string()))
}

pub fn parse_geometry(raw: &str) -> Result<SensorGeometry, CliError> {
    let (w, h) = raw
        .split_once('x')
        .ok_or_else(|| user(format!("geometry '{raw}': expected WIDTHxHEIGHT")))?;
    let parse = |s: &str, what: &str| {
        s.parse::<u16>().map_err(|e| user(format!("geometry {what} '{s}': {e}")))
    };
    Ok(SensorGeometry::new(parse(w, "width")?, parse(h, "height")?))
}

fn load_events(path: &Path, geometry: SensorGeometry) -> Result<EventStream, CliError> {
    let is_binary = path.extension().is_some_and(|e| e == "bin");
    let file =
        fs::File::open(path).map_err(|e| user(format!("opening {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let result = if is_binary {
        io::parse_event_binary(reader)
    } else {
        io::parse_event_csv(reader, geometry)
    };
    result.map_err(|e| user(format!("{}: {e}", path.display())))
}

fn load_track(
    path: &Path,
    geometry: SensorGeometry,
    track: Option<u32>,
) -> Result<Vec<evcast::events::BoundingBoxObservation>, CliError> {
    let file =
        fs::File::open(path).map_err(|e| user(format!("opening {}: {e}", path.display())))?;
    let annotations = io::parse_annotations(BufReader::new(file), geometry)
        .map_err(|e| user(format!("{}: {e}", path.display())))?;
    let ids = track_ids(&annotations);
    let id = match (track, ids.as_slice()) {
        (Some(id), _) => id,
        (None, [only]) => *only,
        (None, _) => {
            return Err(user(format!(
                "{} holds tracks {:?}; pick one with --track",
                path.display(),
                ids
            )))
        }
    };
    track_observations(&annotations, id).map_err(|e| user(format!("track {id}: {e}")))
}

pub fn simulate(
    scenario_path: &Path,
    out: &Path,
    seed_override: Option<u64>,
) -> CmdResult {
    let text = read_to_string(scenario_path)?;
    let mut spec = parse_scenario(&text)
        .map_err(|e| user(format!("{}: {e}", scenario_path.display())))?;
    if let Some(seed) = seed_override {
        spec.seed = seed;
    }
    let scene = simulate_scene(&spec).map_err(|e| user(e.to_string()))?;

    let ground_truth: Vec<TrajectoryPoint> = scene
        .track
        .annotations
        .iter()
        .map(|b| {
            let (cx, cy) = scene.path.position(b.t_us as f64 / 1e6);
            TrajectoryPoint { t_us: b.t_us, cx, cy }
        })
        .collect();

    let mut dir = OutDir::create(out)?;
    dir.write_with("events.csv", |w| io::write_event_csv(w, &scene.stream))?;
    dir.write_with("events.bin", |w| io::write_event_binary(w, &scene.stream))?;
    dir.write_with("annotations.csv", |w| io::write_annotations(w, &scene.track.annotations))?;
    dir.write_with("ground_truth.csv", |w| io::write_ground_truth(w, &ground_truth))?;
    dir.finish()?;
    println!(
        "simulated {} events, {} annotation frames -> {}",
        scene.stream.events().len(),
        scene.track.annotations.len(),
        out.display()
    );
    Ok(())
}

pub fn estimate_rpm(
    events_path: &Path,
    annotations_path: &Path,
    track: Option<u32>,
    geometry: SensorGeometry,
    cfg: &RunConfig,
    out: &Path,
) -> CmdResult {
    let stream = load_events(events_path, geometry)?;
    let boxes = load_track(annotations_path, stream.geometry(), track)?;
    let series =
        estimate_rpm_stream(&stream, &boxes, &cfg.rpm).map_err(|e| user(e.to_string()))?;
    let valid = series.iter().filter(|e| e.valid).count();

    let mut dir = OutDir::create(out)?;
    dir.write_with("rpm.csv", |w| io::write_rpm_series(w, &series))?;
    dir.write_bytes("config_used.txt", cfg.canonical().as_bytes())?;
    dir.finish()?;
    println!(
        "estimated {} frames ({} valid) -> {} [config {}]",
        series.len(),
        valid,
        out.display(),
        &cfg.hash()[..12]
    );
    Ok(())
}

fn load_rpm_series(path: &Path) -> Result<Vec<RpmEstimate>, CliError> {
    let file =
        fs::File::open(path).map_err(|e| user(format!("opening {}: {e}", path.display())))?;
    io::parse_rpm_series(BufReader::new(file))
        .map_err(|e| user(format!("{}: {e}", path.display())))
}

pub struct ForecastInputs<'a> {
    pub annotations: &'a Path,
    pub track: Option<u32>,
    pub events: Option<&'a Path>,
    pub rpm: Option<&'a Path>,
    pub geometry: SensorGeometry,
}

pub fn forecast(inputs: &ForecastInputs, cfg: &RunConfig, out: &Path) -> CmdResult {
    let boxes = load_track(inputs.annotations, inputs.geometry, inputs.track)?;

    let mut computed_rpm: Option<Vec<RpmEstimate>> = None;
    let rpm_series: Vec<RpmEstimate> = match cfg.method {
        Method::Proposed => match (inputs.rpm, inputs.events) {
            (Some(path), None) => load_rpm_series(path)?,
            (None, Some(path)) => {
                let stream = load_events(path, inputs.geometry)?;
                let series = estimate_rpm_stream(&stream, &boxes, &cfg.rpm)
                    .map_err(|e| user(e.to_string()))?;
                computed_rpm = Some(series.clone());
                series
            }
            (Some(_), Some(_)) => {
                return Err(user("give --rpm or --events, not both"));
            }
            (None, None) => {
                return Err(user(
                    "the proposed method needs rotation data: --events to estimate it here, or --rpm for a precomputed series",
                ));
            }
        },
        Method::VanillaKf | Method::Linear => {
            if inputs.rpm.is_some() || inputs.events.is_some() {
                eprintln!(
                    "note: method {} ignores rotation inputs (--events/--rpm)",
                    cfg.method.name()
                );
            }
            Vec::new()
        }
    };

    let emissions = match cfg.method {
        Method::Proposed => run_forecaster(&boxes, &rpm_series, &cfg.forecaster)
            .map_err(|e| user(e.to_string()))?,
        Method::VanillaKf => {
            run_vanilla_kalman(&boxes, &cfg.forecaster).map_err(|e| user(e.to_string()))?
        }
        Method::Linear => run_linear(&boxes, &cfg.forecaster.horizons_s, cfg.forecaster.step_s)
            .map_err(|e| user(e.to_string()))?,
    };
    if emissions.is_empty() {
        return Err(user(
            "track too short to emit any forecast at the configured horizons",
        ));
    }

    let mut dir = OutDir::create(out)?;
    let name = format!("forecasts_{}.csv", cfg.method.name());
    dir.write_with(&name, |w| io::write_forecasts(w, &emissions))?;
    if let Some(series) = &computed_rpm {
        dir.write_with("rpm.csv", |w| io::write_rpm_series(w, series))?;
    }
    dir.write_bytes("config_used.txt", cfg.canonical().as_bytes())?;
    dir.finish()?;
    println!(
        "emitted {} forecasts ({}) -> {} [config {}]",
        emissions.len(),
        cfg.method.name(),
        out.display(),
        &cfg.hash()[..12]
    );
    Ok(())
}

pub struct EvaluateInputs<'a> {
    /// `(label, forecast csv path)` in command-line order.
    pub forecasts: Vec<(String, PathBuf)>,
    pub ground_truth: Option<&'a Path>,
    pub annotations: Option<&'a Path>,
    pub track: Option<u32>,
    pub geometry: SensorGeometry,
    pub tolerance_us: u64,
    pub svg: bool,
}

fn format_horizon(h: f64) -> String {
    let s = format!("{h}");
    s.replace('.', "p")
}

pub fn evaluate(inputs: &EvaluateInputs, cfg: &RunConfig, out: &Path) -> CmdResult {
    if inputs.forecasts.is_empty() {
        return Err(user("no forecasts given; pass --forecast label=path at least once"));
    }
    let lookup: SampledGroundTruth = match (inputs.ground_truth, inputs.annotations) {
        (Some(path), None) => {
            let file = fs::File::open(path)
                .map_err(|e| user(format!("opening {}: {e}", path.display())))?;
            let points = io::parse_ground_truth(BufReader::new(file))
                .map_err(|e| user(format!("{}: {e}", path.display())))?;
            SampledGroundTruth::from_points(points, inputs.tolerance_us)
                .map_err(|e| user(e.to_string()))?
        }
        (None, Some(path)) => {
            let boxes = load_track(path, inputs.geometry, inputs.track)?;
            SampledGroundTruth::from_boxes(&boxes, inputs.tolerance_us)
                .map_err(|e| user(e.to_string()))?
        }
        (Some(_), Some(_)) => {
            return Err(user("give --ground-truth or --annotations, not both"))
        }
        (None, None) => {
            return Err(user("ground truth required: --ground-truth file or --annotations file"))
        }
    };

    let mut labeled: Vec<(String, Vec<ForecastEmission>)> = Vec::new();
    for (label, path) in &inputs.forecasts {
        let file = fs::File::open(path)
            .map_err(|e| user(format!("opening {}: {e}", path.display())))?;
        let emissions = io::parse_forecasts(BufReader::new(file))
            .map_err(|e| user(format!("{}: {e}", path.display())))?;
        if emissions.is_empty() {
            return Err(user(format!("{}: no forecasts inside", path.display())));
        }
        labeled.push((label.clone(), emissions));
    }

    // Methods differ in when they can start emitting; score all of them on
    // the emission times they share so the comparison is like for like.
    let all: Vec<&[ForecastEmission]> = labeled.iter().map(|(_, e)| e.as_slice()).collect();
    let common = common_emission_times(&all);
    if common.is_empty() {
        return Err(user("the forecast files share no emission timestamps"));
    }
    let mut dir = OutDir::create(out)?;
    let mut comparison = String::from("method,metric,horizon_s,mean_px\n");
    let mut per_label: Vec<(String, evcast::eval::SequenceResult)> = Vec::new();
    for (label, emissions) in &labeled {
        let shared = filter_emissions_to(emissions, &common);
        let result = evaluate_sequence(label, &shared, &lookup)
            .map_err(|e| user(format!("scoring {label}: {e}")))?;
        dir.write_with(&format!("results_{label}.csv"), |w| {
            io::write_results_csv(w, &result.rows())
        })?;
        let mut aggregate_rows = Vec::new();
        for h in &result.horizons {
            for (metric, values) in [("ade", &h.ade_values), ("fde", &h.fde_values)] {
                let stats = Stats::describe(values).map_err(|e| user(e.to_string()))?;
                aggregate_rows.push(AggregateRow {
                    metric: metric.to_string(),
                    horizon_s: h.horizon_s,
                    stats,
                });
                comparison.push_str(&format!(
                    "{label},{metric},{},{}\n",
                    h.horizon_s,
                    aggregate_rows.last().unwrap().stats.mean
                ));
            }
        }
        dir.write_with(&format!("aggregate_{label}.csv"), |w| {
            io::write_aggregate_csv(w, &aggregate_rows)
        })?;
        per_label.push((label.clone(), result));
    }
    dir.write_bytes("comparison.csv", comparison.as_bytes())?;

    if inputs.svg {
        render_report_svgs(&mut dir, &labeled, &per_label, &common, &lookup)?;
    }
    dir.write_bytes("config_used.txt", cfg.canonical().as_bytes())?;
    dir.finish()?;
    println!(
        "scored {} methods on {} shared emissions -> {}",
        labeled.len(),
        common.len(),
        out.display()
    );
    Ok(())
}

type ScorePicker = fn(&evcast::eval::HorizonScores) -> &[f64];

fn render_report_svgs(
    dir: &mut OutDir,
    labeled: &[(String, Vec<ForecastEmission>)],
    per_label: &[(String, evcast::eval::SequenceResult)],
    common: &[u64],
    lookup: &SampledGroundTruth,
) -> CmdResult {
    // One boxplot per metric and horizon, methods side by side.
    let horizons: Vec<f64> =
        per_label[0].1.horizons.iter().map(|h| h.horizon_s).collect();
    let metrics: [(&str, ScorePicker); 2] =
        [("ade", |h| &h.ade_values), ("fde", |h| &h.fde_values)];
    for (metric, pick) in metrics {
        for &horizon in &horizons {
            let mut series = Vec::new();
            for (label, result) in per_label {
                let Some(scores) =
                    result.horizons.iter().find(|h| h.horizon_s == horizon)
                else {
                    continue;
                };
                let stats = Stats::describe(pick(scores)).map_err(|e| user(e.to_string()))?;
                series.push(BoxplotSeries { label: label.clone(), stats });
            }
            let title = format!("{} at {horizon} s", metric.to_uppercase());
            let doc = render_boxplot(&title, "pixels", &series);
            dir.write_bytes(
                &format!("boxplot_{metric}_{}s.svg", format_horizon(horizon)),
                doc.as_bytes(),
            )?;
        }
    }

    // Overlay: the last shared emission at the longest horizon.
    let max_h = horizons.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let last_t = *common.last().unwrap();
    let mut runs = Vec::new();
    let mut gt = None;
    for (label, emissions) in labeled {
        if let Some(e) = emissions
            .iter()
            .find(|e| e.t_emit_us == last_t && e.horizon_s == max_h)
        {
            if gt.is_none() {
                gt = Some(
                    ground_truth_on_grid(&e.trajectory, lookup)
                        .map_err(|err| user(err.to_string()))?,
                );
            }
            runs.push((label.clone(), e.trajectory.clone()));
        }
    }
    if let Some(gt) = gt {
        let title = format!("forecasts at t = {} s, horizon {max_h} s", last_t as f64 / 1e6);
        let doc = render_overlay(&title, &gt, &runs);
        dir.write_bytes("overlay.svg", doc.as_bytes())?;
    }
    Ok(())
}

pub fn convert_fred(recording: &Path, _out: &Path) -> CmdResult {
    io::convert_fred_recording(recording).map_err(|e| user(e.to_string()))
}
