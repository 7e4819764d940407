//! Command-line front end. Every subcommand reads CSV inputs, writes its
//! outputs into `--out` and records a `manifest.json` next to them.
//!
//! Exit codes: 0 success, 1 invalid input or arguments, 2 I/O failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{parse_pairs, PipelineConfig};
use crate::eval::{
    evaluate, mean_stride_curve, render_report_csv, write_mean_curves_csv, Aggregation,
    EvalReport, SprintAngles, MEAN_CURVES_HEADER,
};
use crate::fusion::fuse_recordings;
use crate::kinematics::{
    angle_series, detect_foot_strikes, normalize_stride, parse_angles_csv, segment_strides,
    write_angles_csv, write_strides_csv, AngleSeries, KinematicsError, NormalizedStride,
    ANGLES_HEADER, SLOTS,
};
use crate::postproc::{postprocess_recording, smooth_track, CorrectionLog};
use crate::sim::{analytic_foot_strikes, generate_gait, inject_errors};
use crate::trajectory::{
    align_frames, parse_events_csv, parse_trajectory_csv, write_events_csv,
    write_trajectory_csv, JointId, Side, SprintRecording, StrideEvent, TRAJECTORY_HEADER,
};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Invalid { .. } => 1,
            CliError::Io { .. } => 2,
        }
    }
}

fn invalid(path: &Path, e: impl Display) -> CliError {
    CliError::Invalid {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Parser)]
#[command(name = "sprintkin", version, about = "Sprint kinematics from 2D joint trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Configuration file (`key = value` lines)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set svr.gamma=200`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct OutDir {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a trajectory CSV (and optionally an events CSV)
    IngestCheck {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        events: Option<PathBuf>,
        /// Write a manifest here as well
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// SVR-smooth every joint track
    Smooth {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        out: OutDir,
        #[command(flatten)]
        common: Common,
    },
    /// Detect and correct swaps, misallocations and lost samples
    Postprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        out: OutDir,
        #[command(flatten)]
        common: Common,
    },
    /// Compute trunk, hip and knee angle series
    Angles {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        out: OutDir,
        #[command(flatten)]
        common: Common,
    },
    /// Segment strides and time-normalize them (angles or trajectory input)
    Strides {
        #[arg(long = "in")]
        input: PathBuf,
        /// Foot strikes; detected from the ankles of a trajectory input if absent
        #[arg(long)]
        events: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
        #[command(flatten)]
        common: Common,
    },
    /// Average several frame-aligned trackers
    Fuse {
        /// Tracker CSV; the file stem is its label. Repeat for each tracker.
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        out: OutDir,
        #[command(flatten)]
        common: Common,
    },
    /// RMSE of predicted angles against ground truth
    Evaluate {
        /// `label=path` (or a path, labelled by its stem); repeat a label for each sprint
        #[arg(long, required = true)]
        pred: Vec<String>,
        /// Ground truth of each sprint, in sprint order
        #[arg(long, required = true)]
        truth: Vec<PathBuf>,
        /// Average per-sprint RMSEs instead of pooling frames
        #[arg(long)]
        per_sprint: bool,
        #[command(flatten)]
        out: OutDir,
        #[command(flatten)]
        common: Common,
    },
    /// Full pipeline: comparison tables and stride curves
    Report {
        /// Raw tracker trajectory as `label=path`; repeat a label for each sprint
        #[arg(long, required = true)]
        pred: Vec<String>,
        #[arg(long, required = true)]
        truth: Vec<PathBuf>,
        /// Foot strikes of each sprint, in sprint order
        #[arg(long)]
        events: Vec<PathBuf>,
        #[arg(long)]
        per_sprint: bool,
        /// Also write each correction log
        #[arg(long)]
        emit_corrections: bool,
        #[command(flatten)]
        out: OutDir,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic sprint with injected tracking errors
    Simulate {
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutDir,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::IngestCheck { .. } => "ingest-check",
            Command::Smooth { .. } => "smooth",
            Command::Postprocess { .. } => "postprocess",
            Command::Angles { .. } => "angles",
            Command::Strides { .. } => "strides",
            Command::Fuse { .. } => "fuse",
            Command::Evaluate { .. } => "evaluate",
            Command::Report { .. } => "report",
            Command::Simulate { .. } => "simulate",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::IngestCheck { common, .. }
            | Command::Smooth { common, .. }
            | Command::Postprocess { common, .. }
            | Command::Angles { common, .. }
            | Command::Strides { common, .. }
            | Command::Fuse { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Report { common, .. }
            | Command::Simulate { common, .. } => common,
        }
    }
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    config: BTreeMap<&'static str, String>,
    inputs: &'a [FileDigest],
    outputs: Vec<FileDigest>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// State of one invocation: inputs read so far and outputs to write.
struct Run {
    subcommand: &'static str,
    config: PipelineConfig,
    inputs: Vec<FileDigest>,
    outputs: BTreeMap<String, Vec<u8>>,
}

impl Run {
    fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    fn trajectory(&mut self, path: &Path) -> Result<SprintRecording, CliError> {
        let bytes = self.read(path)?;
        let mut rec = parse_trajectory_csv(&bytes).map_err(|e| invalid(path, e))?;
        rec.fps = self.config.input_fps;
        rec.tracker_id = stem(path);
        Ok(rec)
    }

    fn events(&mut self, path: &Path) -> Result<Vec<StrideEvent>, CliError> {
        let bytes = self.read(path)?;
        parse_events_csv(&bytes).map_err(|e| invalid(path, e))
    }

    /// Trajectory or angles file, told apart by the header.
    fn angles_or_trajectory(&mut self, path: &Path) -> Result<Input, CliError> {
        let bytes = self.read(path)?;
        let header = bytes.split(|&b| b == b'\n').next().unwrap_or(&[]);
        let header = std::str::from_utf8(header).unwrap_or("").trim_end_matches('\r');
        if header == TRAJECTORY_HEADER {
            let mut rec = parse_trajectory_csv(&bytes).map_err(|e| invalid(path, e))?;
            rec.fps = self.config.input_fps;
            rec.tracker_id = stem(path);
            Ok(Input::Trajectory(rec))
        } else if header == ANGLES_HEADER {
            Ok(Input::Angles(
                parse_angles_csv(&bytes).map_err(|e| invalid(path, e))?,
            ))
        } else {
            Err(invalid(
                path,
                format!(
                    "line 1: expected a trajectory header `{TRAJECTORY_HEADER}` or an angles header `{ANGLES_HEADER}`"
                ),
            ))
        }
    }

    fn angles(&mut self, path: &Path) -> Result<SprintAngles, CliError> {
        match self.angles_or_trajectory(path)? {
            Input::Angles(a) => Ok(a),
            Input::Trajectory(rec) => angle_series(&rec).map_err(|e| invalid(path, e)),
        }
    }

    fn emit(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.outputs.insert(name.into(), bytes);
    }

    fn finish(self, out: &Path) -> Result<(), CliError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| CliError::Io { path, source }
        };
        std::fs::create_dir_all(out).map_err(io(out))?;
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for (name, bytes) in &self.outputs {
            let path = out.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(io(parent))?;
            }
            std::fs::write(&path, bytes).map_err(io(&path))?;
            outputs.push(FileDigest {
                path: name.clone(),
                sha256: sha256_hex(bytes),
            });
        }
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            config: self.config.to_map(),
            inputs: &self.inputs,
            outputs,
        };
        let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        json.push(b'\n');
        let path = out.join(MANIFEST_NAME);
        std::fs::write(&path, json).map_err(io(&path))
    }
}

enum Input {
    Trajectory(SprintRecording),
    Angles(SprintAngles),
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn split_label(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((label, path)) if !label.is_empty() => (label.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(arg);
            (stem(&path), path)
        }
    }
}

/// Labels in first-appearance order, each with its sprint files.
fn group_labels(args: &[String]) -> Vec<(String, Vec<PathBuf>)> {
    let mut groups: Vec<(String, Vec<PathBuf>)> = Vec::new();
    for arg in args {
        let (label, path) = split_label(arg);
        match groups.iter_mut().find(|(l, _)| *l == label) {
            Some((_, paths)) => paths.push(path),
            None => groups.push((label, vec![path])),
        }
    }
    groups
}

fn load_config(common: &Common) -> Result<(PipelineConfig, Vec<PathBuf>), CliError> {
    let mut config = PipelineConfig::default();
    let mut read = Vec::new();
    if let Some(path) = &common.config {
        let bytes = std::fs::read(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let text = String::from_utf8(bytes).map_err(|_| invalid(path, "not UTF-8"))?;
        let pairs = parse_pairs(&text).map_err(|e| invalid(path, e))?;
        config.apply(&pairs).map_err(|e| invalid(path, e))?;
        read.push(path.clone());
    }
    let mut pairs = Vec::new();
    for s in &common.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set {s}: expected KEY=VALUE")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    config
        .apply(&pairs)
        .map_err(|e| CliError::Usage(format!("--set: {e}")))?;
    Ok((config, read))
}

/// Foot strikes of both ankles.
fn detect_events(rec: &SprintRecording) -> Result<Vec<StrideEvent>, KinematicsError> {
    let mut events = Vec::new();
    for side in [Side::Left, Side::Right] {
        let ankle = rec
            .track(JointId::Ankle, side)
            .ok_or(KinematicsError::MissingJoint {
                joint: JointId::Ankle,
                side,
            })?;
        events.extend(
            detect_foot_strikes(ankle, rec.fps)?
                .into_iter()
                .map(|frame| StrideEvent { side, frame }),
        );
    }
    events.sort();
    Ok(events)
}

/// Normalizes every stride of every matching series. Strides that are not
/// fully covered by a series are skipped and counted.
fn normalized_strides(
    series: &[AngleSeries],
    events: &[StrideEvent],
) -> (Vec<(usize, NormalizedStride)>, usize) {
    let mut out = Vec::new();
    let mut skipped = 0;
    for (id, seg) in segment_strides(events).iter().enumerate() {
        for s in series.iter().filter(|s| s.side == seg.side) {
            match normalize_stride(s, seg) {
                Ok(n) => out.push((id, n)),
                Err(_) => skipped += 1,
            }
        }
    }
    (out, skipped)
}

fn mean_curves(strides: &[(usize, NormalizedStride)]) -> Vec<crate::eval::MeanCurve> {
    SLOTS
        .iter()
        .filter_map(|&(kind, side)| {
            let group: Vec<NormalizedStride> = strides
                .iter()
                .filter(|(_, s)| s.kind == kind && s.side == side)
                .map(|(_, s)| s.clone())
                .collect();
            mean_stride_curve(&group).ok()
        })
        .collect()
}

fn warn_skipped(skipped: usize) {
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} stride series with missing angle samples");
    }
}

/// Prepends `prefix` to every data row and `columns` to the header.
fn prefixed(csv: &[u8], columns: &str, prefix: &str, with_header: bool) -> String {
    let text = String::from_utf8_lossy(csv);
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if with_header {
                out.push_str(&format!("{columns},{line}\n"));
            }
        } else {
            out.push_str(&format!("{prefix},{line}\n"));
        }
    }
    out
}

fn execute(command: Command) -> Result<(), CliError> {
    let (config, config_files) = load_config(command.common())?;
    let mut run = Run {
        subcommand: command.name(),
        config,
        inputs: Vec::new(),
        outputs: BTreeMap::new(),
    };
    for path in &config_files {
        run.read(path)?;
    }

    match command {
        Command::IngestCheck {
            input, events, out, ..
        } => {
            let rec = run.trajectory(&input)?;
            let samples: usize = rec.tracks.values().map(|t| t.samples.len()).sum();
            let present: usize = rec.tracks.values().map(|t| t.present_count()).sum();
            println!(
                "{}: ok, {} tracks, {samples} samples, {} missing",
                input.display(),
                rec.tracks.len(),
                samples - present
            );
            if let Some(events) = events {
                let n = run.events(&events)?.len();
                println!("{}: ok, {n} events", events.display());
            }
            if let Some(out) = out {
                run.finish(&out)?;
            }
            Ok(())
        }
        Command::Smooth { input, out, .. } => {
            let rec = run.trajectory(&input)?;
            let mut tracks = BTreeMap::new();
            for (&key, track) in &rec.tracks {
                let smoothed = smooth_track(track, &run.config.postproc.svr)
                    .map_err(|e| invalid(&input, e))?;
                tracks.insert(key, smoothed);
            }
            run.emit("smoothed.csv", write_trajectory_csv(&rec.with_tracks(tracks)));
            run.finish(&out.out)
        }
        Command::Postprocess { input, out, .. } => {
            let rec = run.trajectory(&input)?;
            let (corrected, log) =
                postprocess_recording(&rec, &run.config.postproc).map_err(|e| invalid(&input, e))?;
            run.emit("corrected.csv", write_trajectory_csv(&corrected));
            run.emit("corrections.csv", log.write_csv());
            run.finish(&out.out)
        }
        Command::Angles { input, out, .. } => {
            let rec = run.trajectory(&input)?;
            let series = angle_series(&rec).map_err(|e| invalid(&input, e))?;
            run.emit("angles.csv", write_angles_csv(&series));
            run.finish(&out.out)
        }
        Command::Strides {
            input, events, out, ..
        } => {
            let parsed = run.angles_or_trajectory(&input)?;
            let events = match (&events, &parsed) {
                (Some(path), _) => run.events(path)?,
                (None, Input::Trajectory(rec)) => {
                    detect_events(rec).map_err(|e| invalid(&input, e))?
                }
                (None, Input::Angles(_)) => {
                    return Err(CliError::Usage(
                        "strides: an angles input needs --events".into(),
                    ))
                }
            };
            let series = match parsed {
                Input::Angles(a) => a,
                Input::Trajectory(rec) => angle_series(&rec).map_err(|e| invalid(&input, e))?,
            };
            let (strides, skipped) = normalized_strides(&series, &events);
            warn_skipped(skipped);
            run.emit("strides.csv", write_strides_csv(&strides));
            run.emit("mean_curves.csv", write_mean_curves_csv(&mean_curves(&strides)));
            run.finish(&out.out)
        }
        Command::Fuse { inputs, out, .. } => {
            let mut recs = Vec::with_capacity(inputs.len());
            for path in &inputs {
                recs.push(run.trajectory(path)?);
            }
            let aligned = align_frames(&recs).map_err(|e| CliError::Usage(format!("fuse: {e}")))?;
            let fused =
                fuse_recordings(&aligned).map_err(|e| CliError::Usage(format!("fuse: {e}")))?;
            run.emit("fused.csv", write_trajectory_csv(&fused));
            run.finish(&out.out)
        }
        Command::Evaluate {
            pred,
            truth,
            per_sprint,
            out,
            ..
        } => {
            if per_sprint {
                run.config.aggregation = Aggregation::PerSprintMean;
            }
            let mut truths = Vec::with_capacity(truth.len());
            for path in &truth {
                truths.push(run.angles(path)?);
            }
            let mut preds = Vec::new();
            for (label, paths) in group_labels(&pred) {
                let mut sprints = Vec::with_capacity(paths.len());
                for path in &paths {
                    sprints.push(run.angles(path)?);
                }
                preds.push((label, sprints));
            }
            let report = evaluate(&preds, &truths, run.config.aggregation)
                .map_err(|e| CliError::Usage(format!("evaluate: {e}")))?;
            run.emit("report.csv", render_report_csv(&report));
            run.finish(&out.out)
        }
        Command::Report {
            pred,
            truth,
            events,
            per_sprint,
            emit_corrections,
            out,
            ..
        } => {
            if per_sprint {
                run.config.aggregation = Aggregation::PerSprintMean;
            }
            report(&mut run, &pred, &truth, &events, emit_corrections)?;
            run.finish(&out.out)
        }
        Command::Simulate { seed, out, .. } => {
            if let Some(seed) = seed {
                run.config.gait.seed = seed;
            }
            let seed = run.config.gait.seed;
            let bad = |e: crate::sim::SimError| CliError::Usage(format!("simulate: {e}"));
            let (clean, angles) = generate_gait(&run.config.gait).map_err(bad)?;
            let (corrupted, log) = inject_errors(&clean, &run.config.corruption, seed).map_err(bad)?;
            run.emit("clean.csv", write_trajectory_csv(&clean));
            run.emit("corrupted.csv", write_trajectory_csv(&corrupted));
            run.emit(
                "events.csv",
                write_events_csv(&analytic_foot_strikes(&run.config.gait)),
            );
            run.emit("angles_truth.csv", write_angles_csv(&angles));
            run.emit("truth_log.csv", log.write_csv());
            run.finish(&out.out)
        }
    }
}

struct TrackerRun {
    label: String,
    raw: Vec<SprintAngles>,
    corrected: Vec<SprintRecording>,
    corrected_angles: Vec<SprintAngles>,
    logs: Vec<CorrectionLog>,
}

fn report(
    run: &mut Run,
    pred: &[String],
    truth: &[PathBuf],
    events: &[PathBuf],
    emit_corrections: bool,
) -> Result<(), CliError> {
    if !events.is_empty() && events.len() != truth.len() {
        return Err(CliError::Usage(format!(
            "report: {} --events files for {} sprints",
            events.len(),
            truth.len()
        )));
    }
    let mut truths = Vec::with_capacity(truth.len());
    let mut sprint_events = Vec::with_capacity(truth.len());
    for (s, path) in truth.iter().enumerate() {
        let parsed = run.angles_or_trajectory(path)?;
        let ev = match (events.get(s), &parsed) {
            (Some(e), _) => run.events(e)?,
            (None, Input::Trajectory(rec)) => detect_events(rec).map_err(|e| invalid(path, e))?,
            (None, Input::Angles(_)) => {
                return Err(CliError::Usage(
                    "report: angles ground truth needs --events for every sprint".into(),
                ))
            }
        };
        sprint_events.push(ev);
        truths.push(match parsed {
            Input::Angles(a) => a,
            Input::Trajectory(rec) => angle_series(&rec).map_err(|e| invalid(path, e))?,
        });
    }

    let mut trackers = Vec::new();
    for (label, paths) in group_labels(pred) {
        if paths.len() != truth.len() {
            return Err(CliError::Usage(format!(
                "report: {label} has {} sprints, truth has {}",
                paths.len(),
                truth.len()
            )));
        }
        let mut t = TrackerRun {
            label: label.clone(),
            raw: Vec::new(),
            corrected: Vec::new(),
            corrected_angles: Vec::new(),
            logs: Vec::new(),
        };
        for path in &paths {
            let mut rec = run.trajectory(path)?;
            rec.tracker_id = label.clone();
            t.raw.push(angle_series(&rec).map_err(|e| invalid(path, e))?);
            let (corrected, log) =
                postprocess_recording(&rec, &run.config.postproc).map_err(|e| invalid(path, e))?;
            t.corrected_angles
                .push(angle_series(&corrected).map_err(|e| invalid(path, e))?);
            t.corrected.push(corrected);
            t.logs.push(log);
        }
        trackers.push(t);
    }

    let agg = run.config.aggregation;
    let eval = |preds: Vec<(String, Vec<SprintAngles>)>| {
        evaluate(&preds, &truths, agg).map_err(|e| CliError::Usage(format!("report: {e}")))
    };

    let table1 = eval(trackers.iter().map(|t| (t.label.clone(), t.raw.clone())).collect())?;
    let table2 = eval(
        trackers
            .iter()
            .flat_map(|t| {
                [
                    (format!("{}:raw", t.label), t.raw.clone()),
                    (format!("{}:postprocessed", t.label), t.corrected_angles.clone()),
                ]
            })
            .collect(),
    )?;
    let corrected_report = eval(
        trackers
            .iter()
            .map(|t| (t.label.clone(), t.corrected_angles.clone()))
            .collect(),
    )?;
    let ranking = rank(&corrected_report);

    let mut table3_preds: Vec<(String, Vec<SprintAngles>)> = trackers
        .iter()
        .map(|t| (t.label.clone(), t.corrected_angles.clone()))
        .collect();
    for k in 2..=ranking.len() {
        let members: Vec<&TrackerRun> = ranking[..k].iter().map(|&i| &trackers[i]).collect();
        let mut sprints = Vec::with_capacity(truth.len());
        let mut fused_label = String::new();
        for s in 0..truth.len() {
            let recs: Vec<SprintRecording> =
                members.iter().map(|t| t.corrected[s].clone()).collect();
            let aligned =
                align_frames(&recs).map_err(|e| CliError::Usage(format!("report: {e}")))?;
            let fused =
                fuse_recordings(&aligned).map_err(|e| CliError::Usage(format!("report: {e}")))?;
            fused_label = format!("fusion:{}", fused.tracker_id);
            sprints.push(
                angle_series(&fused)
                    .map_err(|e| CliError::Usage(format!("report: {fused_label}: {e}")))?,
            );
        }
        table3_preds.push((fused_label, sprints));
    }
    let table3 = eval(table3_preds)?;

    run.emit("table1.csv", render_report_csv(&table1));
    run.emit("table2.csv", render_report_csv(&table2));
    run.emit("table3.csv", render_report_csv(&table3));

    // stride curves before and after correction, with the truth for reference
    let mut fig4 = String::new();
    let mut skipped = 0;
    let mut header = true;
    let mut add = |label: &str, stage: &str, sprints: &[SprintAngles], fig4: &mut String| {
        for (s, series) in sprints.iter().enumerate() {
            let (strides, n) = normalized_strides(series, &sprint_events[s]);
            skipped += n;
            fig4.push_str(&prefixed(
                &write_strides_csv(&strides),
                "label,stage,sprint",
                &format!("{label},{stage},{s}"),
                header,
            ));
            header = false;
        }
    };
    add("truth", "truth", &truths, &mut fig4);
    for t in &trackers {
        add(&t.label, "raw", &t.raw, &mut fig4);
        add(&t.label, "postprocessed", &t.corrected_angles, &mut fig4);
    }
    warn_skipped(skipped);
    run.emit("fig4_strides.csv", fig4.into_bytes());

    // mean curves of the truth and the three best corrected trackers
    let mut fig6 = format!("label,{MEAN_CURVES_HEADER}\n");
    let mut curves_of = |label: &str, sprints: &[SprintAngles]| {
        let mut all = Vec::new();
        for (s, series) in sprints.iter().enumerate() {
            all.extend(normalized_strides(series, &sprint_events[s]).0);
        }
        fig6.push_str(&prefixed(
            &write_mean_curves_csv(&mean_curves(&all)),
            "label",
            label,
            false,
        ));
    };
    curves_of("truth", &truths);
    for &i in ranking.iter().take(3) {
        curves_of(&trackers[i].label, &trackers[i].corrected_angles);
    }
    run.emit("fig6_mean_curves.csv", fig6.into_bytes());

    if emit_corrections {
        for t in &trackers {
            for (s, log) in t.logs.iter().enumerate() {
                run.emit(
                    format!("corrections/{}_sprint{s}.csv", t.label),
                    log.write_csv(),
                );
            }
        }
    }
    Ok(())
}

/// Row indices by ascending mean RMSE, ties broken by label.
fn rank(report: &EvalReport) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..report.rows.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ra, rb) = (&report.rows[a], &report.rows[b]);
        ra.mean.total_cmp(&rb.mean).then_with(|| ra.label.cmp(&rb.label))
    });
    idx
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. Errors are printed to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
