//! Joint trajectory data model and the canonical CSV formats.
//!
//! Coordinates are image pixels with y growing downward. Missing samples are
//! kept in-band (`missing = true`, confidence 0) so that frame gaps stay
//! explicit for the post-processing stage.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const TRAJECTORY_HEADER: &str = "frame,joint,side,x,y,confidence";
pub const EVENTS_HEADER: &str = "side,frame";

/// Default capture rate of the sprint recordings.
pub const DEFAULT_FPS: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("line {line}: malformed header, expected `{expected}`")]
    MalformedHeader { line: usize, expected: &'static str },
    #[error("line {line}: unknown joint `{token}`")]
    UnknownJoint { line: usize, token: String },
    #[error("line {line}: unknown side `{token}`")]
    UnknownSide { line: usize, token: String },
    #[error("line {line}: frame {frame} does not increase for {joint}/{side}")]
    NonMonotoneFrames {
        line: usize,
        joint: JointId,
        side: Side,
        frame: u32,
    },
    #[error("line {line}: duplicate sample for {joint}/{side} at frame {frame}")]
    DuplicateSample {
        line: usize,
        joint: JointId,
        side: Side,
        frame: u32,
    },
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("frame indices of {joint}/{side} are not strictly increasing")]
    UnorderedTrack { joint: JointId, side: Side },
    #[error("align_frames needs at least two recordings, got {0}")]
    TooFewRecordings(usize),
    #[error("recordings disagree on fps ({0} vs {1})")]
    FpsMismatch(f64, f64),
    #[error("no common non-missing frame for {joint}/{side}")]
    EmptyIntersection { joint: JointId, side: Side },
}

/// Tracked body point. Declared in alphabetical order so that the derived
/// ordering matches the canonical CSV sort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum JointId {
    Ankle,
    Elbow,
    Hip,
    Knee,
    Shoulder,
    Wrist,
}

impl JointId {
    pub const ALL: [JointId; 6] = [
        JointId::Ankle,
        JointId::Elbow,
        JointId::Hip,
        JointId::Knee,
        JointId::Shoulder,
        JointId::Wrist,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            JointId::Ankle => "ankle",
            JointId::Elbow => "elbow",
            JointId::Hip => "hip",
            JointId::Knee => "knee",
            JointId::Shoulder => "shoulder",
            JointId::Wrist => "wrist",
        }
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for JointId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        JointId::ALL
            .into_iter()
            .find(|j| j.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => Err(other.to_string()),
        }
    }
}

/// One tracked point at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointSample {
    pub frame: u32,
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
    pub missing: bool,
}

impl KeypointSample {
    pub fn present(frame: u32, x: f64, y: f64, confidence: f64) -> Self {
        Self {
            frame,
            x,
            y,
            confidence,
            missing: false,
        }
    }

    /// A lost point. Coordinates are zeroed and must not be read.
    pub fn missing(frame: u32) -> Self {
        Self {
            frame,
            x: 0.0,
            y: 0.0,
            confidence: 0.0,
            missing: true,
        }
    }

    pub fn point(&self) -> Option<Point> {
        (!self.missing).then_some(Point::new(self.x, self.y))
    }
}

/// A 2D pixel position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Per-frame trajectory of one joint on one side.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrack {
    pub joint: JointId,
    pub side: Side,
    pub samples: Vec<KeypointSample>,
}

impl JointTrack {
    pub fn new(
        joint: JointId,
        side: Side,
        samples: Vec<KeypointSample>,
    ) -> Result<Self, TrajectoryError> {
        if samples.windows(2).any(|w| w[0].frame >= w[1].frame) {
            return Err(TrajectoryError::UnorderedTrack { joint, side });
        }
        Ok(Self {
            joint,
            side,
            samples,
        })
    }

    pub fn key(&self) -> (JointId, Side) {
        (self.joint, self.side)
    }

    pub fn present_count(&self) -> usize {
        self.samples.iter().filter(|s| !s.missing).count()
    }

    pub fn frames(&self) -> impl Iterator<Item = u32> + '_ {
        self.samples.iter().map(|s| s.frame)
    }

    pub fn index_of(&self, frame: u32) -> Option<usize> {
        self.samples.binary_search_by_key(&frame, |s| s.frame).ok()
    }

    pub fn sample_at(&self, frame: u32) -> Option<&KeypointSample> {
        self.index_of(frame).map(|i| &self.samples[i])
    }

    /// Position at `frame` if the sample exists and is not missing.
    pub fn point_at(&self, frame: u32) -> Option<Point> {
        self.sample_at(frame).and_then(KeypointSample::point)
    }
}

/// All tracks of one sprint from one tracker.
#[derive(Debug, Clone, PartialEq)]
pub struct SprintRecording {
    pub tracker_id: String,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub tracks: BTreeMap<(JointId, Side), JointTrack>,
}

impl Default for SprintRecording {
    fn default() -> Self {
        Self {
            tracker_id: String::new(),
            fps: DEFAULT_FPS,
            width: 1920,
            height: 1080,
            tracks: BTreeMap::new(),
        }
    }
}

impl SprintRecording {
    pub fn new(tracker_id: impl Into<String>, fps: f64) -> Self {
        Self {
            tracker_id: tracker_id.into(),
            fps,
            ..Self::default()
        }
    }

    /// Inserts a track, replacing any previous track for the same (joint, side).
    pub fn insert(&mut self, track: JointTrack) {
        self.tracks.insert(track.key(), track);
    }

    pub fn track(&self, joint: JointId, side: Side) -> Option<&JointTrack> {
        self.tracks.get(&(joint, side))
    }

    pub fn with_tracks(&self, tracks: BTreeMap<(JointId, Side), JointTrack>) -> Self {
        Self {
            tracker_id: self.tracker_id.clone(),
            fps: self.fps,
            width: self.width,
            height: self.height,
            tracks,
        }
    }
}

/// A foot strike of one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct StrideEvent {
    pub side: Side,
    pub frame: u32,
}

/// Formats `v` with exactly `digits` fractional digits (round half to even on
/// the exact binary value), without a negative sign on zero.
pub(crate) fn format_fixed(v: f64, digits: usize) -> String {
    let s = format!("{v:.digits$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

/// Formats `v` with at most `digits` fractional digits, trailing zeros removed.
pub(crate) fn format_decimal(v: f64, digits: usize) -> String {
    let mut s = format_fixed(v, digits);
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

fn lines(bytes: &[u8]) -> Result<Vec<&str>, TrajectoryError> {
    let text = std::str::from_utf8(bytes).map_err(|e| TrajectoryError::MalformedRow {
        line: 1,
        reason: format!("input is not UTF-8: {e}"),
    })?;
    Ok(text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect())
}

fn parse_field<T: FromStr>(line: usize, name: &str, token: &str) -> Result<T, TrajectoryError> {
    token.parse().map_err(|_| TrajectoryError::MalformedRow {
        line,
        reason: format!("invalid {name} `{token}`"),
    })
}

fn parse_coord(line: usize, name: &str, token: &str) -> Result<f64, TrajectoryError> {
    let v: f64 = parse_field(line, name, token)?;
    if !v.is_finite() {
        return Err(TrajectoryError::MalformedRow {
            line,
            reason: format!("{name} is not finite"),
        });
    }
    Ok(v)
}

/// Parses the canonical trajectory CSV. Metadata is not part of the format,
/// so the returned recording carries the defaults (fps 100, 1920x1080).
pub fn parse_trajectory_csv(bytes: &[u8]) -> Result<SprintRecording, TrajectoryError> {
    let lines = lines(bytes)?;
    if lines.first().copied() != Some(TRAJECTORY_HEADER) {
        return Err(TrajectoryError::MalformedHeader {
            line: 1,
            expected: TRAJECTORY_HEADER,
        });
    }

    let mut grouped: BTreeMap<(JointId, Side), Vec<KeypointSample>> = BTreeMap::new();
    for (idx, raw) in lines.iter().enumerate().skip(1) {
        let line = idx + 1;
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 6 {
            return Err(TrajectoryError::MalformedRow {
                line,
                reason: format!("expected 6 fields, found {}", fields.len()),
            });
        }
        let frame: u32 = parse_field(line, "frame", fields[0])?;
        let joint: JointId = fields[1]
            .parse()
            .map_err(|token| TrajectoryError::UnknownJoint { line, token })?;
        let side: Side = fields[2]
            .parse()
            .map_err(|token| TrajectoryError::UnknownSide { line, token })?;
        let confidence: f64 = parse_field(line, "confidence", fields[5])?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(TrajectoryError::MalformedRow {
                line,
                reason: format!("confidence {confidence} outside [0, 1]"),
            });
        }
        let sample = match (fields[3].is_empty(), fields[4].is_empty()) {
            (true, true) => KeypointSample::missing(frame),
            (false, false) => KeypointSample::present(
                frame,
                parse_coord(line, "x", fields[3])?,
                parse_coord(line, "y", fields[4])?,
                confidence,
            ),
            _ => {
                return Err(TrajectoryError::MalformedRow {
                    line,
                    reason: "x and y must both be present or both empty".into(),
                })
            }
        };

        let samples = grouped.entry((joint, side)).or_default();
        if let Some(last) = samples.last() {
            if last.frame == frame {
                return Err(TrajectoryError::DuplicateSample {
                    line,
                    joint,
                    side,
                    frame,
                });
            }
            if last.frame > frame {
                // an earlier equal frame is still a duplicate, not a reordering
                if samples.binary_search_by_key(&frame, |s| s.frame).is_ok() {
                    return Err(TrajectoryError::DuplicateSample {
                        line,
                        joint,
                        side,
                        frame,
                    });
                }
                return Err(TrajectoryError::NonMonotoneFrames {
                    line,
                    joint,
                    side,
                    frame,
                });
            }
        }
        samples.push(sample);
    }

    let mut rec = SprintRecording::default();
    for ((joint, side), samples) in grouped {
        rec.insert(JointTrack {
            joint,
            side,
            samples,
        });
    }
    Ok(rec)
}

/// Canonical serialization: rows sorted by frame, then joint name, then side.
pub fn write_trajectory_csv(rec: &SprintRecording) -> Vec<u8> {
    let mut rows: Vec<(u32, JointId, Side, &KeypointSample)> = rec
        .tracks
        .values()
        .flat_map(|t| t.samples.iter().map(move |s| (s.frame, t.joint, t.side, s)))
        .collect();
    rows.sort_by_key(|&(frame, joint, side, _)| (frame, joint, side));

    let mut out = String::with_capacity(32 * (rows.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for (frame, joint, side, s) in rows {
        if s.missing {
            out.push_str(&format!("{frame},{joint},{side},,,0\n"));
        } else {
            out.push_str(&format!(
                "{frame},{joint},{side},{},{},{}\n",
                format_decimal(s.x, 4),
                format_decimal(s.y, 4),
                format_decimal(s.confidence, 4)
            ));
        }
    }
    out.into_bytes()
}

pub fn parse_events_csv(bytes: &[u8]) -> Result<Vec<StrideEvent>, TrajectoryError> {
    let lines = lines(bytes)?;
    if lines.first().copied() != Some(EVENTS_HEADER) {
        return Err(TrajectoryError::MalformedHeader {
            line: 1,
            expected: EVENTS_HEADER,
        });
    }
    let mut events = Vec::new();
    let mut last: BTreeMap<Side, u32> = BTreeMap::new();
    for (idx, raw) in lines.iter().enumerate().skip(1) {
        let line = idx + 1;
        if raw.is_empty() {
            continue;
        }
        let Some((side_tok, frame_tok)) = raw.split_once(',') else {
            return Err(TrajectoryError::MalformedRow {
                line,
                reason: "expected `side,frame`".into(),
            });
        };
        let side: Side = side_tok
            .parse()
            .map_err(|token| TrajectoryError::UnknownSide { line, token })?;
        let frame: u32 = parse_field(line, "frame", frame_tok)?;
        if let Some(&prev) = last.get(&side) {
            if frame <= prev {
                return Err(TrajectoryError::MalformedRow {
                    line,
                    reason: format!("{side} strike frames must strictly increase ({prev} then {frame})"),
                });
            }
        }
        last.insert(side, frame);
        events.push(StrideEvent { side, frame });
    }
    Ok(events)
}

/// Events sorted by frame, then side.
pub fn write_events_csv(events: &[StrideEvent]) -> Vec<u8> {
    let mut sorted = events.to_vec();
    sorted.sort_by_key(|e| (e.frame, e.side));
    let mut out = String::from(EVENTS_HEADER);
    out.push('\n');
    for e in sorted {
        out.push_str(&format!("{},{}\n", e.side, e.frame));
    }
    out.into_bytes()
}

/// Restricts every recording to the frames where each (joint, side) shared by
/// all inputs is non-missing in all inputs. Tracks not shared by every input
/// are dropped.
pub fn align_frames(recs: &[SprintRecording]) -> Result<Vec<SprintRecording>, TrajectoryError> {
    if recs.len() < 2 {
        return Err(TrajectoryError::TooFewRecordings(recs.len()));
    }
    let fps = recs[0].fps;
    if let Some(other) = recs.iter().find(|r| r.fps != fps) {
        return Err(TrajectoryError::FpsMismatch(fps, other.fps));
    }

    let shared: Vec<(JointId, Side)> = recs[0]
        .tracks
        .keys()
        .filter(|k| recs.iter().all(|r| r.tracks.contains_key(k)))
        .copied()
        .collect();

    let mut common: BTreeMap<(JointId, Side), BTreeSet<u32>> = BTreeMap::new();
    for key in &shared {
        let mut frames: Option<BTreeSet<u32>> = None;
        for rec in recs {
            let present: BTreeSet<u32> = rec.tracks[key]
                .samples
                .iter()
                .filter(|s| !s.missing)
                .map(|s| s.frame)
                .collect();
            frames = Some(match frames {
                None => present,
                Some(acc) => acc.intersection(&present).copied().collect(),
            });
        }
        let frames = frames.unwrap_or_default();
        if frames.is_empty() {
            return Err(TrajectoryError::EmptyIntersection {
                joint: key.0,
                side: key.1,
            });
        }
        common.insert(*key, frames);
    }

    Ok(recs
        .iter()
        .map(|rec| {
            let tracks = common
                .iter()
                .map(|(key, frames)| {
                    let t = &rec.tracks[key];
                    let samples = t
                        .samples
                        .iter()
                        .filter(|s| frames.contains(&s.frame))
                        .copied()
                        .collect();
                    (
                        *key,
                        JointTrack {
                            joint: t.joint,
                            side: t.side,
                            samples,
                        },
                    )
                })
                .collect();
            rec.with_tracks(tracks)
        })
        .collect())
}
