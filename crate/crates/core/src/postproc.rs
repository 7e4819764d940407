//! Tracking post-processing: SVR smoothing of each coordinate, residual
//! ("error") curves, 3-sigma outlier detection and correction by left/right
//! interchange first and smoothed-value substitution second. Lost points are
//! filled from the smoothed curves.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::svr::{fit_svr, SvrError, SvrParams};
use crate::trajectory::{format_decimal, JointId, JointTrack, KeypointSample, Side, SprintRecording};

pub const CORRECTIONS_HEADER: &str = "frame,joint,side,coordinate,kind,before,after";

/// Confidence assigned to samples filled in from the smoothed curve.
pub const FILLED_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PostprocError {
    #[error("{joint}/{side}: fewer than 2 present samples")]
    DegenerateTrack { joint: JointId, side: Side },
    #[error("{joint}/{side}: frame domains of raw and smoothed tracks differ")]
    DomainMismatch { joint: JointId, side: Side },
    #[error("{joint}/{side}: {source}")]
    Svr {
        joint: JointId,
        side: Side,
        #[source]
        source: SvrError,
    },
    #[error("correct_pair needs the same joint on the left and right side")]
    NotAPair,
    #[error("invalid post-processing parameters: {0}")]
    InvalidParams(String),
    #[error("line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocParams {
    pub svr: SvrParams,
    /// Number of smooth/detect/correct passes over the recording.
    pub iterations: usize,
    /// Minimum outlier threshold in pixels beyond the SVR tube edge; the
    /// effective floor is `svr.epsilon + floor_px`, since a fit leaves clean
    /// residuals anywhere up to epsilon.
    pub floor_px: f64,
}

impl Default for PostprocParams {
    fn default() -> Self {
        Self {
            svr: SvrParams::default(),
            iterations: 1,
            floor_px: 1.0,
        }
    }
}

impl PostprocParams {
    /// Lower bound on outlier thresholds used by [`postprocess_recording`].
    pub fn effective_floor(&self) -> f64 {
        self.svr.epsilon + self.floor_px
    }

    pub fn validate(&self) -> Result<(), PostprocError> {
        self.svr
            .validate()
            .map_err(|e| PostprocError::InvalidParams(e.to_string()))?;
        if self.iterations == 0 {
            return Err(PostprocError::InvalidParams("iterations must be at least 1".into()));
        }
        if !(self.floor_px >= 0.0 && self.floor_px.is_finite()) {
            return Err(PostprocError::InvalidParams("floor_px must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Coordinate {
    X,
    Y,
}

impl Coordinate {
    pub const BOTH: [Coordinate; 2] = [Coordinate::X, Coordinate::Y];

    pub fn as_str(self) -> &'static str {
        match self {
            Coordinate::X => "x",
            Coordinate::Y => "y",
        }
    }

    pub fn get(self, s: &KeypointSample) -> f64 {
        match self {
            Coordinate::X => s.x,
            Coordinate::Y => s.y,
        }
    }

    fn set(self, s: &mut KeypointSample, v: f64) {
        match self {
            Coordinate::X => s.x = v,
            Coordinate::Y => s.y = v,
        }
    }
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Coordinate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x" => Ok(Coordinate::X),
            "y" => Ok(Coordinate::Y),
            other => Err(other.to_string()),
        }
    }
}

/// Absolute residual `|m(t) - m~(t)|` of one coordinate over the present
/// frames of the raw track, with its population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub joint: JointId,
    pub side: Side,
    pub coordinate: Coordinate,
    pub frames: Vec<u32>,
    pub values: Vec<f64>,
    pub sigma: f64,
}

impl ErrorCurve {
    /// Residual level above which a frame is an outlier: `3 sigma`, never
    /// below `floor_px`.
    pub fn threshold(&self, floor_px: f64) -> f64 {
        (3.0 * self.sigma).max(floor_px)
    }

    pub fn value_at(&self, frame: u32) -> Option<f64> {
        self.frames
            .binary_search(&frame)
            .ok()
            .map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LogKind {
    Swapped,
    Substituted,
    /// Injected by the corruption engine.
    Misallocated,
    /// Injected by the corruption engine.
    Lost,
}

impl LogKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LogKind::Swapped => "swapped",
            LogKind::Substituted => "substituted",
            LogKind::Misallocated => "misallocated",
            LogKind::Lost => "lost",
        }
    }
}

impl FromStr for LogKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [LogKind::Swapped, LogKind::Substituted, LogKind::Misallocated, LogKind::Lost]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

impl fmt::Display for LogKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub frame: u32,
    pub joint: JointId,
    pub side: Side,
    pub coordinate: Coordinate,
    pub kind: LogKind,
    /// `None` when the sample was missing.
    pub before: Option<f64>,
    pub after: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrectionLog {
    pub entries: Vec<LogEntry>,
}

impl CorrectionLog {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn extend(&mut self, other: CorrectionLog) {
        self.entries.extend(other.entries);
    }

    /// Orders entries by frame, joint, side, coordinate, kind.
    pub fn sort(&mut self) {
        self.entries
            .sort_by_key(|e| (e.frame, e.joint, e.side, e.coordinate, e.kind));
    }

    /// Distinct (frame, joint, side) samples touched by the log.
    pub fn samples(&self) -> BTreeSet<(u32, JointId, Side)> {
        self.entries
            .iter()
            .map(|e| (e.frame, e.joint, e.side))
            .collect()
    }

    pub fn write_csv(&self) -> Vec<u8> {
        let fmt = |v: Option<f64>| v.map(|v| format_decimal(v, 4)).unwrap_or_default();
        let mut out = String::from(CORRECTIONS_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.frame,
                e.joint,
                e.side,
                e.coordinate,
                e.kind,
                fmt(e.before),
                fmt(e.after)
            ));
        }
        out.into_bytes()
    }

    pub fn parse_csv(bytes: &[u8]) -> Result<Self, PostprocError> {
        let err = |line, reason: String| PostprocError::Csv { line, reason };
        let text = std::str::from_utf8(bytes).map_err(|e| err(1, e.to_string()))?;
        let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
        if lines.next() != Some(CORRECTIONS_HEADER) {
            return Err(err(1, format!("expected header `{CORRECTIONS_HEADER}`")));
        }
        let mut entries = Vec::new();
        for (idx, raw) in lines.enumerate() {
            let line = idx + 2;
            if raw.is_empty() {
                continue;
            }
            let f: Vec<&str> = raw.split(',').collect();
            if f.len() != 7 {
                return Err(err(line, "expected 7 fields".into()));
            }
            let value = |tok: &str| -> Result<Option<f64>, PostprocError> {
                if tok.is_empty() {
                    Ok(None)
                } else {
                    tok.parse()
                        .map(Some)
                        .map_err(|_| err(line, format!("invalid value `{tok}`")))
                }
            };
            entries.push(LogEntry {
                frame: f[0]
                    .parse()
                    .map_err(|_| err(line, format!("invalid frame `{}`", f[0])))?,
                joint: f[1].parse().map_err(|t| err(line, format!("unknown joint `{t}`")))?,
                side: f[2].parse().map_err(|t| err(line, format!("unknown side `{t}`")))?,
                coordinate: f[3]
                    .parse()
                    .map_err(|t| err(line, format!("unknown coordinate `{t}`")))?,
                kind: f[4].parse().map_err(|t| err(line, format!("unknown kind `{t}`")))?,
                before: value(f[5])?,
                after: value(f[6])?,
            });
        }
        Ok(Self { entries })
    }
}

/// Fits each coordinate over normalized time and evaluates the fit on every
/// frame of the track. Lost frames become present with
/// [`FILLED_CONFIDENCE`]; other samples keep their confidence.
pub fn smooth_track(track: &JointTrack, params: &SvrParams) -> Result<JointTrack, PostprocError> {
    let (joint, side) = track.key();
    let present: Vec<&KeypointSample> = track.samples.iter().filter(|s| !s.missing).collect();
    if present.len() < 2 {
        return Err(PostprocError::DegenerateTrack { joint, side });
    }
    let first = track.samples[0].frame as f64;
    let span = track.samples[track.samples.len() - 1].frame as f64 - first;
    let normalize = |frame: u32| (frame as f64 - first) / span;

    let times: Vec<f64> = present.iter().map(|s| normalize(s.frame)).collect();
    let fit = |coord: Coordinate| {
        let values: Vec<f64> = present.iter().map(|s| coord.get(s)).collect();
        fit_svr(&times, &values, params).map_err(|source| PostprocError::Svr { joint, side, source })
    };
    let (model_x, model_y) = (fit(Coordinate::X)?, fit(Coordinate::Y)?);

    let samples = track
        .samples
        .iter()
        .map(|s| {
            let t = normalize(s.frame);
            let confidence = if s.missing { FILLED_CONFIDENCE } else { s.confidence };
            KeypointSample::present(s.frame, model_x.predict(t), model_y.predict(t), confidence)
        })
        .collect();
    Ok(JointTrack {
        joint,
        side,
        samples,
    })
}

/// Residual curves `(x, y)` between a raw track and its smoothed version.
pub fn compute_error_curves(
    track: &JointTrack,
    smoothed: &JointTrack,
) -> Result<(ErrorCurve, ErrorCurve), PostprocError> {
    let (joint, side) = track.key();
    if track.samples.len() != smoothed.samples.len()
        || track
            .samples
            .iter()
            .zip(&smoothed.samples)
            .any(|(a, b)| a.frame != b.frame)
    {
        return Err(PostprocError::DomainMismatch { joint, side });
    }
    let curve = |coordinate: Coordinate| {
        let (frames, values): (Vec<u32>, Vec<f64>) = track
            .samples
            .iter()
            .zip(&smoothed.samples)
            .filter(|(raw, _)| !raw.missing)
            .map(|(raw, sm)| (raw.frame, (coordinate.get(raw) - coordinate.get(sm)).abs()))
            .unzip();
        let sigma = population_std(&values);
        ErrorCurve {
            joint,
            side,
            coordinate,
            frames,
            values,
            sigma,
        }
    };
    Ok((curve(Coordinate::X), curve(Coordinate::Y)))
}

pub(crate) fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Frames whose residual exceeds [`ErrorCurve::threshold`].
pub fn detect_outliers(curve: &ErrorCurve, floor_px: f64) -> BTreeSet<u32> {
    let threshold = curve.threshold(floor_px);
    curve
        .frames
        .iter()
        .zip(&curve.values)
        .filter(|(_, &v)| v > threshold)
        .map(|(&f, _)| f)
        .collect()
}

/// Outliers of one track together with the thresholds that produced them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SideOutliers {
    pub x: BTreeSet<u32>,
    pub y: BTreeSet<u32>,
    pub threshold_x: f64,
    pub threshold_y: f64,
}

impl SideOutliers {
    pub fn detect(curves: &(ErrorCurve, ErrorCurve), floor_px: f64) -> Self {
        Self {
            x: detect_outliers(&curves.0, floor_px),
            y: detect_outliers(&curves.1, floor_px),
            threshold_x: curves.0.threshold(floor_px),
            threshold_y: curves.1.threshold(floor_px),
        }
    }

    fn threshold(&self, c: Coordinate) -> f64 {
        match c {
            Coordinate::X => self.threshold_x,
            Coordinate::Y => self.threshold_y,
        }
    }

    fn flagged(&self, c: Coordinate, frame: u32) -> bool {
        match c {
            Coordinate::X => self.x.contains(&frame),
            Coordinate::Y => self.y.contains(&frame),
        }
    }

    pub fn frames(&self) -> BTreeSet<u32> {
        self.x.union(&self.y).copied().collect()
    }
}

fn substitute(
    track: &mut JointTrack,
    smoothed: &JointTrack,
    outliers: &SideOutliers,
    frame: u32,
    log: &mut CorrectionLog,
) {
    let (Some(i), Some(sm)) = (track.index_of(frame), smoothed.sample_at(frame)) else {
        return;
    };
    let sample = &mut track.samples[i];
    if sample.missing {
        return;
    }
    if !Coordinate::BOTH.iter().any(|&c| outliers.flagged(c, frame)) {
        return;
    }
    for c in Coordinate::BOTH {
        let before = c.get(sample);
        let after = c.get(sm);
        c.set(sample, after);
        log.entries.push(LogEntry {
            frame,
            joint: track.joint,
            side: track.side,
            coordinate: c,
            kind: LogKind::Substituted,
            before: Some(before),
            after: Some(after),
        });
    }
}

/// Corrects the outlier frames of a left/right pair.
///
/// Frames are visited in ascending order; a frame is handled if it is flagged
/// in either coordinate of either side. The raw points are first tentatively
/// interchanged; the swap is kept when all four coordinate residuals against
/// the smoothed curves fall to the frozen thresholds or below. Otherwise each
/// flagged coordinate is replaced by its smoothed value.
pub fn correct_pair(
    left: &JointTrack,
    right: &JointTrack,
    left_s: &JointTrack,
    right_s: &JointTrack,
    outliers: (&SideOutliers, &SideOutliers),
) -> Result<(JointTrack, JointTrack, CorrectionLog), PostprocError> {
    if left.joint != right.joint || left.side != Side::Left || right.side != Side::Right {
        return Err(PostprocError::NotAPair);
    }
    for (raw, sm) in [(left, left_s), (right, right_s)] {
        if raw.key() != sm.key() || !raw.frames().eq(sm.frames()) {
            return Err(PostprocError::DomainMismatch {
                joint: raw.joint,
                side: raw.side,
            });
        }
    }
    let (out_l, out_r) = outliers;
    let frames: BTreeSet<u32> = out_l.frames().union(&out_r.frames()).copied().collect();

    let mut new_l = left.clone();
    let mut new_r = right.clone();
    let mut log = CorrectionLog::default();

    for frame in frames {
        let swap_ok = match (
            left.point_at(frame),
            right.point_at(frame),
            left_s.point_at(frame),
            right_s.point_at(frame),
        ) {
            (Some(l), Some(r), Some(ls), Some(rs)) => {
                (r.x - ls.x).abs() <= out_l.threshold(Coordinate::X)
                    && (r.y - ls.y).abs() <= out_l.threshold(Coordinate::Y)
                    && (l.x - rs.x).abs() <= out_r.threshold(Coordinate::X)
                    && (l.y - rs.y).abs() <= out_r.threshold(Coordinate::Y)
            }
            _ => false,
        };

        if swap_ok {
            let il = new_l.index_of(frame).expect("present");
            let ir = new_r.index_of(frame).expect("present");
            let (l, r) = (left.samples[il], right.samples[ir]);
            new_l.samples[il] = KeypointSample { frame, ..r };
            new_r.samples[ir] = KeypointSample { frame, ..l };
            for (side, before, after) in [(Side::Left, l, r), (Side::Right, r, l)] {
                for c in Coordinate::BOTH {
                    log.entries.push(LogEntry {
                        frame,
                        joint: left.joint,
                        side,
                        coordinate: c,
                        kind: LogKind::Swapped,
                        before: Some(c.get(&before)),
                        after: Some(c.get(&after)),
                    });
                }
            }
        } else {
            substitute(&mut new_l, left_s, out_l, frame, &mut log);
            substitute(&mut new_r, right_s, out_r, frame, &mut log);
        }
    }
    Ok((new_l, new_r, log))
}

/// Single-track variant used when a joint has no usable opposite side.
fn correct_single(
    track: &JointTrack,
    smoothed: &JointTrack,
    outliers: &SideOutliers,
) -> (JointTrack, CorrectionLog) {
    let mut out = track.clone();
    let mut log = CorrectionLog::default();
    for frame in outliers.frames() {
        substitute(&mut out, smoothed, outliers, frame, &mut log);
    }
    (out, log)
}

fn fill_missing(track: &mut JointTrack, smoothed: &JointTrack) {
    for (s, sm) in track.samples.iter_mut().zip(&smoothed.samples) {
        if s.missing {
            *s = *sm;
        }
    }
}

fn process_joint(
    tracks: &BTreeMap<Side, &JointTrack>,
    params: &PostprocParams,
) -> Result<(Vec<JointTrack>, CorrectionLog), PostprocError> {
    let usable: BTreeMap<Side, &JointTrack> = tracks
        .iter()
        .filter(|(_, t)| t.present_count() >= 2)
        .map(|(&s, &t)| (s, t))
        .collect();

    let mut smoothed = BTreeMap::new();
    let mut outliers = BTreeMap::new();
    for (&side, &track) in &usable {
        let sm = smooth_track(track, &params.svr)?;
        let curves = compute_error_curves(track, &sm)?;
        outliers.insert(side, SideOutliers::detect(&curves, params.effective_floor()));
        smoothed.insert(side, sm);
    }

    let mut corrected: BTreeMap<Side, JointTrack> = BTreeMap::new();
    let mut log = CorrectionLog::default();
    if usable.len() == 2 {
        let (l, r, pair_log) = correct_pair(
            usable[&Side::Left],
            usable[&Side::Right],
            &smoothed[&Side::Left],
            &smoothed[&Side::Right],
            (&outliers[&Side::Left], &outliers[&Side::Right]),
        )?;
        corrected.insert(Side::Left, l);
        corrected.insert(Side::Right, r);
        log = pair_log;
    } else {
        for (&side, &track) in &usable {
            let (t, single_log) = correct_single(track, &smoothed[&side], &outliers[&side]);
            corrected.insert(side, t);
            log.extend(single_log);
        }
    }
    for (side, track) in corrected.iter_mut() {
        fill_missing(track, &smoothed[side]);
    }
    // tracks too sparse to smooth pass through untouched
    for (&side, &track) in tracks {
        corrected.entry(side).or_insert_with(|| track.clone());
    }
    Ok((corrected.into_values().collect(), log))
}

/// Runs smoothing, outlier detection and correction for every joint of the
/// recording, `params.iterations` times. Joints are processed in parallel;
/// the returned log is sorted by frame.
pub fn postprocess_recording(
    rec: &SprintRecording,
    params: &PostprocParams,
) -> Result<(SprintRecording, CorrectionLog), PostprocError> {
    params.validate()?;
    let mut current = rec.clone();
    let mut log = CorrectionLog::default();
    for _ in 0..params.iterations {
        let mut by_joint: BTreeMap<JointId, BTreeMap<Side, &JointTrack>> = BTreeMap::new();
        for (&(joint, side), track) in &current.tracks {
            by_joint.entry(joint).or_default().insert(side, track);
        }
        let results: Vec<(Vec<JointTrack>, CorrectionLog)> = by_joint
            .par_iter()
            .map(|(_, tracks)| process_joint(tracks, params))
            .collect::<Result<_, _>>()?;

        let mut next = current.with_tracks(BTreeMap::new());
        for (tracks, joint_log) in results {
            for t in tracks {
                next.insert(t);
            }
            log.extend(joint_log);
        }
        current = next;
    }
    log.sort();
    Ok((current, log))
}
