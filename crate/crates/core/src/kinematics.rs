//! Sagittal-plane joint angles, stride segmentation and 0-100 % stride
//! time normalization.
//!
//! Hip and knee angles are interior angles (180 degrees = straight segments).
//! Trunk inclination is measured against the horizontal axis pointing in the
//! running direction, so a forward lean is below 90 degrees whichever way the
//! athlete crosses the frame.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::trajectory::{JointId, JointTrack, Point, Side, SprintRecording, StrideEvent};

/// Samples per normalized stride (0, 1, ..., 100 %).
pub const STRIDE_SAMPLES: usize = 101;

pub const ANGLES_HEADER: &str = "frame,kind,side,degrees";
pub const STRIDES_HEADER: &str = "stride_id,kind,side,percent,degrees";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("cannot determine a running direction: {0}")]
    DegenerateTrack(String),
    #[error("coincident points, angle undefined")]
    CoincidentPoints,
    #[error("missing joint track {joint}/{side}")]
    MissingJoint { joint: JointId, side: Side },
    #[error("no foot strikes found")]
    NoStrikesFound,
    #[error("angle series has no sample at frame {frame} inside stride {start}..{end}")]
    CoverageGap { frame: u32, start: u32, end: u32 },
    #[error("stride side {stride} does not match series side {series}")]
    SideMismatch { stride: Side, series: Side },
    #[error("line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AngleKind {
    TrunkInclination,
    HipFlexExt,
    KneeFlexExt,
}

impl AngleKind {
    pub const ALL: [AngleKind; 3] = [
        AngleKind::TrunkInclination,
        AngleKind::HipFlexExt,
        AngleKind::KneeFlexExt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AngleKind::TrunkInclination => "trunk_inclination",
            AngleKind::HipFlexExt => "hip_flexext",
            AngleKind::KneeFlexExt => "knee_flexext",
        }
    }

    /// Short label used in report column names.
    pub fn short(self) -> &'static str {
        match self {
            AngleKind::TrunkInclination => "trunk",
            AngleKind::HipFlexExt => "hip",
            AngleKind::KneeFlexExt => "knee",
        }
    }
}

impl fmt::Display for AngleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AngleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AngleKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// The six (angle, side) slots in report column order.
pub const SLOTS: [(AngleKind, Side); 6] = [
    (AngleKind::TrunkInclination, Side::Right),
    (AngleKind::TrunkInclination, Side::Left),
    (AngleKind::HipFlexExt, Side::Right),
    (AngleKind::HipFlexExt, Side::Left),
    (AngleKind::KneeFlexExt, Side::Right),
    (AngleKind::KneeFlexExt, Side::Left),
];

#[derive(Debug, Clone, PartialEq)]
pub struct AngleSeries {
    pub kind: AngleKind,
    pub side: Side,
    pub frames: Vec<u32>,
    pub degrees: Vec<f64>,
}

impl AngleSeries {
    pub fn new(kind: AngleKind, side: Side) -> Self {
        Self {
            kind,
            side,
            frames: Vec::new(),
            degrees: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn at(&self, frame: u32) -> Option<f64> {
        self.frames
            .binary_search(&frame)
            .ok()
            .map(|i| self.degrees[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct StrideSegment {
    pub side: Side,
    pub start_frame: u32,
    pub end_frame: u32,
}

/// One stride resampled at 0, 1, ..., 100 % of its duration.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedStride {
    pub kind: AngleKind,
    pub side: Side,
    pub degrees: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunningDirection {
    /// Toward increasing image x.
    PositiveX,
    NegativeX,
}

impl RunningDirection {
    pub fn sign(self) -> f64 {
        match self {
            RunningDirection::PositiveX => 1.0,
            RunningDirection::NegativeX => -1.0,
        }
    }
}

/// Sign of the net hip x displacement, averaged over the sides that have at
/// least two present samples.
pub fn running_direction(rec: &SprintRecording) -> Result<RunningDirection, KinematicsError> {
    let displacements: Vec<f64> = Side::BOTH
        .iter()
        .filter_map(|&side| rec.track(JointId::Hip, side))
        .filter_map(|t| {
            let mut present = t.samples.iter().filter(|s| !s.missing);
            let first = present.next()?;
            let last = present.last()?;
            Some(last.x - first.x)
        })
        .collect();
    if displacements.is_empty() {
        return Err(KinematicsError::DegenerateTrack(
            "no hip track with two present samples".into(),
        ));
    }
    let mean = displacements.iter().sum::<f64>() / displacements.len() as f64;
    if mean > 0.0 {
        Ok(RunningDirection::PositiveX)
    } else if mean < 0.0 {
        Ok(RunningDirection::NegativeX)
    } else {
        Err(KinematicsError::DegenerateTrack(
            "zero net hip displacement".into(),
        ))
    }
}

/// Inclination of the hip->shoulder segment, in `[0, 180)` degrees.
pub fn trunk_inclination(
    shoulder: Point,
    hip: Point,
    direction: RunningDirection,
) -> Result<f64, KinematicsError> {
    let forward = direction.sign() * (shoulder.x - hip.x);
    let up = hip.y - shoulder.y;
    if forward == 0.0 && up == 0.0 {
        return Err(KinematicsError::CoincidentPoints);
    }
    let deg = up.atan2(forward).to_degrees().rem_euclid(360.0);
    Ok(if deg >= 180.0 { deg - 180.0 } else { deg })
}

/// Interior angle at `vertex` between the rays to `a` and `b`, in `[0, 180]`.
fn interior_angle(vertex: Point, a: Point, b: Point) -> Result<f64, KinematicsError> {
    let (ux, uy) = (a.x - vertex.x, a.y - vertex.y);
    let (vx, vy) = (b.x - vertex.x, b.y - vertex.y);
    if (ux == 0.0 && uy == 0.0) || (vx == 0.0 && vy == 0.0) {
        return Err(KinematicsError::CoincidentPoints);
    }
    // atan2 keeps full precision near 0 and 180 where acos does not
    let cross = (ux * vy - uy * vx).abs();
    let dot = ux * vx + uy * vy;
    Ok(cross.atan2(dot).to_degrees())
}

/// Angle between trunk and thigh at the hip.
pub fn hip_angle(shoulder: Point, hip: Point, knee: Point) -> Result<f64, KinematicsError> {
    interior_angle(hip, shoulder, knee)
}

/// Angle between thigh and shank at the knee; 180 is full extension.
pub fn knee_angle(hip: Point, knee: Point, ankle: Point) -> Result<f64, KinematicsError> {
    interior_angle(knee, hip, ankle)
}

/// Per-frame trunk, hip and knee angles for both sides, in [`SLOTS`] order.
///
/// Each series covers the frames where the joints it needs are present;
/// frames where the angle is undefined (coincident points) are skipped.
pub fn angle_series(rec: &SprintRecording) -> Result<Vec<AngleSeries>, KinematicsError> {
    const REQUIRED: [JointId; 4] = [JointId::Shoulder, JointId::Hip, JointId::Knee, JointId::Ankle];
    let mut tracks: BTreeMap<(JointId, Side), &JointTrack> = BTreeMap::new();
    for side in [Side::Left, Side::Right] {
        for joint in REQUIRED {
            let t = rec
                .track(joint, side)
                .ok_or(KinematicsError::MissingJoint { joint, side })?;
            tracks.insert((joint, side), t);
        }
    }
    let direction = running_direction(rec)?;

    let mut out = Vec::with_capacity(SLOTS.len());
    for (kind, side) in SLOTS {
        let get = |joint: JointId| tracks[&(joint, side)];
        let mut series = AngleSeries::new(kind, side);
        for sample in &get(JointId::Hip).samples {
            let Some(hip) = sample.point() else { continue };
            let frame = sample.frame;
            let angle = match kind {
                AngleKind::TrunkInclination => get(JointId::Shoulder)
                    .point_at(frame)
                    .map(|sh| trunk_inclination(sh, hip, direction)),
                AngleKind::HipFlexExt => get(JointId::Shoulder)
                    .point_at(frame)
                    .zip(get(JointId::Knee).point_at(frame))
                    .map(|(sh, kn)| hip_angle(sh, hip, kn)),
                AngleKind::KneeFlexExt => get(JointId::Knee)
                    .point_at(frame)
                    .zip(get(JointId::Ankle).point_at(frame))
                    .map(|(kn, an)| knee_angle(hip, kn, an)),
            };
            if let Some(Ok(deg)) = angle {
                series.frames.push(frame);
                series.degrees.push(deg);
            }
        }
        out.push(series);
    }
    Ok(out)
}

/// Foot strikes as local maxima of the ankle y coordinate (the lowest
/// physical point in y-down images).
///
/// Peaks need a prominence of at least 20 % of the y range and are kept at
/// least `0.3 * fps` frames apart, higher peaks first. This is a fallback for
/// recordings without annotated strike events.
pub fn detect_foot_strikes(ankle: &JointTrack, fps: f64) -> Result<Vec<u32>, KinematicsError> {
    let present: Vec<(u32, f64)> = ankle
        .samples
        .iter()
        .filter(|s| !s.missing)
        .map(|s| (s.frame, s.y))
        .collect();
    if present.len() < 3 {
        return Err(KinematicsError::NoStrikesFound);
    }
    let y: Vec<f64> = present.iter().map(|p| p.1).collect();
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if range <= 0.0 {
        return Err(KinematicsError::NoStrikesFound);
    }

    // local maxima; a plateau counts once, at its first sample
    let mut candidates = Vec::new();
    let mut i = 1;
    while i + 1 < y.len() {
        if y[i] > y[i - 1] {
            let mut j = i;
            while j + 1 < y.len() && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < y.len() && y[j + 1] < y[i] {
                candidates.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }

    let min_prominence = 0.2 * range;
    candidates.retain(|&p| prominence(&y, p) >= min_prominence);

    // enforce the minimum distance, tallest first, ties to the earlier frame
    let min_distance = 0.3 * fps;
    let mut order = candidates.clone();
    order.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for p in order {
        let frame = present[p].0 as f64;
        if kept
            .iter()
            .all(|&k| (present[k].0 as f64 - frame).abs() >= min_distance)
        {
            kept.push(p);
        }
    }
    if kept.is_empty() {
        return Err(KinematicsError::NoStrikesFound);
    }
    let mut frames: Vec<u32> = kept.into_iter().map(|p| present[p].0).collect();
    frames.sort_unstable();
    Ok(frames)
}

fn prominence(y: &[f64], peak: usize) -> f64 {
    let height = y[peak];
    let mut left_min = height;
    for &v in y[..peak].iter().rev() {
        if v > height {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = height;
    for &v in &y[peak + 1..] {
        if v > height {
            break;
        }
        right_min = right_min.min(v);
    }
    height - left_min.max(right_min)
}

/// Consecutive same-side strikes become strides, ordered by start frame.
pub fn segment_strides(events: &[StrideEvent]) -> Vec<StrideSegment> {
    let mut by_side: BTreeMap<Side, Vec<u32>> = BTreeMap::new();
    for e in events {
        by_side.entry(e.side).or_default().push(e.frame);
    }
    let mut segments: Vec<StrideSegment> = by_side
        .into_iter()
        .flat_map(|(side, mut frames)| {
            frames.sort_unstable();
            frames.dedup();
            frames
                .windows(2)
                .map(|w| StrideSegment {
                    side,
                    start_frame: w[0],
                    end_frame: w[1],
                })
                .collect::<Vec<_>>()
        })
        .collect();
    segments.sort_by_key(|s| (s.start_frame, s.side));
    segments
}

/// Linearly resamples the stride onto 101 points. Every frame of the stride
/// must be present in the series.
pub fn normalize_stride(
    series: &AngleSeries,
    seg: &StrideSegment,
) -> Result<NormalizedStride, KinematicsError> {
    if seg.side != series.side {
        return Err(KinematicsError::SideMismatch {
            stride: seg.side,
            series: series.side,
        });
    }
    let start = series
        .frames
        .binary_search(&seg.start_frame)
        .map_err(|_| KinematicsError::CoverageGap {
            frame: seg.start_frame,
            start: seg.start_frame,
            end: seg.end_frame,
        })?;
    let span = (seg.end_frame - seg.start_frame) as usize;
    for k in 0..=span {
        let expected = seg.start_frame + k as u32;
        if series.frames.get(start + k) != Some(&expected) {
            return Err(KinematicsError::CoverageGap {
                frame: expected,
                start: seg.start_frame,
                end: seg.end_frame,
            });
        }
    }
    let values = &series.degrees[start..=start + span];

    let degrees = (0..STRIDE_SAMPLES)
        .map(|k| {
            if k == STRIDE_SAMPLES - 1 {
                return values[span];
            }
            let pos = k as f64 * span as f64 / 100.0;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if frac == 0.0 {
                values[i]
            } else {
                values[i] + frac * (values[i + 1] - values[i])
            }
        })
        .collect();
    Ok(NormalizedStride {
        kind: series.kind,
        side: series.side,
        degrees,
    })
}

pub fn write_angles_csv(series: &[AngleSeries]) -> Vec<u8> {
    let mut rows: Vec<(u32, AngleKind, Side, f64)> = series
        .iter()
        .flat_map(|s| {
            s.frames
                .iter()
                .zip(&s.degrees)
                .map(move |(&f, &d)| (f, s.kind, s.side, d))
        })
        .collect();
    rows.sort_by_key(|&(f, k, s, _)| (f, k, s));
    let mut out = String::from(ANGLES_HEADER);
    out.push('\n');
    for (frame, kind, side, deg) in rows {
        out.push_str(&format!("{frame},{kind},{side},{deg}\n"));
    }
    out.into_bytes()
}

fn csv_error(line: usize, reason: impl Into<String>) -> KinematicsError {
    KinematicsError::Csv {
        line,
        reason: reason.into(),
    }
}

/// Parses an angle CSV into series in [`SLOTS`] order; absent slots are
/// returned empty.
pub fn parse_angles_csv(bytes: &[u8]) -> Result<Vec<AngleSeries>, KinematicsError> {
    let text = std::str::from_utf8(bytes).map_err(|e| csv_error(1, e.to_string()))?;
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    if lines.next() != Some(ANGLES_HEADER) {
        return Err(csv_error(1, format!("expected header `{ANGLES_HEADER}`")));
    }
    let mut map: BTreeMap<(AngleKind, Side), AngleSeries> = SLOTS
        .iter()
        .map(|&(k, s)| ((k, s), AngleSeries::new(k, s)))
        .collect();
    for (idx, raw) in lines.enumerate() {
        let line = idx + 2;
        if raw.is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() != 4 {
            return Err(csv_error(line, "expected 4 fields"));
        }
        let frame: u32 = f[0]
            .parse()
            .map_err(|_| csv_error(line, format!("invalid frame `{}`", f[0])))?;
        let kind: AngleKind = f[1]
            .parse()
            .map_err(|t| csv_error(line, format!("unknown angle kind `{t}`")))?;
        let side: Side = f[2]
            .parse()
            .map_err(|t| csv_error(line, format!("unknown side `{t}`")))?;
        let deg: f64 = f[3]
            .parse()
            .map_err(|_| csv_error(line, format!("invalid degrees `{}`", f[3])))?;
        let s = map.get_mut(&(kind, side)).expect("all slots present");
        if s.frames.last().is_some_and(|&last| last >= frame) {
            return Err(csv_error(line, format!("frame {frame} does not increase for {kind}/{side}")));
        }
        s.frames.push(frame);
        s.degrees.push(deg);
    }
    Ok(SLOTS.iter().map(|k| map.remove(k).expect("slot")).collect())
}

pub fn write_strides_csv(strides: &[(usize, NormalizedStride)]) -> Vec<u8> {
    let mut out = String::from(STRIDES_HEADER);
    out.push('\n');
    for (id, stride) in strides {
        for (pct, deg) in stride.degrees.iter().enumerate() {
            out.push_str(&format!("{id},{},{},{pct},{deg}\n", stride.kind, stride.side));
        }
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::KeypointSample;

    const EPS: f64 = 1e-9;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    fn track(joint: JointId, side: Side, pts: &[(f64, f64)]) -> JointTrack {
        JointTrack::new(
            joint,
            side,
            pts.iter()
                .enumerate()
                .map(|(i, &(x, y))| KeypointSample::present(i as u32, x, y, 1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn direction_from_hip_displacement() {
        let mut rec = SprintRecording::default();
        rec.insert(track(JointId::Hip, Side::Left, &[(100.0, 0.0), (900.0, 0.0)]));
        assert_eq!(running_direction(&rec).unwrap(), RunningDirection::PositiveX);
        rec.insert(track(JointId::Hip, Side::Left, &[(900.0, 0.0), (100.0, 0.0)]));
        assert_eq!(running_direction(&rec).unwrap(), RunningDirection::NegativeX);
        rec.insert(track(JointId::Hip, Side::Left, &[(500.0, 0.0), (500.0, 0.0)]));
        assert!(matches!(
            running_direction(&rec),
            Err(KinematicsError::DegenerateTrack(_))
        ));
    }

    #[test]
    fn trunk_examples() {
        let fwd = RunningDirection::PositiveX;
        assert!((trunk_inclination(p(0.0, 0.0), p(0.0, 100.0), fwd).unwrap() - 90.0).abs() < EPS);
        let lean = trunk_inclination(p(50.0, 20.0), p(0.0, 100.0), fwd).unwrap();
        assert!((lean - 57.9946167919165).abs() < 1e-9);
        let back = trunk_inclination(p(50.0, 20.0), p(0.0, 100.0), RunningDirection::NegativeX).unwrap();
        assert!((back - 122.0053832080835).abs() < 1e-9);
        assert_eq!(
            trunk_inclination(p(1.0, 1.0), p(1.0, 1.0), fwd),
            Err(KinematicsError::CoincidentPoints)
        );
    }

    #[test]
    fn hip_examples() {
        assert!((hip_angle(p(0.0, 0.0), p(0.0, 100.0), p(0.0, 200.0)).unwrap() - 180.0).abs() < EPS);
        assert!((hip_angle(p(0.0, 0.0), p(0.0, 100.0), p(100.0, 100.0)).unwrap() - 90.0).abs() < EPS);
        let a = hip_angle(p(0.0, 0.0), p(0.0, 100.0), p(50.0, 187.0)).unwrap();
        assert!((a - 150.113473059576).abs() < 1e-9);
    }

    #[test]
    fn knee_examples() {
        assert!((knee_angle(p(0.0, 0.0), p(0.0, 100.0), p(0.0, 200.0)).unwrap() - 180.0).abs() < EPS);
        assert!((knee_angle(p(0.0, 0.0), p(0.0, 100.0), p(100.0, 100.0)).unwrap() - 90.0).abs() < EPS);
        assert_eq!(
            knee_angle(p(0.0, 0.0), p(0.0, 100.0), p(0.0, 100.0)),
            Err(KinematicsError::CoincidentPoints)
        );
    }

    fn standing_pose(frames: usize) -> SprintRecording {
        let mut rec = SprintRecording::default();
        for side in Side::BOTH {
            let walk = |dx: f64, y: f64| -> Vec<(f64, f64)> {
                (0..frames).map(|i| (dx + i as f64 * 5.0, y)).collect()
            };
            rec.insert(track(JointId::Shoulder, side, &walk(0.0, 300.0)));
            rec.insert(track(JointId::Hip, side, &walk(0.0, 500.0)));
            rec.insert(track(JointId::Knee, side, &walk(10.0, 600.0)));
            rec.insert(track(JointId::Ankle, side, &walk(0.0, 700.0)));
        }
        rec
    }

    #[test]
    fn constant_pose_gives_constant_series() {
        let series = angle_series(&standing_pose(10)).unwrap();
        assert_eq!(series.len(), 6);
        for s in &series {
            assert_eq!(s.len(), 10);
            assert!(s.degrees.iter().all(|&d| (d - s.degrees[0]).abs() < 1e-9));
        }
        assert!((series[0].degrees[0] - 90.0).abs() < 1e-9);
    }

    #[test]
    fn missing_joint_is_named() {
        let mut rec = standing_pose(3);
        rec.tracks.remove(&(JointId::Ankle, Side::Left));
        assert_eq!(
            angle_series(&rec).unwrap_err(),
            KinematicsError::MissingJoint {
                joint: JointId::Ankle,
                side: Side::Left
            }
        );
    }

    #[test]
    fn missing_samples_are_skipped() {
        let mut rec = standing_pose(5);
        let knee = rec.tracks.get_mut(&(JointId::Knee, Side::Right)).unwrap();
        knee.samples[2] = KeypointSample::missing(2);
        let series = angle_series(&rec).unwrap();
        assert_eq!(series[0].frames, vec![0, 1, 2, 3, 4]);
        assert_eq!(series[2].frames, vec![0, 1, 3, 4]);
        assert_eq!(series[4].frames, vec![0, 1, 3, 4]);
    }

    fn ankle_from(y: &[f64]) -> JointTrack {
        let pts: Vec<(f64, f64)> = y.iter().map(|&v| (0.0, v)).collect();
        track(JointId::Ankle, Side::Left, &pts)
    }

    #[test]
    fn strikes_on_sinusoid() {
        let y: Vec<f64> = (0..150)
            .map(|t| 300.0 + 50.0 * (2.0 * std::f64::consts::PI * t as f64 / 48.0).sin())
            .collect();
        assert_eq!(detect_foot_strikes(&ankle_from(&y), 100.0).unwrap(), vec![12, 60, 108]);
    }

    #[test]
    fn strikes_on_constant() {
        assert_eq!(
            detect_foot_strikes(&ankle_from(&[5.0; 40]), 100.0),
            Err(KinematicsError::NoStrikesFound)
        );
    }

    #[test]
    fn ripple_below_prominence_is_ignored() {
        // two 80-frame oscillations; ripple of 2 px amplitude at 8-frame period
        let y: Vec<f64> = (0..160)
            .map(|t| {
                let t = t as f64;
                300.0
                    + 50.0 * (2.0 * std::f64::consts::PI * (t - 20.0) / 80.0).cos()
                    + 2.0 * (2.0 * std::f64::consts::PI * t / 8.0).sin()
            })
            .collect();
        let strikes = detect_foot_strikes(&ankle_from(&y), 100.0).unwrap();
        assert_eq!(strikes.len(), 2);
        assert!(strikes.iter().zip([20, 100]).all(|(&s, e)| (s as i64 - e).abs() <= 2));
    }

    #[test]
    fn segmentation() {
        let ev = |side, frame| StrideEvent { side, frame };
        let segs = segment_strides(&[ev(Side::Left, 10), ev(Side::Left, 60), ev(Side::Left, 110)]);
        assert_eq!(
            segs,
            vec![
                StrideSegment { side: Side::Left, start_frame: 10, end_frame: 60 },
                StrideSegment { side: Side::Left, start_frame: 60, end_frame: 110 },
            ]
        );
        assert!(segment_strides(&[ev(Side::Right, 40)]).is_empty());
        let segs = segment_strides(&[
            ev(Side::Left, 10),
            ev(Side::Right, 35),
            ev(Side::Left, 60),
            ev(Side::Right, 85),
        ]);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].side, Side::Left);
        assert_eq!(segs[1].side, Side::Right);
    }

    fn series_of(values: &[f64]) -> AngleSeries {
        AngleSeries {
            kind: AngleKind::KneeFlexExt,
            side: Side::Left,
            frames: (0..values.len() as u32).collect(),
            degrees: values.to_vec(),
        }
    }

    #[test]
    fn normalize_linear_ramp() {
        let values: Vec<f64> = (0..=50).map(|f| 10.0 + f as f64).collect();
        let seg = StrideSegment { side: Side::Left, start_frame: 0, end_frame: 50 };
        let n = normalize_stride(&series_of(&values), &seg).unwrap();
        assert_eq!(n.degrees.len(), 101);
        for (k, d) in n.degrees.iter().enumerate() {
            assert!((d - (10.0 + 0.5 * k as f64)).abs() <= 1e-12);
        }
        assert!((n.degrees[50] - 35.0).abs() <= 1e-12);
    }

    #[test]
    fn normalize_constant_and_endpoints() {
        let seg = StrideSegment { side: Side::Left, start_frame: 0, end_frame: 30 };
        let n = normalize_stride(&series_of(&[42.0; 31]), &seg).unwrap();
        assert!(n.degrees.iter().all(|&d| d == 42.0));

        let values: Vec<f64> = (0..101).map(|i| ((i * 37) % 101) as f64).collect();
        let seg = StrideSegment { side: Side::Left, start_frame: 0, end_frame: 100 };
        let n = normalize_stride(&series_of(&values), &seg).unwrap();
        assert_eq!(n.degrees[0], values[0]);
        assert_eq!(n.degrees[100], values[100]);
        assert_eq!(n.degrees, values);
    }

    #[test]
    fn normalize_reports_gaps() {
        let mut s = series_of(&[1.0; 20]);
        s.frames.remove(7);
        s.degrees.remove(7);
        let seg = StrideSegment { side: Side::Left, start_frame: 2, end_frame: 15 };
        assert!(matches!(
            normalize_stride(&s, &seg),
            Err(KinematicsError::CoverageGap { frame: 7, .. })
        ));
        let seg = StrideSegment { side: Side::Right, start_frame: 0, end_frame: 5 };
        assert!(matches!(
            normalize_stride(&s, &seg),
            Err(KinematicsError::SideMismatch { .. })
        ));
    }

    #[test]
    fn angle_csv_round_trip() {
        let series = angle_series(&standing_pose(4)).unwrap();
        let bytes = write_angles_csv(&series);
        assert_eq!(parse_angles_csv(&bytes).unwrap(), series);
        assert!(parse_angles_csv(b"frame,kind,side\n").is_err());
    }
}
