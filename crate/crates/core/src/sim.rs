//! Synthetic sprint generator with analytic joint angles, plus a seeded
//! corruption engine for the three tracking error classes (point loss,
//! left/right interchange, misallocation).
//!
//! Randomness comes from a single SplitMix64 stream seeded with the raw
//! 64-bit seed; uniform reals are `(next_u64 >> 11) * 2^-53`. Draw order is
//! part of the contract and documented on each function.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use thiserror::Error;

use crate::kinematics::{AngleKind, AngleSeries, SLOTS};
use crate::postproc::{Coordinate, CorrectionLog, LogEntry, LogKind};
use crate::trajectory::{JointId, JointTrack, KeypointSample, Side, SprintRecording, StrideEvent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("recordings have different frame domains at {joint}/{side}")]
    DomainMismatch { joint: JointId, side: Side },
}

/// Seeded uniform source. Thin wrapper so the float conversion is fixed.
#[derive(Debug, Clone)]
pub struct SimRng(SplitMix64);

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        (self.uniform() * n as f64) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitParams {
    pub fps: f64,
    pub duration_s: f64,
    /// Strides per second per leg.
    pub stride_hz: f64,
    /// Horizontal hip speed; the sign sets the running direction.
    pub speed_px_s: f64,
    pub trunk_len: f64,
    pub thigh_len: f64,
    pub shank_len: f64,
    pub trunk_base_deg: f64,
    pub trunk_amp_deg: f64,
    pub thigh_amp_deg: f64,
    pub knee_base_deg: f64,
    pub knee_amp_deg: f64,
    pub bounce_px: f64,
    pub hip_x0: f64,
    pub hip_y0: f64,
    /// Uniform per-coordinate tracking noise in `[-jitter, jitter]` px. Zero
    /// keeps the recording exactly on the analytic model.
    pub jitter_px: f64,
    pub seed: u64,
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            fps: 100.0,
            duration_s: 2.0,
            stride_hz: 1.4,
            speed_px_s: 800.0,
            trunk_len: 180.0,
            thigh_len: 110.0,
            shank_len: 105.0,
            trunk_base_deg: 80.0,
            trunk_amp_deg: 3.0,
            thigh_amp_deg: 35.0,
            knee_base_deg: 15.0,
            knee_amp_deg: 90.0,
            bounce_px: 10.0,
            hip_x0: 160.0,
            hip_y0: 540.0,
            jitter_px: 0.0,
            seed: 0,
        }
    }
}

impl GaitParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("fps", self.fps),
            ("duration_s", self.duration_s),
            ("stride_hz", self.stride_hz),
            ("trunk_len", self.trunk_len),
            ("thigh_len", self.thigh_len),
            ("shank_len", self.shank_len),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::InvalidParams(format!("{name} must be positive")));
            }
        }
        let non_negative = [
            ("trunk_amp_deg", self.trunk_amp_deg),
            ("thigh_amp_deg", self.thigh_amp_deg),
            ("knee_base_deg", self.knee_base_deg),
            ("knee_amp_deg", self.knee_amp_deg),
            ("bounce_px", self.bounce_px),
            ("jitter_px", self.jitter_px),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::InvalidParams(format!("{name} must be non-negative")));
            }
        }
        for (name, v) in [
            ("speed_px_s", self.speed_px_s),
            ("trunk_base_deg", self.trunk_base_deg),
            ("hip_x0", self.hip_x0),
            ("hip_y0", self.hip_y0),
        ] {
            if !v.is_finite() {
                return Err(SimError::InvalidParams(format!("{name} must be finite")));
            }
        }
        let trunk_lo = self.trunk_base_deg - self.trunk_amp_deg;
        let trunk_hi = self.trunk_base_deg + self.trunk_amp_deg;
        if trunk_lo <= 0.0 || trunk_hi >= 180.0 {
            return Err(SimError::InvalidParams(
                "trunk inclination must stay inside (0, 180)".into(),
            ));
        }
        if self.knee_base_deg + self.knee_amp_deg > 180.0 {
            return Err(SimError::InvalidParams("knee flexion must not exceed 180".into()));
        }
        Ok(())
    }

    /// A plausible parameter set drawn from `seed`, for randomized tests.
    /// Draws, in order: stride_hz, speed, trunk/thigh/shank lengths, trunk
    /// base and amplitude, thigh amplitude, knee base and amplitude, bounce.
    pub fn sampled(seed: u64) -> Self {
        let mut rng = SimRng::new(seed);
        let mut p = Self {
            stride_hz: rng.range(1.0, 2.2),
            speed_px_s: rng.range(400.0, 900.0) * if rng.uniform() < 0.5 { -1.0 } else { 1.0 },
            trunk_len: rng.range(120.0, 220.0),
            thigh_len: rng.range(80.0, 130.0),
            shank_len: rng.range(80.0, 130.0),
            trunk_base_deg: rng.range(65.0, 95.0),
            trunk_amp_deg: rng.range(0.0, 8.0),
            thigh_amp_deg: rng.range(10.0, 50.0),
            knee_base_deg: rng.range(0.0, 30.0),
            knee_amp_deg: rng.range(30.0, 110.0),
            bounce_px: rng.range(0.0, 20.0),
            seed,
            ..Self::default()
        };
        if p.speed_px_s < 0.0 {
            p.hip_x0 = 1760.0;
        }
        p
    }

    pub fn frame_count(&self) -> u32 {
        (self.duration_s * self.fps).round() as u32
    }

    fn phase(side: Side) -> f64 {
        match side {
            Side::Right => 0.0,
            Side::Left => PI,
        }
    }

    fn omega(&self) -> f64 {
        2.0 * PI * self.stride_hz
    }

    /// Trunk inclination in degrees at time `t` (seconds).
    pub fn trunk_deg(&self, t: f64) -> f64 {
        self.trunk_base_deg + self.trunk_amp_deg * (self.omega() * t).sin()
    }

    /// Thigh angle from the downward vertical, positive forward.
    pub fn thigh_deg(&self, t: f64, side: Side) -> f64 {
        self.thigh_amp_deg * (self.omega() * t + Self::phase(side)).sin()
    }

    /// Knee flexion (0 = straight leg).
    pub fn knee_flexion_deg(&self, t: f64, side: Side) -> f64 {
        let s = (self.omega() * t + Self::phase(side) + PI / 2.0).sin().max(0.0);
        self.knee_base_deg + self.knee_amp_deg * s * s
    }

    /// Interior hip angle between trunk and thigh.
    pub fn hip_angle_deg(&self, t: f64, side: Side) -> f64 {
        let raw = (self.trunk_deg(t) + 90.0 - self.thigh_deg(t, side)).rem_euclid(360.0);
        if raw > 180.0 {
            360.0 - raw
        } else {
            raw
        }
    }

    /// Interior knee angle.
    pub fn knee_angle_deg(&self, t: f64, side: Side) -> f64 {
        180.0 - self.knee_flexion_deg(t, side)
    }

    fn analytic(&self, kind: AngleKind, side: Side, t: f64) -> f64 {
        match kind {
            AngleKind::TrunkInclination => self.trunk_deg(t),
            AngleKind::HipFlexExt => self.hip_angle_deg(t, side),
            AngleKind::KneeFlexExt => self.knee_angle_deg(t, side),
        }
    }
}

/// Point at distance `len` from `(x, y)` along the direction `deg` measured
/// from the forward horizontal towards up, in y-down image coordinates.
fn along(x: f64, y: f64, len: f64, deg: f64, forward: f64) -> (f64, f64) {
    let r = deg.to_radians();
    (x + forward * len * r.cos(), y - len * r.sin())
}

/// Clean recording of shoulder, hip, knee and ankle on both sides, and the
/// analytic angle series in table order.
///
/// With non-zero jitter, one noise pair per sample is drawn, iterating frames,
/// then joints, then sides (left before right), x before y.
pub fn generate_gait(p: &GaitParams) -> Result<(SprintRecording, Vec<AngleSeries>), SimError> {
    p.validate()?;
    let n = p.frame_count();
    let forward = if p.speed_px_s < 0.0 { -1.0 } else { 1.0 };
    let mut rng = SimRng::new(p.seed);
    let mut samples: BTreeMap<(JointId, Side), Vec<KeypointSample>> = BTreeMap::new();

    for frame in 0..n {
        let t = frame as f64 / p.fps;
        let hip = (
            p.hip_x0 + p.speed_px_s * t,
            p.hip_y0 + p.bounce_px * (2.0 * p.omega() * t).sin(),
        );
        let shoulder = along(hip.0, hip.1, p.trunk_len, p.trunk_deg(t), forward);
        for side in Side::BOTH {
            let thigh_dir = p.thigh_deg(t, side) - 90.0;
            let knee = along(hip.0, hip.1, p.thigh_len, thigh_dir, forward);
            let ankle = along(
                knee.0,
                knee.1,
                p.shank_len,
                thigh_dir - p.knee_flexion_deg(t, side),
                forward,
            );
            for (joint, pt) in [
                (JointId::Ankle, ankle),
                (JointId::Hip, hip),
                (JointId::Knee, knee),
                (JointId::Shoulder, shoulder),
            ] {
                samples
                    .entry((joint, side))
                    .or_default()
                    .push(KeypointSample::present(frame, pt.0, pt.1, 1.0));
            }
        }
        if p.jitter_px > 0.0 {
            for (_, track) in samples.iter_mut() {
                let s = track.last_mut().expect("pushed above");
                s.x += rng.range(-p.jitter_px, p.jitter_px);
                s.y += rng.range(-p.jitter_px, p.jitter_px);
            }
        }
    }

    let mut rec = SprintRecording::new("gait-sim", p.fps);
    for ((joint, side), s) in samples {
        rec.insert(JointTrack { joint, side, samples: s });
    }

    let series = SLOTS
        .iter()
        .map(|&(kind, side)| {
            let mut s = AngleSeries::new(kind, side);
            for frame in 0..n {
                s.frames.push(frame);
                s.degrees.push(p.analytic(kind, side, frame as f64 / p.fps));
            }
            s
        })
        .collect();
    Ok((rec, series))
}

/// Foot strikes at the instants where the thigh reaches its most forward
/// position, rounded to the nearest frame, sorted by frame.
pub fn analytic_foot_strikes(p: &GaitParams) -> Vec<StrideEvent> {
    let n = p.frame_count();
    let mut events = Vec::new();
    for side in Side::BOTH {
        // omega t + phase = pi/2 + 2 pi k
        let offset = (0.25 - GaitParams::phase(side) / (2.0 * PI)).rem_euclid(1.0);
        let mut k = 0.0;
        loop {
            let frame = ((offset + k) / p.stride_hz * p.fps).round();
            if frame >= n as f64 {
                break;
            }
            events.push(StrideEvent {
                side,
                frame: frame as u32,
            });
            k += 1.0;
        }
    }
    events.sort_by_key(|e| (e.frame, e.side));
    events
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionSpec {
    pub loss_prob: f64,
    pub swap_windows: usize,
    pub swap_len: u32,
    pub misalloc_prob: f64,
    /// Offset magnitude range in pixels.
    pub misalloc_px: (f64, f64),
    pub target_joints: BTreeSet<JointId>,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self {
            loss_prob: 0.0,
            swap_windows: 0,
            swap_len: 1,
            misalloc_prob: 0.0,
            misalloc_px: (20.0, 60.0),
            target_joints: BTreeSet::from([JointId::Knee]),
        }
    }
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [("loss_prob", self.loss_prob), ("misalloc_prob", self.misalloc_prob)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::InvalidParams(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.swap_len == 0 {
            return Err(SimError::InvalidParams("swap window length must be at least 1".into()));
        }
        let (lo, hi) = self.misalloc_px;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(SimError::InvalidParams("misallocation range must satisfy 0 <= min <= max".into()));
        }
        Ok(())
    }
}

fn log_change(
    log: &mut CorrectionLog,
    frame: u32,
    joint: JointId,
    side: Side,
    kind: LogKind,
    before: &KeypointSample,
    after: Option<&KeypointSample>,
) {
    for c in Coordinate::BOTH {
        let b = c.get(before);
        let a = after.map(|s| c.get(s));
        if a != Some(b) {
            log.entries.push(LogEntry {
                frame,
                joint,
                side,
                coordinate: c,
                kind,
                before: Some(b),
                after: a,
            });
        }
    }
}

/// Non-overlapping windows `[start, start + len)` drawn uniformly; a draw that
/// overlaps an accepted window is rejected. Gives up after `64 * count`
/// draws, so crowded specs may yield fewer windows.
fn draw_windows(rng: &mut SimRng, frames: u32, count: usize, len: u32) -> Vec<u32> {
    let mut starts: Vec<u32> = Vec::new();
    if count == 0 || len > frames {
        return starts;
    }
    let slots = u64::from(frames - len + 1);
    let mut attempts = 0;
    while starts.len() < count && attempts < 64 * count {
        attempts += 1;
        let s = rng.below(slots) as u32;
        if starts.iter().all(|&o| s + len <= o || o + len <= s) {
            starts.push(s);
        }
    }
    starts.sort_unstable();
    starts
}

/// Applies misallocation, swap windows and point loss, in that order, to the
/// target joints. Returns the corrupted recording and a log of every changed
/// coordinate.
///
/// Draw order: for misallocation, joints ascending, left then right, frames
/// ascending, one trigger draw per present sample, then magnitude and
/// direction draws on a hit. Swap window starts come next (shared by all
/// target joints), then one loss draw per present sample in the same nested
/// order as misallocation.
pub fn inject_errors(
    rec: &SprintRecording,
    spec: &CorruptionSpec,
    seed: u64,
) -> Result<(SprintRecording, CorrectionLog), SimError> {
    spec.validate()?;
    let mut rng = SimRng::new(seed);
    let mut out = rec.clone();
    let mut log = CorrectionLog::default();
    let targets: Vec<(JointId, Side)> = spec
        .target_joints
        .iter()
        .flat_map(|&j| Side::BOTH.map(|s| (j, s)))
        .filter(|k| out.tracks.contains_key(k))
        .collect();

    if spec.misalloc_prob > 0.0 {
        for key in &targets {
            let track = out.tracks.get_mut(key).expect("filtered");
            for s in track.samples.iter_mut().filter(|s| !s.missing) {
                if rng.uniform() >= spec.misalloc_prob {
                    continue;
                }
                let magnitude = rng.range(spec.misalloc_px.0, spec.misalloc_px.1);
                let direction = rng.range(0.0, 2.0 * PI);
                let before = *s;
                s.x += magnitude * direction.cos();
                s.y += magnitude * direction.sin();
                log_change(&mut log, s.frame, key.0, key.1, LogKind::Misallocated, &before, Some(s));
            }
        }
    }

    let frame_count = rec
        .tracks
        .values()
        .filter_map(|t| t.samples.last().map(|s| s.frame + 1))
        .max()
        .unwrap_or(0);
    let windows = draw_windows(&mut rng, frame_count, spec.swap_windows, spec.swap_len);
    for &joint in &spec.target_joints {
        let (Some(mut left), Some(mut right)) = (
            out.tracks.remove(&(joint, Side::Left)),
            out.tracks.remove(&(joint, Side::Right)),
        ) else {
            continue;
        };
        for &start in &windows {
            for frame in start..start + spec.swap_len {
                let (Some(il), Some(ir)) = (left.index_of(frame), right.index_of(frame)) else {
                    continue;
                };
                let (l, r) = (left.samples[il], right.samples[ir]);
                if l.missing || r.missing {
                    continue;
                }
                left.samples[il] = r;
                right.samples[ir] = l;
                log_change(&mut log, frame, joint, Side::Left, LogKind::Swapped, &l, Some(&r));
                log_change(&mut log, frame, joint, Side::Right, LogKind::Swapped, &r, Some(&l));
            }
        }
        out.insert(left);
        out.insert(right);
    }

    if spec.loss_prob > 0.0 {
        for key in &targets {
            let track = out.tracks.get_mut(key).expect("filtered");
            for s in track.samples.iter_mut().filter(|s| !s.missing) {
                if rng.uniform() < spec.loss_prob {
                    let before = *s;
                    *s = KeypointSample::missing(s.frame);
                    log_change(&mut log, s.frame, key.0, key.1, LogKind::Lost, &before, None);
                }
            }
        }
    }
    log.sort();
    Ok((out, log))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionScore {
    /// Coordinate RMSE in pixels between clean and corrected, over frames
    /// present in both, pooling x and y.
    pub rmse_px: BTreeMap<(JointId, Side), f64>,
    pub precision: f64,
    pub recall: f64,
    /// Set when precision had no flagged samples to score.
    pub precision_undefined: bool,
    /// Set when the truth log had no samples to recover.
    pub recall_undefined: bool,
}

/// Scores a correction run against the clean recording and the injection
/// log. Precision and recall compare the (frame, joint, side) samples in the
/// correction log with the misallocated and swapped samples of the truth log;
/// lost samples are filled rather than flagged and are left out. An empty
/// denominator scores 1.0 and sets the matching flag.
pub fn score_correction(
    clean: &SprintRecording,
    corrected: &SprintRecording,
    truth_log: &CorrectionLog,
    correction_log: &CorrectionLog,
) -> Result<CorrectionScore, SimError> {
    let mut rmse_px = BTreeMap::new();
    for (&key, c) in &clean.tracks {
        let Some(k) = corrected.tracks.get(&key) else {
            return Err(SimError::DomainMismatch {
                joint: key.0,
                side: key.1,
            });
        };
        if !c.frames().eq(k.frames()) {
            return Err(SimError::DomainMismatch {
                joint: key.0,
                side: key.1,
            });
        }
        let sq: Vec<f64> = c
            .samples
            .iter()
            .zip(&k.samples)
            .filter(|(a, b)| !a.missing && !b.missing)
            .flat_map(|(a, b)| [(a.x - b.x).powi(2), (a.y - b.y).powi(2)])
            .collect();
        let rmse = if sq.is_empty() {
            0.0
        } else {
            (sq.iter().sum::<f64>() / sq.len() as f64).sqrt()
        };
        rmse_px.insert(key, rmse);
    }

    let truth: BTreeSet<(u32, JointId, Side)> = truth_log
        .entries
        .iter()
        .filter(|e| e.kind != LogKind::Lost)
        .map(|e| (e.frame, e.joint, e.side))
        .collect();
    let flagged = correction_log.samples();
    let hits = flagged.intersection(&truth).count() as f64;
    let ratio = |den: usize| if den == 0 { 1.0 } else { hits / den as f64 };
    Ok(CorrectionScore {
        rmse_px,
        precision: ratio(flagged.len()),
        recall: ratio(truth.len()),
        precision_undefined: flagged.is_empty(),
        recall_undefined: truth.is_empty(),
    })
}
