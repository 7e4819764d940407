//! Late fusion of several trackers by averaging joint positions frame by
//! frame.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::trajectory::{JointId, JointTrack, KeypointSample, Side, SprintRecording};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("fusion needs at least 2 recordings, got {0}")]
    TooFewRecordings(usize),
    #[error("recordings are not frame-aligned: {0}")]
    NotAligned(String),
}

/// Mean of `values` that does not depend on their order and never leaves
/// `[min, max]`.
fn stable_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let sum: f64 = values.iter().sum();
    let mean = sum / values.len() as f64;
    mean.clamp(values[0], values[values.len() - 1])
}

/// Averages x, y and confidence of every (joint, side) over the recordings in
/// which the sample is present. A fused sample is missing only when it is
/// missing in every input.
///
/// Inputs must share fps, the set of tracks and each track's frame list
/// (as produced by `align_frames`). The fused tracker id joins the sorted
/// input ids with `+`, so the result does not depend on input order.
pub fn fuse_recordings(recs: &[SprintRecording]) -> Result<SprintRecording, FusionError> {
    if recs.len() < 2 {
        return Err(FusionError::TooFewRecordings(recs.len()));
    }
    let first = &recs[0];
    for r in &recs[1..] {
        if r.fps != first.fps {
            return Err(FusionError::NotAligned(format!(
                "fps {} differs from {}",
                r.fps, first.fps
            )));
        }
        if !r.tracks.keys().eq(first.tracks.keys()) {
            return Err(FusionError::NotAligned("different joint tracks".into()));
        }
        for (key, t) in &r.tracks {
            if !t.frames().eq(first.tracks[key].frames()) {
                return Err(FusionError::NotAligned(format!(
                    "{}/{} has a different frame list",
                    key.0, key.1
                )));
            }
        }
    }

    let mut tracks: BTreeMap<(JointId, Side), JointTrack> = BTreeMap::new();
    for (&(joint, side), reference) in &first.tracks {
        let samples = reference
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let present: Vec<&KeypointSample> = recs
                    .iter()
                    .map(|r| &r.tracks[&(joint, side)].samples[i])
                    .filter(|s| !s.missing)
                    .collect();
                if present.is_empty() {
                    return KeypointSample::missing(s.frame);
                }
                let col = |f: fn(&KeypointSample) -> f64| {
                    stable_mean(&mut present.iter().map(|s| f(s)).collect::<Vec<_>>())
                };
                KeypointSample::present(s.frame, col(|s| s.x), col(|s| s.y), col(|s| s.confidence))
            })
            .collect();
        tracks.insert((joint, side), JointTrack { joint, side, samples });
    }

    let mut labels: Vec<&str> = recs.iter().map(|r| r.tracker_id.as_str()).collect();
    labels.sort_unstable();
    let mut fused = first.with_tracks(tracks);
    fused.tracker_id = labels.join("+");
    Ok(fused)
}
