//! Flat `key = value` pipeline configuration.
//!
//! ```text
//! # comment
//! svr.gamma = 200
//! sim.target_joints = knee, ankle
//! ```

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::eval::Aggregation;
use crate::postproc::PostprocParams;
use crate::sim::{CorruptionSpec, GaitParams};
use crate::trajectory::{JointId, DEFAULT_FPS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: `{key}` is set twice")]
    Duplicate { line: usize, key: String },
    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("{key}: invalid value `{value}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub postproc: PostprocParams,
    pub aggregation: Aggregation,
    pub gait: GaitParams,
    pub corruption: CorruptionSpec,
    /// Frame rate assumed for trajectory files, which do not record it.
    pub input_fps: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            postproc: PostprocParams::default(),
            aggregation: Aggregation::Pooled,
            gait: GaitParams::default(),
            corruption: CorruptionSpec {
                loss_prob: 0.02,
                swap_windows: 4,
                swap_len: 5,
                misalloc_prob: 0.01,
                ..CorruptionSpec::default()
            },
            input_fps: DEFAULT_FPS,
        }
    }
}

/// Key/value pairs in file order, before interpretation.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or(ConfigError::Syntax { line })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax { line });
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
            });
        }
        pairs.push((key.to_string(), value.to_string()));
    }
    Ok(pairs)
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| invalid(key, value, "not a number"))
}

fn boolean(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(invalid(key, value, "expected true or false")),
    }
}

fn joints(key: &str, value: &str) -> Result<BTreeSet<JointId>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| invalid(key, value, format!("unknown joint `{t}`"))))
        .collect()
}

impl PipelineConfig {
    /// Every recognised key.
    pub const KEYS: [&'static str; 33] = [
        "eval.per_sprint",
        "postproc.floor_px",
        "postproc.iterations",
        "sim.bounce_px",
        "sim.duration_s",
        "sim.fps",
        "sim.hip_x0",
        "sim.hip_y0",
        "sim.jitter_px",
        "sim.knee_amp_deg",
        "sim.knee_base_deg",
        "sim.loss_prob",
        "sim.misalloc_max_px",
        "sim.misalloc_min_px",
        "sim.misalloc_prob",
        "sim.shank_len",
        "sim.speed_px_s",
        "sim.stride_hz",
        "sim.swap_len",
        "sim.swap_windows",
        "sim.target_joints",
        "sim.thigh_amp_deg",
        "sim.thigh_len",
        "sim.trunk_amp_deg",
        "sim.trunk_base_deg",
        "sim.trunk_len",
        "svr.c",
        "svr.epsilon",
        "svr.gamma",
        "svr.max_passes",
        "svr.tol",
        "sim.seed",
        "trajectory.fps",
    ];

    /// Applies `pairs` on top of `self`. All unknown keys are reported
    /// together before any value is interpreted.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<(), ConfigError> {
        let unknown: Vec<String> = pairs
            .iter()
            .filter(|(k, _)| !Self::KEYS.contains(&k.as_str()))
            .map(|(k, _)| k.clone())
            .collect();
        if !unknown.is_empty() {
            return Err(ConfigError::UnknownKeys(unknown));
        }
        for (key, value) in pairs {
            self.set(key, value)?;
        }
        self.validate()
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let svr = &mut self.postproc.svr;
        let g = &mut self.gait;
        let c = &mut self.corruption;
        match key {
            "svr.c" => svr.c = num(key, v)?,
            "svr.epsilon" => svr.epsilon = num(key, v)?,
            "svr.gamma" => svr.gamma = num(key, v)?,
            "svr.tol" => svr.tol = num(key, v)?,
            "svr.max_passes" => svr.max_passes = Some(num(key, v)?),
            "postproc.iterations" => self.postproc.iterations = num(key, v)?,
            "postproc.floor_px" => self.postproc.floor_px = num(key, v)?,
            "eval.per_sprint" => {
                self.aggregation = if boolean(key, v)? {
                    Aggregation::PerSprintMean
                } else {
                    Aggregation::Pooled
                }
            }
            "sim.fps" => g.fps = num(key, v)?,
            "sim.duration_s" => g.duration_s = num(key, v)?,
            "sim.stride_hz" => g.stride_hz = num(key, v)?,
            "sim.speed_px_s" => g.speed_px_s = num(key, v)?,
            "sim.trunk_len" => g.trunk_len = num(key, v)?,
            "sim.thigh_len" => g.thigh_len = num(key, v)?,
            "sim.shank_len" => g.shank_len = num(key, v)?,
            "sim.trunk_base_deg" => g.trunk_base_deg = num(key, v)?,
            "sim.trunk_amp_deg" => g.trunk_amp_deg = num(key, v)?,
            "sim.thigh_amp_deg" => g.thigh_amp_deg = num(key, v)?,
            "sim.knee_base_deg" => g.knee_base_deg = num(key, v)?,
            "sim.knee_amp_deg" => g.knee_amp_deg = num(key, v)?,
            "sim.bounce_px" => g.bounce_px = num(key, v)?,
            "sim.hip_x0" => g.hip_x0 = num(key, v)?,
            "sim.hip_y0" => g.hip_y0 = num(key, v)?,
            "sim.jitter_px" => g.jitter_px = num(key, v)?,
            "sim.seed" => g.seed = num(key, v)?,
            "sim.loss_prob" => c.loss_prob = num(key, v)?,
            "sim.swap_windows" => c.swap_windows = num(key, v)?,
            "sim.swap_len" => c.swap_len = num(key, v)?,
            "sim.misalloc_prob" => c.misalloc_prob = num(key, v)?,
            "sim.misalloc_min_px" => c.misalloc_px.0 = num(key, v)?,
            "sim.misalloc_max_px" => c.misalloc_px.1 = num(key, v)?,
            "sim.target_joints" => c.target_joints = joints(key, v)?,
            "trajectory.fps" => self.input_fps = num(key, v)?,
            _ => unreachable!("checked against KEYS"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.input_fps.is_finite() && self.input_fps > 0.0) {
            return Err(invalid(
                "trajectory.fps",
                &self.input_fps.to_string(),
                "must be positive",
            ));
        }
        let wrap = |section: &str, e: String| ConfigError::InvalidValue {
            key: section.to_string(),
            value: String::new(),
            reason: e,
        };
        self.postproc
            .validate()
            .map_err(|e| wrap("postproc", e.to_string()))?;
        self.gait.validate().map_err(|e| wrap("sim", e.to_string()))?;
        self.corruption
            .validate()
            .map_err(|e| wrap("sim", e.to_string()))?;
        Ok(())
    }

    /// Effective values of every key, for the run manifest.
    pub fn to_map(&self) -> BTreeMap<&'static str, String> {
        let s = &self.postproc.svr;
        let g = &self.gait;
        let c = &self.corruption;
        let joints: Vec<&str> = c.target_joints.iter().map(|j| j.as_str()).collect();
        let entries: Vec<(&'static str, String)> = vec![
            ("svr.c", s.c.to_string()),
            ("svr.epsilon", s.epsilon.to_string()),
            ("svr.gamma", s.gamma.to_string()),
            ("svr.tol", s.tol.to_string()),
            (
                "svr.max_passes",
                s.max_passes.map_or("10n".to_string(), |p| p.to_string()),
            ),
            ("postproc.iterations", self.postproc.iterations.to_string()),
            ("postproc.floor_px", self.postproc.floor_px.to_string()),
            (
                "eval.per_sprint",
                (self.aggregation == Aggregation::PerSprintMean).to_string(),
            ),
            ("sim.fps", g.fps.to_string()),
            ("sim.duration_s", g.duration_s.to_string()),
            ("sim.stride_hz", g.stride_hz.to_string()),
            ("sim.speed_px_s", g.speed_px_s.to_string()),
            ("sim.trunk_len", g.trunk_len.to_string()),
            ("sim.thigh_len", g.thigh_len.to_string()),
            ("sim.shank_len", g.shank_len.to_string()),
            ("sim.trunk_base_deg", g.trunk_base_deg.to_string()),
            ("sim.trunk_amp_deg", g.trunk_amp_deg.to_string()),
            ("sim.thigh_amp_deg", g.thigh_amp_deg.to_string()),
            ("sim.knee_base_deg", g.knee_base_deg.to_string()),
            ("sim.knee_amp_deg", g.knee_amp_deg.to_string()),
            ("sim.bounce_px", g.bounce_px.to_string()),
            ("sim.hip_x0", g.hip_x0.to_string()),
            ("sim.hip_y0", g.hip_y0.to_string()),
            ("sim.jitter_px", g.jitter_px.to_string()),
            ("sim.seed", g.seed.to_string()),
            ("sim.loss_prob", c.loss_prob.to_string()),
            ("sim.swap_windows", c.swap_windows.to_string()),
            ("sim.swap_len", c.swap_len.to_string()),
            ("sim.misalloc_prob", c.misalloc_prob.to_string()),
            ("sim.misalloc_min_px", c.misalloc_px.0.to_string()),
            ("sim.misalloc_max_px", c.misalloc_px.1.to_string()),
            ("sim.target_joints", joints.join(",")),
            ("trajectory.fps", self.input_fps.to_string()),
        ];
        entries.into_iter().collect()
    }
}
