//! RMSE evaluation of angle series against ground truth, report tables and
//! mean stride curves.

use thiserror::Error;

use crate::kinematics::{AngleKind, AngleSeries, NormalizedStride, SLOTS, STRIDE_SAMPLES};
use crate::trajectory::{format_fixed, Side};

pub const REPORT_HEADER: &str =
    "tracker,trunk_right,trunk_left,hip_right,hip_left,knee_right,knee_left,mean";
pub const MEAN_CURVES_HEADER: &str = "kind,side,percent,mean,std";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no common frames between prediction and truth for {kind}/{side}")]
    NoCommonFrames { kind: AngleKind, side: Side },
    #[error("cannot compare {a_kind}/{a_side} with {b_kind}/{b_side}")]
    KindMismatch {
        a_kind: AngleKind,
        a_side: Side,
        b_kind: AngleKind,
        b_side: Side,
    },
    #[error("{owner}: no {kind}/{side} series")]
    MissingSlot {
        owner: String,
        kind: AngleKind,
        side: Side,
    },
    #[error("{owner}: {got} sprints, truth has {expected}")]
    SprintCountMismatch {
        owner: String,
        got: usize,
        expected: usize,
    },
    #[error("no strides to average")]
    NoStrides,
    #[error("line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

fn check_pair(pred: &AngleSeries, truth: &AngleSeries) -> Result<(), EvalError> {
    if (pred.kind, pred.side) != (truth.kind, truth.side) {
        return Err(EvalError::KindMismatch {
            a_kind: pred.kind,
            a_side: pred.side,
            b_kind: truth.kind,
            b_side: truth.side,
        });
    }
    Ok(())
}

/// Squared differences over the frames both series share.
fn squared_errors(pred: &AngleSeries, truth: &AngleSeries) -> Vec<f64> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < pred.frames.len() && j < truth.frames.len() {
        match pred.frames[i].cmp(&truth.frames[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push((pred.degrees[i] - truth.degrees[j]).powi(2));
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn root_mean(sq: &[f64]) -> f64 {
    (sq.iter().sum::<f64>() / sq.len() as f64).sqrt()
}

/// Root mean squared difference in degrees over the common frames.
pub fn rmse(pred: &AngleSeries, truth: &AngleSeries) -> Result<f64, EvalError> {
    check_pair(pred, truth)?;
    let sq = squared_errors(pred, truth);
    if sq.is_empty() {
        return Err(EvalError::NoCommonFrames {
            kind: truth.kind,
            side: truth.side,
        });
    }
    Ok(root_mean(&sq))
}

/// How per-sprint errors are combined into one number per slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// One RMSE over the common frames of all sprints.
    #[default]
    Pooled,
    /// Arithmetic mean of the per-sprint RMSEs.
    PerSprintMean,
}

/// Six angle series of one sprint, in any order.
pub type SprintAngles = Vec<AngleSeries>;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    /// RMSE per slot in [`SLOTS`] order.
    pub values: [f64; 6],
    pub mean: f64,
}

impl ReportRow {
    pub fn new(label: impl Into<String>, values: [f64; 6]) -> Self {
        Self {
            label: label.into(),
            values,
            mean: values.iter().sum::<f64>() / 6.0,
        }
    }

    pub fn value(&self, kind: AngleKind, side: Side) -> f64 {
        let i = SLOTS.iter().position(|&s| s == (kind, side)).expect("slot");
        self.values[i]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

fn slot<'a>(
    owner: &str,
    sprint: &'a SprintAngles,
    kind: AngleKind,
    side: Side,
) -> Result<&'a AngleSeries, EvalError> {
    sprint
        .iter()
        .find(|s| s.kind == kind && s.side == side)
        .ok_or_else(|| EvalError::MissingSlot {
            owner: owner.to_string(),
            kind,
            side,
        })
}

/// RMSE of every tracker against the truth, one row per tracker in input
/// order. `preds[k].1[s]` and `truth[s]` are the angles of sprint `s`.
pub fn evaluate(
    preds: &[(String, Vec<SprintAngles>)],
    truth: &[SprintAngles],
    aggregation: Aggregation,
) -> Result<EvalReport, EvalError> {
    let mut rows = Vec::with_capacity(preds.len());
    for (label, sprints) in preds {
        if sprints.len() != truth.len() {
            return Err(EvalError::SprintCountMismatch {
                owner: label.clone(),
                got: sprints.len(),
                expected: truth.len(),
            });
        }
        let mut values = [0.0; 6];
        for (v, &(kind, side)) in values.iter_mut().zip(SLOTS.iter()) {
            let mut pooled = Vec::new();
            let mut per_sprint = Vec::new();
            for (p, t) in sprints.iter().zip(truth) {
                let p = slot(label, p, kind, side)?;
                let t = slot("truth", t, kind, side)?;
                match aggregation {
                    Aggregation::Pooled => pooled.extend(squared_errors(p, t)),
                    Aggregation::PerSprintMean => per_sprint.push(rmse(p, t)?),
                }
            }
            *v = match aggregation {
                Aggregation::Pooled if pooled.is_empty() => {
                    return Err(EvalError::NoCommonFrames { kind, side })
                }
                Aggregation::Pooled => root_mean(&pooled),
                Aggregation::PerSprintMean if per_sprint.is_empty() => {
                    return Err(EvalError::NoCommonFrames { kind, side })
                }
                Aggregation::PerSprintMean => {
                    per_sprint.iter().sum::<f64>() / per_sprint.len() as f64
                }
            };
        }
        rows.push(ReportRow::new(label.clone(), values));
    }
    Ok(EvalReport { rows })
}

/// Report table with values rounded half-to-even to 2 decimals.
pub fn render_report_csv(report: &EvalReport) -> Vec<u8> {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for row in &report.rows {
        out.push_str(&row.label);
        for v in row.values.iter().chain(std::iter::once(&row.mean)) {
            out.push(',');
            out.push_str(&format_fixed(*v, 2));
        }
        out.push('\n');
    }
    out.into_bytes()
}

pub fn parse_report_csv(bytes: &[u8]) -> Result<EvalReport, EvalError> {
    let err = |line, reason: String| EvalError::Csv { line, reason };
    let text = std::str::from_utf8(bytes).map_err(|e| err(1, e.to_string()))?;
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    if lines.next() != Some(REPORT_HEADER) {
        return Err(err(1, format!("expected header `{REPORT_HEADER}`")));
    }
    let mut rows = Vec::new();
    for (idx, raw) in lines.enumerate() {
        let line = idx + 2;
        if raw.is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() != 8 {
            return Err(err(line, "expected 8 fields".into()));
        }
        let mut nums = [0.0; 7];
        for (n, tok) in nums.iter_mut().zip(&f[1..]) {
            *n = tok
                .parse()
                .map_err(|_| err(line, format!("invalid value `{tok}`")))?;
        }
        rows.push(ReportRow {
            label: f[0].to_string(),
            values: nums[..6].try_into().expect("six values"),
            mean: nums[6],
        });
    }
    Ok(EvalReport { rows })
}

/// Pointwise mean and population standard deviation of normalized strides.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCurve {
    pub kind: AngleKind,
    pub side: Side,
    pub strides: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn mean_stride_curve(strides: &[NormalizedStride]) -> Result<MeanCurve, EvalError> {
    let first = strides.first().ok_or(EvalError::NoStrides)?;
    if let Some(other) = strides
        .iter()
        .find(|s| (s.kind, s.side) != (first.kind, first.side))
    {
        return Err(EvalError::KindMismatch {
            a_kind: first.kind,
            a_side: first.side,
            b_kind: other.kind,
            b_side: other.side,
        });
    }
    let n = strides.len() as f64;
    let mut mean = Vec::with_capacity(STRIDE_SAMPLES);
    let mut std = Vec::with_capacity(STRIDE_SAMPLES);
    for k in 0..STRIDE_SAMPLES {
        let m = strides.iter().map(|s| s.degrees[k]).sum::<f64>() / n;
        let var = strides.iter().map(|s| (s.degrees[k] - m).powi(2)).sum::<f64>() / n;
        mean.push(m);
        std.push(var.sqrt());
    }
    Ok(MeanCurve {
        kind: first.kind,
        side: first.side,
        strides: strides.len(),
        mean,
        std,
    })
}

pub fn write_mean_curves_csv(curves: &[MeanCurve]) -> Vec<u8> {
    let mut out = String::from(MEAN_CURVES_HEADER);
    out.push('\n');
    for c in curves {
        for (pct, (m, s)) in c.mean.iter().zip(&c.std).enumerate() {
            out.push_str(&format!("{},{},{pct},{m},{s}\n", c.kind, c.side));
        }
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(kind: AngleKind, side: Side, frames: &[u32], degrees: &[f64]) -> AngleSeries {
        AngleSeries {
            kind,
            side,
            frames: frames.to_vec(),
            degrees: degrees.to_vec(),
        }
    }

    fn knee(frames: &[u32], degrees: &[f64]) -> AngleSeries {
        series(AngleKind::KneeFlexExt, Side::Left, frames, degrees)
    }

    fn six(value: f64) -> SprintAngles {
        SLOTS
            .iter()
            .map(|&(k, s)| series(k, s, &[0, 1, 2], &[value; 3]))
            .collect()
    }

    #[test]
    fn rmse_examples() {
        let a = knee(&[0, 1, 2], &[10.0, 20.0, 30.0]);
        let b = knee(&[0, 1, 2], &[13.0, 16.0, 30.0]);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert!((rmse(&a, &b).unwrap() - 2.886751345948129).abs() < 1e-12);
        let c = knee(&[5, 6], &[1.0, 2.0]);
        assert!(matches!(rmse(&a, &c), Err(EvalError::NoCommonFrames { .. })));
        let d = series(AngleKind::HipFlexExt, Side::Left, &[0], &[1.0]);
        assert!(matches!(rmse(&a, &d), Err(EvalError::KindMismatch { .. })));
    }

    #[test]
    fn rmse_uses_common_frames_only() {
        let a = knee(&[0, 1, 2, 3], &[10.0, 20.0, 30.0, 99.0]);
        let b = knee(&[1, 2, 4], &[23.0, 26.0, 0.0]);
        assert!((rmse(&a, &b).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn perfect_tracker_row() {
        let truth = vec![six(5.0)];
        let r = evaluate(&[("perfect".into(), vec![six(5.0)])], &truth, Aggregation::Pooled).unwrap();
        assert_eq!(r.rows[0].values, [0.0; 6]);
        assert_eq!(r.rows[0].mean, 0.0);
        assert_eq!(
            String::from_utf8(render_report_csv(&r)).unwrap(),
            format!("{REPORT_HEADER}\nperfect,0.00,0.00,0.00,0.00,0.00,0.00,0.00\n")
        );
    }

    #[test]
    fn pooled_and_per_sprint_differ() {
        // sprint 1 has one frame off by 3, sprint 2 has three frames off by 1
        let mk = |frames: &[u32], d: &[f64]| -> SprintAngles {
            SLOTS.iter().map(|&(k, s)| series(k, s, frames, d)).collect()
        };
        let truth = vec![mk(&[0], &[0.0]), mk(&[0, 1, 2], &[0.0; 3])];
        let pred = vec![mk(&[0], &[3.0]), mk(&[0, 1, 2], &[1.0; 3])];
        let pooled = evaluate(&[("t".into(), pred.clone())], &truth, Aggregation::Pooled).unwrap();
        let mean = evaluate(&[("t".into(), pred)], &truth, Aggregation::PerSprintMean).unwrap();
        assert!((pooled.rows[0].values[0] - 3.0f64.sqrt()).abs() < 1e-12);
        assert!((mean.rows[0].values[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn table_row_mean_is_arithmetic() {
        let row = ReportRow::new("RTMPose", [3.88, 5.15, 6.67, 8.00, 4.37, 6.15]);
        assert!((row.mean - 34.22 / 6.0).abs() < 1e-12);
        let csv = String::from_utf8(render_report_csv(&EvalReport { rows: vec![row] })).unwrap();
        assert!(csv.ends_with("RTMPose,3.88,5.15,6.67,8.00,4.37,6.15,5.70\n"));
    }

    #[test]
    fn rendering_rounds_half_to_even() {
        let row = ReportRow {
            label: "x".into(),
            values: [5.6249, 0.125, 0.375, -0.001, 2.0, 1.005],
            mean: 0.0,
        };
        let csv = String::from_utf8(render_report_csv(&EvalReport { rows: vec![row] })).unwrap();
        // 1.005 is stored just below the tie
        assert!(csv.ends_with("x,5.62,0.12,0.38,0.00,2.00,1.00,0.00\n"));
        assert_eq!(
            render_report_csv(&EvalReport::default()),
            format!("{REPORT_HEADER}\n").into_bytes()
        );
    }

    #[test]
    fn report_round_trip() {
        let report = EvalReport {
            rows: vec![
                ReportRow::new("a", [1.234, 2.0, 3.0, 4.0, 5.0, 6.789]),
                ReportRow::new("b+c", [0.0; 6]),
            ],
        };
        let parsed = parse_report_csv(&render_report_csv(&report)).unwrap();
        for (p, r) in parsed.rows.iter().zip(&report.rows) {
            assert_eq!(p.label, r.label);
            for (a, b) in p.values.iter().chain([&p.mean]).zip(r.values.iter().chain([&r.mean])) {
                assert!((a - b).abs() <= 0.005 + 1e-12);
            }
        }
    }

    #[test]
    fn missing_slot_is_reported() {
        let mut partial = six(1.0);
        partial.pop();
        assert!(matches!(
            evaluate(&[("t".into(), vec![partial])], &[six(1.0)], Aggregation::Pooled),
            Err(EvalError::MissingSlot { .. })
        ));
    }

    fn stride(value: f64) -> NormalizedStride {
        NormalizedStride {
            kind: AngleKind::KneeFlexExt,
            side: Side::Left,
            degrees: vec![value; STRIDE_SAMPLES],
        }
    }

    #[test]
    fn mean_curve_examples() {
        let c = mean_stride_curve(&[stride(10.0), stride(20.0)]).unwrap();
        assert!(c.mean.iter().all(|&m| m == 15.0));
        assert!(c.std.iter().all(|&s| s == 5.0));

        let c = mean_stride_curve(&[stride(0.0), stride(0.0), stride(30.0)]).unwrap();
        assert!(c.mean.iter().all(|&m| (m - 10.0).abs() < 1e-12));
        assert!(c.std.iter().all(|&s| (s - 14.142135623730951).abs() < 1e-12));

        let single = mean_stride_curve(&[stride(7.5)]).unwrap();
        assert!(single.std.iter().all(|&s| s == 0.0));
        assert_eq!(mean_stride_curve(&[]).unwrap_err(), EvalError::NoStrides);

        let mut other = stride(1.0);
        other.side = Side::Right;
        assert!(matches!(
            mean_stride_curve(&[stride(1.0), other]),
            Err(EvalError::KindMismatch { .. })
        ));
    }
}
