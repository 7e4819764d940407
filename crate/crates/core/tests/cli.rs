use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sprintkin::eval::{evaluate, render_report_csv, Aggregation};
use sprintkin::fusion::fuse_recordings;
use sprintkin::kinematics::{
    angle_series, normalize_stride, segment_strides, write_angles_csv, write_strides_csv,
};
use sprintkin::postproc::{postprocess_recording, PostprocParams};
use sprintkin::trajectory::{
    align_frames, parse_events_csv, parse_trajectory_csv, write_trajectory_csv, SprintRecording,
};
use tempfile::TempDir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sprintkin"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

/// Every file under `dir`, relative path first.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), read(&path)));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn postprocess_writes_outputs_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["simulate", "--seed", "3", "--out", &p(d, "sim")]);
    ok(&["postprocess", "--in", &p(d, "sim/corrupted.csv"), "--out", &p(d, "pp")]);
    for f in ["corrected.csv", "corrections.csv", "manifest.json"] {
        assert!(d.join("pp").join(f).is_file(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&read(d.join("pp/manifest.json"))).unwrap();
    assert_eq!(manifest["subcommand"], "postprocess");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["config"]["svr.gamma"], "50");
    let input = &manifest["inputs"][0];
    assert!(input["path"].as_str().unwrap().ends_with("corrupted.csv"));
    assert_eq!(input["sha256"].as_str().unwrap().len(), 64);
    let outputs: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["path"].as_str().unwrap())
        .collect();
    assert_eq!(outputs, ["corrected.csv", "corrections.csv"]);
}

#[test]
fn simulate_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["simulate", "--seed", "7", "--out", &p(d, "a")]);
    ok(&["simulate", "--seed", "7", "--out", &p(d, "b")]);
    ok(&["simulate", "--seed", "8", "--out", &p(d, "c")]);
    assert_eq!(tree(&d.join("a")), tree(&d.join("b")));
    assert_ne!(read(d.join("a/corrupted.csv")), read(d.join("c/corrupted.csv")));
    let names: Vec<PathBuf> = tree(&d.join("a")).into_iter().map(|(n, _)| n).collect();
    let expected: Vec<PathBuf> = [
        "angles_truth.csv",
        "clean.csv",
        "corrupted.csv",
        "events.csv",
        "manifest.json",
        "truth_log.csv",
    ]
    .iter()
    .map(PathBuf::from)
    .collect();
    assert_eq!(names, expected);
}

#[test]
fn disjoint_frames_fail_evaluation() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("a.csv"), "frame,kind,side,degrees\n0,knee_flexext,left,10\n").unwrap();
    std::fs::write(d.join("t.csv"), "frame,kind,side,degrees\n5,knee_flexext,left,10\n").unwrap();
    let out = bin(&[
        "evaluate",
        "--pred",
        &p(d, "a.csv"),
        "--truth",
        &p(d, "t.csv"),
        "--out",
        &p(d, "ev"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no common frames"), "{err}");
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let missing = bin(&["postprocess", "--in", &p(d, "nope.csv"), "--out", &p(d, "o")]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.csv"));

    std::fs::write(
        d.join("bad.csv"),
        "frame,joint,side,x,y,confidence\n0,knee,left,1,2,1\n1,foot,left,1,2,1\n",
    )
    .unwrap();
    let bad = bin(&["ingest-check", "--in", &p(d, "bad.csv")]);
    assert_eq!(bad.status.code(), Some(1));
    let err = String::from_utf8_lossy(&bad.stderr);
    assert!(err.contains("bad.csv") && err.contains("line 3") && err.contains("foot"), "{err}");

    std::fs::write(d.join("run.conf"), "# tuning\nsvr.gamma = 200\nsvr.gama = 1\npostproc.passes = 2\n").unwrap();
    let conf = bin(&["simulate", "--config", &p(d, "run.conf"), "--out", &p(d, "o")]);
    assert_eq!(conf.status.code(), Some(1));
    let err = String::from_utf8_lossy(&conf.stderr);
    assert!(err.contains("svr.gama, postproc.passes"), "{err}");

    std::fs::write(d.join("syntax.conf"), "svr.c = 1\nsvr.gamma 5\n").unwrap();
    let syntax = bin(&["simulate", "--config", &p(d, "syntax.conf"), "--out", &p(d, "o")]);
    assert_eq!(syntax.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&syntax.stderr).contains("syntax.conf: line 2"));

    assert_eq!(bin(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(bin(&["smooth"]).status.code(), Some(1));
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
    assert_eq!(bin(&["--version"]).status.code(), Some(0));
    assert!(!d.join("o").exists());
}

#[test]
fn config_file_and_flags_reach_the_manifest() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("run.conf"), "svr.gamma = 200 # wider\nsim.loss_prob = 0.1\n").unwrap();
    ok(&[
        "simulate",
        "--config",
        &p(d, "run.conf"),
        "--set",
        "sim.loss_prob=0",
        "--seed",
        "4",
        "--out",
        &p(d, "o"),
    ]);
    let m: serde_json::Value = serde_json::from_slice(&read(d.join("o/manifest.json"))).unwrap();
    assert_eq!(m["config"]["svr.gamma"], "200");
    assert_eq!(m["config"]["sim.loss_prob"], "0");
    assert_eq!(m["config"]["sim.seed"], "4");
    assert!(m["inputs"][0]["path"].as_str().unwrap().ends_with("run.conf"));
    let log = String::from_utf8(read(d.join("o/truth_log.csv"))).unwrap();
    assert!(!log.contains(",lost,"));
}

fn quantize(rec: &SprintRecording) -> SprintRecording {
    let mut q = parse_trajectory_csv(&write_trajectory_csv(rec)).unwrap();
    q.tracker_id = rec.tracker_id.clone();
    q.fps = rec.fps;
    q
}

/// postprocess -> angles -> strides -> fuse -> evaluate through files, against
/// the same steps in memory. Trajectory files hold 4 decimals, so the in-memory
/// chain rounds trajectories wherever the file chain writes one.
#[test]
fn file_chain_matches_in_process_chain() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["simulate", "--seed", "11", "--out", &p(d, "a")]);
    ok(&["simulate", "--seed", "11", "--set", "sim.misalloc_prob=0.03", "--out", &p(d, "b")]);
    assert_eq!(read(d.join("a/clean.csv")), read(d.join("b/clean.csv")));
    std::fs::copy(d.join("a/corrupted.csv"), d.join("trk1.csv")).unwrap();
    std::fs::copy(d.join("b/corrupted.csv"), d.join("trk2.csv")).unwrap();
    let truth = p(d, "a/angles_truth.csv");
    let events = p(d, "a/events.csv");

    for t in ["trk1", "trk2"] {
        ok(&["postprocess", "--in", &p(d, &format!("{t}.csv")), "--out", &p(d, &format!("{t}_pp"))]);
        ok(&["angles", "--in", &p(d, &format!("{t}_pp/corrected.csv")), "--out", &p(d, &format!("{t}_ang"))]);
        ok(&[
            "strides",
            "--in",
            &p(d, &format!("{t}_ang/angles.csv")),
            "--events",
            &events,
            "--out",
            &p(d, &format!("{t}_st")),
        ]);
    }
    ok(&[
        "fuse",
        "--in",
        &p(d, "trk1_pp/corrected.csv"),
        "--in",
        &p(d, "trk2_pp/corrected.csv"),
        "--out",
        &p(d, "fused"),
    ]);
    ok(&["angles", "--in", &p(d, "fused/fused.csv"), "--out", &p(d, "fused_ang")]);
    ok(&[
        "evaluate",
        "--pred",
        &format!("trk1={}", p(d, "trk1_ang/angles.csv")),
        "--pred",
        &format!("trk2={}", p(d, "trk2_ang/angles.csv")),
        "--pred",
        &format!("fused={}", p(d, "fused_ang/angles.csv")),
        "--truth",
        &truth,
        "--out",
        &p(d, "ev"),
    ]);

    let truth_angles =
        sprintkin::kinematics::parse_angles_csv(&read(&truth)).unwrap();
    let ev = parse_events_csv(&read(&events)).unwrap();
    let params = PostprocParams::default();
    let mut corrected = Vec::new();
    let mut preds = Vec::new();
    for t in ["trk1", "trk2"] {
        let raw = parse_trajectory_csv(&read(d.join(format!("{t}.csv")))).unwrap();
        let (c, log) = postprocess_recording(&raw, &params).unwrap();
        let c = quantize(&c);
        assert_eq!(write_trajectory_csv(&c), read(d.join(format!("{t}_pp/corrected.csv"))));
        assert_eq!(log.write_csv(), read(d.join(format!("{t}_pp/corrections.csv"))));
        let angles = angle_series(&c).unwrap();
        assert_eq!(write_angles_csv(&angles), read(d.join(format!("{t}_ang/angles.csv"))));
        let strides: Vec<_> = segment_strides(&ev)
            .iter()
            .enumerate()
            .flat_map(|(i, seg)| {
                angles
                    .iter()
                    .filter(|s| s.side == seg.side)
                    .filter_map(move |s| normalize_stride(s, seg).ok().map(|n| (i, n)))
            })
            .collect();
        assert_eq!(write_strides_csv(&strides), read(d.join(format!("{t}_st/strides.csv"))));
        preds.push((t.to_string(), vec![angles]));
        corrected.push(c);
    }
    let fused = quantize(&fuse_recordings(&align_frames(&corrected).unwrap()).unwrap());
    assert_eq!(write_trajectory_csv(&fused), read(d.join("fused/fused.csv")));
    preds.push(("fused".to_string(), vec![angle_series(&fused).unwrap()]));
    let report = evaluate(&preds, &[truth_angles], Aggregation::Pooled).unwrap();
    assert_eq!(render_report_csv(&report), read(d.join("ev/report.csv")));
}

#[test]
fn report_is_reproducible_and_complete() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["simulate", "--seed", "1", "--out", &p(d, "s1")]);
    ok(&["simulate", "--seed", "1", "--set", "sim.misalloc_prob=0.03", "--out", &p(d, "s1b")]);
    let args = |out: &str| -> Vec<String> {
        [
            "report",
            "--pred",
            &format!("A={}", p(d, "s1/corrupted.csv")),
            "--pred",
            &format!("B={}", p(d, "s1b/corrupted.csv")),
            "--pred",
            &format!("C={}", p(d, "s1/clean.csv")),
            "--truth",
            &p(d, "s1/angles_truth.csv"),
            "--events",
            &p(d, "s1/events.csv"),
            "--emit-corrections",
            "--out",
            &p(d, out),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };
    let a = args("r1");
    ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    let b = args("r2");
    ok(&b.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(tree(&d.join("r1")), tree(&d.join("r2")));

    let table = |name: &str| String::from_utf8(read(d.join("r1").join(name))).unwrap();
    let labels = |t: &str| -> Vec<String> {
        t.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect()
    };
    assert_eq!(labels(&table("table1.csv")), ["A", "B", "C"]);
    assert_eq!(
        labels(&table("table2.csv")),
        ["A:raw", "A:postprocessed", "B:raw", "B:postprocessed", "C:raw", "C:postprocessed"]
    );
    let t3 = labels(&table("table3.csv"));
    assert_eq!(&t3[..3], ["A", "B", "C"]);
    assert_eq!(t3.len(), 5);
    assert!(t3[3].starts_with("fusion:") && t3[4] == "fusion:A+B+C");
    assert!(table("fig4_strides.csv").starts_with("label,stage,sprint,stride_id,kind,side,percent,degrees\n"));
    assert!(table("fig6_mean_curves.csv").starts_with("label,kind,side,percent,mean,std\ntruth,"));
    for l in ["A", "B", "C"] {
        assert!(d.join(format!("r1/corrections/{l}_sprint0.csv")).is_file());
    }
}
