use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn roadcourse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roadcourse"))
        .args(args)
        .output()
        .expect("spawn roadcourse")
}

fn ok(args: &[&str]) {
    let out = roadcourse(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        ok(&["simulate", "--preset", "A", "--seed", "7", "--frames", "20", "--out", s(d)]);
    }
    let (fa, fb) = (files(&a), files(&b));
    assert!(!fa.is_empty());
    assert_eq!(fa, fb);
}

#[test]
fn no_optical_run_is_digital_only() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = tmp.path().join("scn");
    ok(&["simulate", "--preset", "B", "--seed", "1", "--frames", "30", "--out", s(&scn)]);
    let run = tmp.path().join("run");
    ok(&["run", "--scenario", s(&scn), "--no-optical", "--out", s(&run)]);
    let frames = fs::read_to_string(run.join("frames.csv")).unwrap();
    let mut lines = frames.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let mode = header.iter().position(|h| *h == "mode").unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 30);
    for r in rows {
        assert_eq!(r.split(',').nth(mode), Some("digital-only"), "{r}");
    }
}

#[test]
fn zero_noise_report_stays_below_ten_centimeters() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = tmp.path().join("scn");
    ok(&["simulate", "--preset", "Z", "--seed", "0", "--frames", "200", "--out", s(&scn)]);
    let run = tmp.path().join("run");
    ok(&["run", "--scenario", s(&scn), "--out", s(&run)]);
    ok(&["evaluate", "--scenario", s(&scn), "--runs", s(&run)]);
    let svg = tmp.path().join("plot.svg");
    ok(&["report", "--runs", s(&run), "--svg", s(&svg)]);
    let text = fs::read_to_string(&svg).unwrap();
    let max = roadcourse::report::max_polyline_y(&text).expect("polyline");
    assert!(max < 0.1, "max y {max}");
    assert!(tmp.path().join("summary.csv").is_file());
}

#[test]
fn exit_codes() {
    assert_eq!(roadcourse(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(roadcourse(&["simulate"]).status.code(), Some(1));
    assert_eq!(roadcourse(&["--help"]).status.code(), Some(0));
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    let out = roadcourse(&["run", "--scenario", s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}

#[test]
fn config_round_trips() {
    let out = roadcourse(&["config"]);
    assert!(out.status.success());
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, &out.stdout).unwrap();
    assert_eq!(
        roadcourse::config::PipelineConfig::load(&cfg).unwrap(),
        roadcourse::config::PipelineConfig::default()
    );
}
