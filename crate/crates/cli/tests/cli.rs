use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn segopt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segopt"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn records(path: &Path) -> Vec<Value> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(header["version"], 1);
    lines.map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn write_lines(path: &Path, rows: &[Value]) {
    let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
    std::fs::write(path, text).unwrap();
}

fn tiny_video(path: &Path, frames: usize) {
    let (w, h) = (16, 16);
    let mut bytes = Vec::new();
    for f in 0..frames {
        for i in 0..w * h {
            bytes.push(((i * 7 + f * 13) % 251) as u8);
        }
        bytes.extend(std::iter::repeat(128u8).take(w * h / 2));
    }
    std::fs::write(path, bytes).unwrap();
}

#[test]
fn synthetic_sweep_writes_grid_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let o = segopt(dir.path(), &["sweep", "--out", "sweep.jsonl"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read(dir.path().join("sweep.jsonl")).unwrap();
    let rows = records(&dir.path().join("sweep.jsonl"));
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| r["segment_id"] == 0));

    let o = segopt(dir.path(), &["sweep", "--out", "sweep.jsonl"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("0 encoded"));
    assert_eq!(std::fs::read(dir.path().join("sweep.jsonl")).unwrap(), first);

    let o = segopt(dir.path(), &["sweep", "--out", "sweep.jsonl", "--segment", "1"]);
    assert_eq!(code(&o), 0);
    assert_eq!(records(&dir.path().join("sweep.jsonl")).len(), 40);
}

#[test]
fn x265_sweep_through_templates() {
    let dir = tempfile::tempdir().unwrap();
    tiny_video(&dir.path().join("clip.yuv"), 4);
    std::fs::write(
        dir.path().join("project.toml"),
        r#"
enabled = ["x265"]
workers = 4

[video]
path = "clip.yuv"
width = 16
height = 16
fps = 2

[templates.x265]
encode = "cp {input} {output}"
decode = "cp {input} {output}"
"#,
    )
    .unwrap();
    let o = segopt(dir.path(), &["sweep", "--config", "project.toml", "--codec", "x265", "--out", "x.jsonl"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = records(&dir.path().join("x.jsonl"));
    assert_eq!(rows.len(), 200);
    assert!(rows.iter().all(|r| r["psnr_db"] == 100.0 && r["error"].is_null()));
}

#[test]
fn failing_encoder_rows_give_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    tiny_video(&dir.path().join("clip.yuv"), 2);
    std::fs::write(
        dir.path().join("project.toml"),
        r#"
[templates.vp9]
encode = "echo 'unsupported preset' >&2; exit 4"
decode = "cp {input} {output}"
"#,
    )
    .unwrap();
    let args = [
        "sweep", "--config", "project.toml", "--codec", "vp9", "--video", "clip.yuv", "--width", "16", "--height", "16",
        "--fps", "2", "--out", "v.jsonl",
    ];
    let o = segopt(dir.path(), &args);
    assert_eq!(code(&o), 3);
    let rows = records(&dir.path().join("v.jsonl"));
    assert_eq!(rows.len(), 100);
    assert!(rows[0]["error"].as_str().unwrap().contains("unsupported preset"));
    // failed rows are kept, so a plain rerun encodes nothing and still reports them
    let o = segopt(dir.path(), &args);
    assert_eq!(code(&o), 3);
    assert_eq!(records(&dir.path().join("v.jsonl")).len(), 100);
}

#[test]
fn missing_template_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    tiny_video(&dir.path().join("clip.yuv"), 2);
    let o = segopt(
        dir.path(),
        &["sweep", "--codec", "x265", "--video", "clip.yuv", "--width", "16", "--height", "16", "--fps", "2", "-o", "s.jsonl"],
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn max_quality_matches_bound_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let o = segopt(
        dir.path(),
        &["optimize", "--mode", "max-quality", "--max-bitrate-kbps", "11205.77", "--min-fps", "25", "--out-dir", "run"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("Overall Bitrate Gain"));
    let decisions = records(&dir.path().join("run/decisions.jsonl"));
    assert_eq!(decisions.len(), 4);
    assert!(decisions.iter().all(|d| d["config"]["qp"] == 28));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"]["baseline_qp"], 28);
    assert!(summary["summary"]["bitrate_gain_pct"].as_f64().unwrap() >= 0.0);
    assert_eq!(summary["summary"]["encodes"], 23);

    let o = segopt(dir.path(), &["report", "run", "--models"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("enc_rate\tB6"));
}

#[test]
fn jnd_offset_lowers_the_vmaf_floor() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["optimize", "--mode", "min-bitrate", "--min-fps", "25", "--baseline-qp", "22"];
    let strict = [&base[..], &["--min-vmaf", "96", "--out-dir", "strict"]].concat();
    let relaxed = [&base[..], &["--reference-vmaf", "96", "--out-dir", "relaxed"]].concat();
    assert_eq!(code(&segopt(dir.path(), &strict)), 0);
    let o = segopt(dir.path(), &relaxed);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("lowered by 6"));
    let read = |name: &str| -> Value {
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(name).join("summary.json")).unwrap()).unwrap()
    };
    let (s, r) = (read("strict"), read("relaxed"));
    assert_eq!(r["constraints"]["quality_metric"], "vmaf");
    assert_eq!(r["constraints"]["bounds"]["min_quality"], 90.0);
    assert_eq!(r["jnd_offset"], 6.0);
    let rate = |v: &Value| v["summary"]["adaptive"]["bitrate_kbps"].as_f64().unwrap();
    assert!(rate(&r) < rate(&s));
    assert!(r["summary"]["bitrate_gain_pct"].as_f64().unwrap() > s["summary"]["bitrate_gain_pct"].as_f64().unwrap());
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = segopt(dir.path(), &["optimize", "--mode", "max-quality", "--max-bitrate-kbps", "9000"]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&segopt(dir.path(), &["optimize", "--min-fps", "25"])), 1);
    assert_eq!(code(&segopt(dir.path(), &["optimize", "--bogus"])), 1);
    assert_eq!(code(&segopt(dir.path(), &["sweep"])), 1);
    let o = segopt(
        dir.path(),
        &["optimize", "--mode", "min-bitrate", "--min-fps", "25", "--min-vmaf", "90", "--min-quality-db", "38"],
    );
    assert_eq!(code(&o), 1);
    std::fs::write(dir.path().join("bad.toml"), "[tolerances]\nbitrate = 0.8\n").unwrap();
    assert_eq!(code(&segopt(dir.path(), &["sweep", "--config", "bad.toml", "-o", "s.jsonl"])), 1);
}

#[test]
fn optimize_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = segopt(
            dir.path(),
            &["optimize", "--mode", "min-bitrate", "--min-quality-db", "38", "--min-fps", "25", "--law", "cactus", "--out-dir", out],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["decisions.jsonl", "models.jsonl", "front.jsonl", "summary.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

fn rd_file(path: &Path, codec: &str, scale: f64) {
    let rows: Vec<Value> = [(15946.1664, 40.649075), (4917.3664, 38.7784375), (2235.6088, 36.95575), (1124.8256, 35.071125)]
        .iter()
        .map(|&(b, q)| serde_json::json!({"codec": codec, "bitrate_kbps": b * scale, "psnr611": q, "vmaf": q * 2.0}))
        .collect();
    let mut all = vec![serde_json::json!({"format": "rd-points", "version": 1})];
    all.extend(rows);
    write_lines(path, &all);
}

#[test]
fn bdrate_tables() {
    let dir = tempfile::tempdir().unwrap();
    rd_file(&dir.path().join("a.jsonl"), "A", 1.0);
    rd_file(&dir.path().join("b.jsonl"), "B", 0.5);
    rd_file(&dir.path().join("a2.jsonl"), "A2", 1.0);
    rd_file(&dir.path().join("c.jsonl"), "C", 0.8);

    let o = segopt(dir.path(), &["bdrate", "a.jsonl", "a2.jsonl"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).lines().nth(1).unwrap().ends_with("\t0.00%"));

    let half = stdout(&segopt(dir.path(), &["bdrate", "a.jsonl", "b.jsonl"]));
    assert_eq!(half.lines().nth(1).unwrap(), "A\t-\t50.00%");
    let double = stdout(&segopt(dir.path(), &["bdrate", "b.jsonl", "a.jsonl", "--metric", "vmaf"]));
    assert!(double.starts_with("Bitrate savings Relative to (VMAF)"));
    assert_eq!(double.lines().nth(1).unwrap(), "B\t-\t-100.00%");

    let four = stdout(&segopt(dir.path(), &["bdrate", "a.jsonl", "b.jsonl", "a2.jsonl", "c.jsonl"]));
    let lines: Vec<&str> = four.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines.iter().all(|l| l.split('\t').count() == 5));
    assert_eq!(lines[4], "C\t-\t-\t-\t-");

    assert_eq!(code(&segopt(dir.path(), &["bdrate", "a.jsonl"])), 1);
}

#[test]
fn bdrate_skips_pairs_without_overlap() {
    let dir = tempfile::tempdir().unwrap();
    rd_file(&dir.path().join("a.jsonl"), "A", 1.0);
    let far: Vec<Value> = (0..4)
        .map(|i| serde_json::json!({"codec": "F", "bitrate_kbps": 100.0 * (i + 1) as f64, "psnr611": 60.0 + i as f64}))
        .collect();
    write_lines(&dir.path().join("f.jsonl"), &far);
    let o = segopt(dir.path(), &["bdrate", "a.jsonl", "f.jsonl"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("n/a"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pair skipped"));
}

fn motion_files(dir: &Path, spans: &[(&str, usize, f64)]) {
    let mut mv = vec![serde_json::json!({"format": "motion-vectors", "version": 1})];
    let mut pu = vec![serde_json::json!({"format": "pu-counts", "version": 1})];
    let mut frame = 0;
    for &(kind, len, count) in spans {
        for _ in 0..len {
            pu.push(serde_json::json!({"frame": frame, "pu_count": count}));
            for by in 0..9i64 {
                for bx in 0..16i64 {
                    let (dx, dy) = match kind {
                        "pan" => (8.0, 0.5),
                        "zoom" => ((bx as f64 - 7.5) * 1.2, (by as f64 - 4.0) * 1.2),
                        _ => (0.0, 0.0),
                    };
                    mv.push(serde_json::json!({"frame": frame, "block_x": bx, "block_y": by, "dx": dx, "dy": dy}));
                }
            }
            frame += 1;
        }
    }
    write_lines(&dir.join("mv.jsonl"), &mv);
    write_lines(&dir.join("pu.jsonl"), &pu);
}

#[test]
fn classify_static_scene() {
    let dir = tempfile::tempdir().unwrap();
    motion_files(dir.path(), &[("static", 60, 400.0)]);
    let o = segopt(
        dir.path(),
        &["classify", "--motion-vectors", "mv.jsonl", "--pu-counts", "pu.jsonl", "--policy", "shields", "-o", "s.jsonl"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = records(&dir.path().join("s.jsonl"));
    assert_eq!(s.len(), 1);
    assert_eq!(s[0]["label"], "stationary");
    assert_eq!(s[0]["constraints"]["bounds"]["min_quality"], 0.94);
}

#[test]
fn classify_shields_schedule_feeds_optimize() {
    let dir = tempfile::tempdir().unwrap();
    motion_files(dir.path(), &[("pan", 150, 900.0), ("static", 150, 300.0), ("zoom", 150, 1500.0)]);
    let o = segopt(
        dir.path(),
        &["classify", "--motion-vectors", "mv.jsonl", "--pu-counts", "pu.jsonl", "--policy", "shields", "-o", "s.jsonl"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = records(&dir.path().join("s.jsonl"));
    let labels: Vec<&str> = s.iter().map(|e| e["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["tracking", "stationary", "zoom"]);
    let floors: Vec<f64> = s.iter().map(|e| e["constraints"]["bounds"]["min_quality"].as_f64().unwrap()).collect();
    assert_eq!(floors, [0.88, 0.94, 0.94]);
    assert_eq!(s[1]["start_frame"], 150);

    let o = segopt(
        dir.path(),
        &["optimize", "--constraint-schedule", "s.jsonl", "--frames", "450", "--fps", "50", "--out-dir", "run"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = records(&dir.path().join("run/decisions.jsonl"));
    let mins: Vec<f64> = d.iter().map(|r| r["constraints"]["bounds"]["min_quality"].as_f64().unwrap()).collect();
    assert_eq!(mins, [0.88, 0.94, 0.94]);
    assert!(d.iter().all(|r| r["constraints"]["quality_metric"] == "ssim"));

    // park run leaves zoom unmapped; optimize then needs fallback bounds
    let o = segopt(
        dir.path(),
        &["classify", "--motion-vectors", "mv.jsonl", "--pu-counts", "pu.jsonl", "--policy", "parkrun", "-o", "p.jsonl"],
    );
    assert_eq!(code(&o), 0);
    assert!(records(&dir.path().join("p.jsonl"))[2]["constraints"].is_null());
    let o = segopt(dir.path(), &["optimize", "--constraint-schedule", "p.jsonl", "--frames", "450", "--fps", "50"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn classify_rejects_empty_motion_file() {
    let dir = tempfile::tempdir().unwrap();
    motion_files(dir.path(), &[("static", 10, 400.0)]);
    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let o = segopt(
        dir.path(),
        &["classify", "--motion-vectors", "empty.jsonl", "--pu-counts", "pu.jsonl", "--policy", "shields"],
    );
    assert_eq!(code(&o), 2);
    std::fs::write(dir.path().join("junk.jsonl"), "{\"frame\": \"x\"}\n").unwrap();
    let o = segopt(
        dir.path(),
        &["classify", "--motion-vectors", "junk.jsonl", "--pu-counts", "pu.jsonl", "--policy", "shields"],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn metrics_of_identical_videos() {
    let dir = tempfile::tempdir().unwrap();
    tiny_video(&dir.path().join("a.yuv"), 3);
    std::fs::write(dir.path().join("vmaf.log"), "frame=0 vmaf=90\nframe=1 vmaf=94\nframe=2 vmaf=92\n").unwrap();
    let o = segopt(
        dir.path(),
        &["metrics", "--reference", "a.yuv", "--distorted", "a.yuv", "--width", "16", "--height", "16", "--vmaf-log", "vmaf.log"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["psnr611"], 100.0);
    assert_eq!(v["ssim"], 1.0);
    assert_eq!(v["vmaf"], 92.0);

    tiny_video(&dir.path().join("b.yuv"), 2);
    let o = segopt(
        dir.path(),
        &["metrics", "--reference", "a.yuv", "--distorted", "b.yuv", "--width", "16", "--height", "16"],
    );
    assert_eq!(code(&o), 2);
}
