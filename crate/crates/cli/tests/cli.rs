use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gres_core::geodata::{BBox, Detection, ImageChip};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn gres(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gres"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_jsonl<T: serde::de::DeserializeOwned>(p: &Path) -> Vec<T> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn write_lines(p: &Path, lines: &[Value]) {
    let body: String = lines.iter().map(|v| format!("{v}\n")).collect();
    std::fs::write(p, body).unwrap();
}

fn ingest_and_chip(out: &Path) {
    let geo = fixture("xview_24.geojson");
    let sizes = fixture("xview_24_sizes.json");
    assert!(gres(out, &["ingest", "--input", geo.to_str().unwrap()])
        .status
        .success());
    assert!(gres(out, &["chip", "--sizes", sizes.to_str().unwrap()])
        .status
        .success());
}

fn brute_force_count(chips: &[ImageChip], dets: &[Detection]) -> usize {
    let left_top = |b: &BBox, c: &ImageChip| {
        (
            (b.x as f64 + b.w as f64 / 2.0) < c.width as f64 / 2.0,
            (b.y as f64 + b.h as f64 / 2.0) < c.height as f64 / 2.0,
        )
    };
    dets.iter()
        .filter(|d| {
            let c = chips.iter().find(|c| c.chip_id == d.chip_id).unwrap();
            let freq = dets.iter().filter(|o| o.class_name == d.class_name).count() as f64
                / dets.len() as f64;
            let peers = dets
                .iter()
                .filter(|o| {
                    o.chip_id == d.chip_id
                        && o.class_name == d.class_name
                        && left_top(&o.bbox, c) == left_top(&d.bbox, c)
                })
                .count();
            freq < 0.5 && peers < 2
        })
        .count()
}

#[test]
fn filter_count_matches_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    ingest_and_chip(dir.path());
    let o = gres(dir.path(), &["filter"]);
    assert!(o.status.success());
    let chips: Vec<ImageChip> = read_jsonl(&dir.path().join("chips.jsonl"));
    let dets: Vec<Detection> = read_jsonl(&dir.path().join("detections.jsonl"));
    let want = brute_force_count(&chips, &dets);
    assert!(want > 0);
    assert!(
        stdout(&o).starts_with(&format!("{want} candidates")),
        "{}",
        stdout(&o)
    );
    let rows: Vec<Value> = read_jsonl(&dir.path().join("candidates.jsonl"));
    assert_eq!(rows.len(), want);
}

#[test]
fn stats_table() {
    let dir = tempfile::tempdir().unwrap();
    let empty = gres(dir.path(), &["stats"]);
    assert!(empty.status.success());
    assert!(stdout(&empty).contains("Total"));

    ingest_and_chip(dir.path());
    let o = gres(dir.path(), &["stats"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().next().unwrap().starts_with("Object Category"));
    assert!(text.contains("Small Car"));
}

#[test]
fn malformed_ingest_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        "{\"detection_id\": \"a\", \"image_id\": \"i\", \"class_name\": \"Bus\", \"bbox\": [1, 2, 3, 4]}\nnot json\n",
    )
    .unwrap();
    let o = gres(
        dir.path(),
        &[
            "ingest",
            "--input",
            bad.to_str().unwrap(),
            "--format",
            "jsonl",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn missing_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = gres(
        dir.path(),
        &["ingest", "--input", "/nonexistent/file.geojson"],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = gres(
        dir.path(),
        &[
            "eval",
            "vqa",
            "--pred",
            "/nonexistent/a",
            "--gt",
            "/nonexistent/b",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(gres(dir.path(), &["bogus"]).status.code(), Some(1));
    assert_eq!(gres(dir.path(), &["--help"]).status.code(), Some(0));
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, "{\"seed\": 1, \"no_such_field\": 2}").unwrap();
    assert_eq!(
        gres(dir.path(), &["--config", cfg.to_str().unwrap(), "stats"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn eval_seg_ground_truth_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.jsonl");
    write_lines(
        &gt,
        &[
            serde_json::json!({"id": "a", "width": 4, "height": 4, "rle_counts": [5, 2, 2, 2, 5]}),
            serde_json::json!({"id": "b", "width": 4, "height": 4, "rle_counts": [0, 16]}),
        ],
    );
    let o = gres(
        dir.path(),
        &[
            "eval",
            "seg",
            "--pred",
            gt.to_str().unwrap(),
            "--gt",
            gt.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("eval_seg.json")).unwrap()).unwrap();
    assert_eq!(report["matched"], 2);
    let all = &report["report"]["buckets"]["All"];
    assert_eq!(all["giou"], 1.0);
    assert_eq!(all["ciou"], 1.0);
    let row = stdout(&o)
        .lines()
        .find(|l| l.starts_with("All"))
        .unwrap()
        .to_string();
    assert!(row.contains("1.0000"), "{row}");
}

#[test]
fn eval_caption_identity() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.jsonl");
    let gt = dir.path().join("gt.jsonl");
    let caps = [
        "a white boat docked near the pier",
        "two buses parked along the road",
        "a small shed",
    ];
    write_lines(
        &pred,
        &caps
            .iter()
            .enumerate()
            .map(|(i, c)| serde_json::json!({"id": i.to_string(), "caption": c}))
            .collect::<Vec<_>>(),
    );
    write_lines(
        &gt,
        &caps
            .iter()
            .enumerate()
            .map(|(i, c)| serde_json::json!({"id": i.to_string(), "references": [c]}))
            .collect::<Vec<_>>(),
    );
    let o = gres(
        dir.path(),
        &[
            "eval",
            "caption",
            "--pred",
            pred.to_str().unwrap(),
            "--gt",
            gt.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("eval_caption.json")).unwrap())
            .unwrap();
    let bleu4 = report["report"]["bleu"][3].as_f64().unwrap();
    assert!((bleu4 - 1.0).abs() < 1e-12, "{bleu4}");
    assert!(stdout(&o).contains("100.00"));
}

#[test]
fn eval_vqa_three_of_four() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.jsonl");
    let gt = dir.path().join("gt.jsonl");
    write_lines(
        &pred,
        &[
            serde_json::json!({"id": "1", "answer": "Yes."}),
            serde_json::json!({"id": "2", "answer": "3"}),
            serde_json::json!({"id": "3", "answer": "no"}),
            serde_json::json!({"id": "4", "answer": "left"}),
            serde_json::json!({"id": "5", "answer": "extra"}),
        ],
    );
    write_lines(
        &gt,
        &[
            serde_json::json!({"id": "1", "category": "Presence", "answer": "yes"}),
            serde_json::json!({"id": "2", "category": "Count", "answer": "3"}),
            serde_json::json!({"id": "3", "category": "Comparison", "answer": "No"}),
            serde_json::json!({"id": "4", "category": "Area", "answer": "right"}),
        ],
    );
    let o = gres(
        dir.path(),
        &[
            "eval",
            "vqa",
            "--pred",
            pred.to_str().unwrap(),
            "--gt",
            gt.to_str().unwrap(),
        ],
    );
    assert!(o.status.success());
    let text = stdout(&o);
    let overall = text.lines().find(|l| l.starts_with("Overall")).unwrap();
    assert!(overall.trim_end().ends_with("75.00"), "{overall}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("excluded 1 predictions"));
}

#[test]
fn losses_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = gres(dir.path(), &["losses", "check", "--instances", "20"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let report: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("losses_check.json")).unwrap())
            .unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r["passed"] == true));
}

#[test]
fn run_is_deterministic_across_worker_counts() {
    let geo = fixture("xview_24.geojson");
    let sizes = fixture("xview_24_sizes.json");
    let args = [
        "run",
        "--input",
        geo.to_str().unwrap(),
        "--sizes",
        sizes.to_str().unwrap(),
    ];
    let mut manifests = Vec::new();
    for workers in ["1", "4"] {
        let dir = tempfile::tempdir().unwrap();
        let mut full = vec!["--workers", workers];
        full.extend_from_slice(&args);
        let o = gres(dir.path(), &full);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let m = dir.path().join("manifest");
        manifests.push((
            std::fs::read(m.join("records.jsonl")).unwrap(),
            std::fs::read(m.join("header.json")).unwrap(),
        ));
        let review = gres(dir.path(), &["sample-for-review", "-n", "3"]);
        assert!(review.status.success());
        assert_eq!(
            read_jsonl::<Value>(&dir.path().join("review.jsonl")).len(),
            3
        );
    }
    assert_eq!(manifests[0], manifests[1]);
}
