use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hct_core::dataset::active::DatasetManifest;
use hct_core::dataset::review::ReviewStore;
use hct_core::dataset::{AnnotatedBox, BoxSource};
use hct_core::geometry::BBox;
use hct_core::taxonomy::CellClass;
use image::RgbImage;
use serde_json::Value;

const SLIDE: &str = "synthetic://3?width=5120&height=3072&roi=0.5";
const CONFIG: &str = r#"{"grid": {"rows": 6, "cols": 10, "tile_px": 512}}"#;

fn hct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hct"))
        .args(args)
        .env_remove("HCT_ROI_URL")
        .env_remove("HCT_DETECTOR_URL")
        .output()
        .expect("hct runs")
}

fn ok_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(stdout.lines().last().expect("summary line")).expect("summary is JSON")
}

fn err_json(out: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().last().expect("error line")).expect("error is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2_with_json() {
    let out = hct(&["process", "--slide", SLIDE]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(err_json(&out)["error"], "usage");
    assert!(hct(&["--help"]).status.success());
}

#[test]
fn process_writes_report_record_and_pool() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("config.json"), CONFIG).unwrap();
    let out = hct(&[
        "process", "--slide", SLIDE, "--config", p(&d.join("config.json")), "--out", p(&d.join("report.json")),
        "--csv", p(&d.join("report.csv")), "--record", p(&d.join("run.json")), "--decisions", p(&d.join("roi.jsonl")),
        "--pool", p(&d.join("pool")),
    ]);
    let summary = ok_json(&out);
    assert!(summary["cells_counted"].as_u64().unwrap() > 0);

    let report: Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["grid"]["rows"], 6);
    let record: Value = serde_json::from_str(&fs::read_to_string(d.join("run.json")).unwrap()).unwrap();
    assert!(record["roi_backend"].as_str().unwrap().starts_with("synthetic-density"));
    assert!(record["timings"]["wall_s"].as_f64().unwrap() >= 0.0);
    assert!(fs::read_to_string(d.join("report.csv")).unwrap().starts_with("class,count,percentage\n"));
    assert_eq!(fs::read_to_string(d.join("roi.jsonl")).unwrap().lines().count(), record["tiles_streamed"].as_u64().unwrap() as usize);

    let images = fs::read_dir(d.join("pool/images")).unwrap().count();
    assert_eq!(images, record["tiles_gated"].as_u64().unwrap() as usize);
    assert_eq!(fs::read_dir(d.join("pool/predictions")).unwrap().count(), images);
}

#[test]
fn unreachable_detector_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let out = Command::new(env!("CARGO_BIN_EXE_hct"))
        .args(["process", "--slide", SLIDE, "--out", p(&dir.path().join("r.json"))])
        .env("HCT_DETECTOR_URL", format!("http://127.0.0.1:{port}/detect"))
        .env_remove("HCT_ROI_URL")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(err_json(&out)["error"], "backend-unavailable");
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn synth_slide_round_trips_through_process() {
    let dir = tempfile::tempdir().unwrap();
    let tif = dir.path().join("s.tif");
    ok_json(&hct(&["synth-slide", "--seed", "4", "--out", p(&tif), "--width", "2048", "--height", "1536", "--roi", "0.6"]));
    let manifest_dir = dir.path().join("m");
    ok_json(&hct(&["synth-slide", "--seed", "4", "--out", p(&manifest_dir), "--width", "2048", "--height", "1536", "--roi", "0.6"]));
    fs::write(dir.path().join("c.json"), r#"{"grid": {"rows": 3, "cols": 4, "tile_px": 512}}"#).unwrap();

    let mut reports = Vec::new();
    for (i, slide) in [&tif, &manifest_dir].iter().enumerate() {
        let out = dir.path().join(format!("r{i}.csv"));
        let json = dir.path().join(format!("r{i}.json"));
        ok_json(&hct(&["process", "--slide", p(slide), "--config", p(&dir.path().join("c.json")), "--out", p(&json), "--csv", p(&out)]));
        reports.push(fs::read_to_string(out).unwrap());
    }
    // same pixels through two containers give the same counts
    assert_eq!(reports[0], reports[1]);
}

fn write_yolo_dir(dir: &Path, files: &[(&str, &str)]) {
    fs::create_dir_all(dir).unwrap();
    for (name, text) in files {
        fs::write(dir.join(name), text).unwrap();
    }
}

#[test]
fn eval_det_scores_a_small_set() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = (dir.path().join("gt"), dir.path().join("pred"));
    write_yolo_dir(&gt, &[("a.txt", "0 0.2 0.2 0.1 0.1\n0 0.7 0.7 0.1 0.1\n"), ("b.txt", "3 0.5 0.5 0.2 0.2\n")]);
    write_yolo_dir(&pred, &[("a.txt", "0 0.2 0.2 0.1 0.1 0.9\n0 0.4 0.4 0.1 0.1 0.8\n"), ("b.txt", "3 0.5 0.5 0.2 0.2 0.7\n")]);
    let csv = dir.path().join("table.csv");
    let conf = dir.path().join("confusion.csv");
    let summary = ok_json(&hct(&[
        "eval-det", "--pred", p(&pred), "--gt", p(&gt), "--out", p(&csv), "--confusion", p(&conf), "--json", p(&dir.path().join("t.json")),
    ]));
    assert_eq!(summary["classes"], 2);
    let table = fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("Object class,Precision,Recall,F1 score,Log-average miss rate,AP@0.5\n"));
    assert!(table.contains("\nAverage,"));
    // class 0: TP then FP over 2 gts -> 11-pt AP 6/11; class 3 perfect
    let map = summary["map"].as_f64().unwrap();
    assert!((map - (6.0 / 11.0 + 1.0) / 2.0).abs() < 1e-12, "{map}");
    assert!(fs::read_to_string(&conf).unwrap().starts_with("ground_truth,"));
}

#[test]
fn eval_roi_pools_and_averages_folds() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("s.csv");
    fs::write(&scores, "p,label,fold\n0.9,1,a\n0.6,0,a\n0.4,1,a\n0.1,0,a\n0.8,1,b\n0.7,1,b\n0.3,0,b\n0.2,0,b\n").unwrap();
    let out = dir.path().join("roi.json");
    assert!(hct(&["eval-roi", "--scores", p(&scores), "--out", p(&out)]).status.success());
    let v: Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["pooled"]["confusion"], serde_json::json!({"tp": 3, "fp": 1, "tn": 3, "fn": 1}));
    assert_eq!(v["folds"][0]["auc"], 0.75);
    assert_eq!(v["folds"][1]["auc"], 1.0);
    assert_eq!(v["mean_roc"]["fold_aucs"], serde_json::json!([0.75, 1.0]));

    fs::write(&scores, "score,label\n0.5,1\n").unwrap();
    let bad = hct(&["eval-roi", "--scores", p(&scores)]);
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(err_json(&bad)["error"], "input");
}

fn labelled_dir(root: &Path, n: usize) {
    fs::create_dir_all(root.join("images")).unwrap();
    fs::create_dir_all(root.join("labels")).unwrap();
    for i in 0..n {
        RgbImage::from_pixel(32, 32, image::Rgb([200, 100, (i * 10) as u8])).save(root.join(format!("images/t{i:02}.png"))).unwrap();
        let cls = if i % 4 == 0 { 3 } else { 0 };
        fs::write(root.join(format!("labels/t{i:02}.txt")), format!("{cls} 0.5 0.5 0.25 0.25\n1 0.25 0.25 0.2 0.2\n")).unwrap();
    }
}

#[test]
fn split_then_augment_uses_training_records_only() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    labelled_dir(&data, 20);
    let plan = dir.path().join("plan.json");
    let s = ok_json(&hct(&["dataset", "split", "--data", p(&data), "--out", p(&plan), "--seed", "7"]));
    assert_eq!(s["records"], 20);
    let held: usize = s["folds"].as_array().unwrap().iter().map(|f| (f["validation"].as_u64().unwrap() + f["test"].as_u64().unwrap()) as usize).sum();
    assert_eq!(held, 20);

    let out = dir.path().join("aug");
    let a = ok_json(&hct(&["dataset", "augment", "--data", p(&data), "--plan", p(&plan), "--fold", "0", "--out", p(&out), "--copies", "2"]));
    let training = a["training_records"].as_u64().unwrap() as usize;
    assert_eq!(a["written"].as_u64().unwrap() as usize, 2 * training);
    let plan_v: Value = serde_json::from_str(&fs::read_to_string(&plan).unwrap()).unwrap();
    let held_out: Vec<String> = ["validation", "test"]
        .iter()
        .flat_map(|k| plan_v["folds"][0][k].as_array().unwrap().iter().map(|t| t["file"].as_str().unwrap().to_string()).collect::<Vec<_>>())
        .collect();
    assert_eq!(training + held_out.len(), 20);
    let log = fs::read_to_string(out.join("augment_log.jsonl")).unwrap();
    for line in log.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(!held_out.contains(&v["source"]["file"].as_str().unwrap().to_string()));
    }

    let bad = hct(&["dataset", "augment", "--data", p(&data), "--plan", p(&plan), "--fold", "9", "--out", p(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn oversample_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.csv");
    fs::write(&table, "name,current,target\nroi,4750,28500\nrare,7,308\n").unwrap();
    let out = dir.path().join("plan.json");
    assert!(hct(&["dataset", "oversample", "--table", p(&table), "--out", p(&out)]).status.success());
    let v: Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["groups"][0]["base_factor"], 6);
    assert_eq!(v["groups"][1]["base_factor"], 44);

    fs::write(&table, "name,current,target\nx,10,5\n").unwrap();
    let bad = hct(&["dataset", "oversample", "--table", p(&table)]);
    assert_eq!(err_json(&bad)["error"], "oversample");
}

fn pool_dir(root: &Path) {
    fs::create_dir_all(root.join("images")).unwrap();
    fs::create_dir_all(root.join("predictions")).unwrap();
    for (i, cls) in [0u8, 3, 9, 0].iter().enumerate() {
        RgbImage::new(16, 16).save(root.join(format!("images/p{i}.png"))).unwrap();
        fs::write(root.join(format!("predictions/p{i}.txt")), format!("{cls} 0.5 0.5 0.3 0.3 0.8\n")).unwrap();
    }
}

#[test]
fn active_learning_loop() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    labelled_dir(&data, 6);
    let manifest = dir.path().join("manifest.json");
    assert_eq!(ok_json(&hct(&["al", "init", "--data", p(&data), "--manifest", p(&manifest)]))["version"], 1);

    let pool = dir.path().join("pool");
    pool_dir(&pool);
    let pkg = dir.path().join("pkg");
    let q = ok_json(&hct(&["al", "query", "--pool", p(&pool), "--manifest", p(&manifest), "--out", p(&pkg), "--n", "2"]));
    assert_eq!(q["queued"], 2);
    let m = DatasetManifest::load(&manifest).unwrap();
    assert_eq!(m.pending.len(), 2);

    // a second query skips tiles already pending
    let pkg2 = dir.path().join("pkg2");
    let q2 = ok_json(&hct(&["al", "query", "--pool", p(&pool), "--manifest", p(&manifest), "--out", p(&pkg2), "--n", "10"]));
    assert_eq!(q2["queued"], 2);

    let mut store = ReviewStore::open(&pkg).unwrap();
    for entry in store.queue() {
        let mut boxes = store.predictions(&entry.id).unwrap().boxes;
        for b in &mut boxes {
            b.source = BoxSource::ModelConfirmed;
            b.confidence = None;
        }
        boxes.push(AnnotatedBox::human(BBox::new(0.2, 0.2, 0.1, 0.1), CellClass::Basophil));
        store.submit(&entry.id, boxes, None).unwrap();
    }
    drop(store);
    let merged = ok_json(&hct(&["al", "merge", "--package", p(&pkg), "--manifest", p(&manifest), "--timestamp", "2026-01-01T00:00:00Z"]));
    assert_eq!((merged["previous_version"].as_u64(), merged["version"].as_u64()), (Some(1), Some(2)));
    let m = DatasetManifest::load(&manifest).unwrap();
    assert_eq!(m.records.len(), 8);
    assert_eq!(m.pending.len(), 2);
    assert_eq!(m.provenance[0].class_deltas[&CellClass::Basophil], 2);

    let export = dir.path().join("export");
    ok_json(&hct(&["al", "export", "--manifest", p(&manifest), "--out", p(&export), "--format", "voc"]));
    assert_eq!(fs::read_dir(&export).unwrap().count(), 8);
}
