use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::Command;

use gazerank_core::gaze::GazeArtifact;
use gazerank_core::metrics::MetricReport;
use gazerank_core::pipeline::DatasetSplit;

fn gazerank(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_gazerank")).args(args).output().unwrap();
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(out.status.success(), "gazerank {args:?} failed: {stderr}");
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const CONFIG: &str = r#"
[model]
image_height = 32
image_width = 32
patch_size = 8
depth = 1
heads = 2
embed_dim = 16
mlp_ratio = 2

[train]
batch_size = 8
max_epochs = 3
seed = 4

[train.optimizer]
lr = 0.001
"#;

#[test]
fn synthetic_run_through_every_command() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    let config = root.join("run.toml");
    fs::write(&config, CONFIG).unwrap();
    let cfg = ["--config", p(&config)];

    gazerank(&["synth", "--out", p(&data), "--pairs", "20", "--seed", "1"]);
    let manifest = data.join("manifest.csv");
    assert!(manifest.exists());
    let synth_cfg: gazerank_cli::config::Config = gazerank_cli::config::Config::load(&data.join("config.toml")).unwrap();
    assert_eq!(synth_cfg.model.image_height, 32);

    let split_path = root.join("split.json");
    let out = gazerank(&["--seed", "9", "dataset", "split", "--manifest", p(&manifest), "--out", p(&split_path)]);
    assert!(out.contains("train 14, val 2, test 4"), "{out}");
    let split: DatasetSplit = serde_json::from_slice(&fs::read(&split_path).unwrap()).unwrap();
    assert_eq!(split.seed, 9);

    let run = root.join("run");
    let mut args = cfg.to_vec();
    args.extend(["train", "--manifest", p(&manifest), "--split", p(&split_path), "--out", p(&run), "--lambda-gaze", "0.5"]);
    gazerank(&args);
    let log = fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let saved: serde_json::Value = serde_json::from_slice(&fs::read(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(saved["train"]["loss"]["lambda_gaze"], 0.5);
    let ckpt = run.join("checkpoint");

    let preds = root.join("preds.csv");
    let mut args = cfg.to_vec();
    args.extend(["eval", "--checkpoint", p(&ckpt), "--manifest", p(&manifest), "--split", p(&split_path)]);
    args.extend(["--out", p(&preds)]);
    let summary: serde_json::Value = serde_json::from_str(&gazerank(&args)).unwrap();
    assert_eq!(summary["pairs"], 4);
    assert_eq!(fs::read_to_string(&preds).unwrap().lines().count(), 5);

    let metrics = root.join("metrics.csv");
    let bench_summary = root.join("bench.json");
    let mut args = cfg.to_vec();
    args.extend(["attn", "bench", "--checkpoint", p(&ckpt), "--manifest", p(&manifest), "--split", p(&split_path)]);
    args.extend(["--out", p(&metrics), "--summary", p(&bench_summary), "--source", "both"]);
    gazerank(&args);
    let report = MetricReport::read_csv(&metrics).unwrap();
    assert_eq!(report.rows.len(), 4 * 2 * 2);
    let s: serde_json::Value = serde_json::from_slice(&fs::read(&bench_summary).unwrap()).unwrap();
    assert_eq!(s["selected"].as_array().unwrap().len(), 7);

    let overlays = root.join("overlays");
    let out = gazerank(&[
        "attn", "export", "--checkpoint", p(&ckpt), "--manifest", p(&manifest), "--pairs", "pair0000,missing",
        "--source", "rollout", "--out", p(&overlays),
    ]);
    assert!(out.contains("skipped missing"), "{out}");
    assert!(overlays.join("pair0000_left_attn_rollout.png").exists());
}

#[test]
fn gaze_process_writes_both_sides() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let layout = serde_json::json!({
        "screen": {"width": 1920, "height": 1080},
        "left_region": {"x": 100, "y": 240, "width": 800, "height": 600},
        "right_region": {"x": 1020, "y": 240, "width": 800, "height": 600},
    });
    fs::write(root.join("layout.json"), layout.to_string()).unwrap();
    let mut csv = String::from("t_ms,x_px,y_px,valid\n");
    let mut t = 0.0;
    for (x, y) in [(300.0, 400.0), (1500.0, 700.0), (600.0, 500.0)] {
        for k in 0..20 {
            writeln!(csv, "{t},{},{},1", x + (k % 3) as f64, y - (k % 2) as f64).unwrap();
            t += 1000.0 / 60.0;
        }
    }
    writeln!(csv, "{t},,,0").unwrap();
    fs::write(root.join("samples.csv"), csv).unwrap();
    let out_dir = root.join("gaze");
    let out = gazerank(&[
        "gaze", "process", "--samples", p(&root.join("samples.csv")), "--layout", p(&root.join("layout.json")),
        "--out", p(&out_dir),
    ]);
    assert!(out.starts_with("3 fixations (2 left, 1 right)"), "{out}");
    let left = GazeArtifact::load(&out_dir.join("left.json")).unwrap();
    assert_eq!((left.width, left.height), (800, 600));
    for f in ["fixations.json", "left.sgrd", "left.png", "right.json", "right.sgrd", "right.png"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn bad_input_exits_nonzero() {
    let out = Command::new(env!("CARGO_BIN_EXE_gazerank"))
        .args(["dataset", "split", "--manifest", "/nonexistent.csv", "--out", "/tmp/x.json"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
