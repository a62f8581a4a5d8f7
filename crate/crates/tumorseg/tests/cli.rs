use std::path::Path;
use std::process::{Command, Output};

use tumorseg::report::read_csv;

fn tumorseg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tumorseg"))
        .args(args)
        .arg("--quiet")
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: [&str; 8] = [
    "--synthetic", "20,32", "--base-filters", "2", "--epochs", "2", "--batch-size", "4",
];

#[test]
fn train_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--output-dir", "out", "--augmentation", "flip"];
    args.extend(TINY);
    let o = tumorseg(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let exp = dir.path().join("out/train");
    for f in [
        "report.csv", "report.txt", "history.csv", "curves_loss.png", "curves_acc.png",
        "split_manifest.txt", "last.ckpt", "best_val.ckpt", "metrics.json",
    ] {
        assert!(exp.join(f).is_file(), "missing {f}");
    }
    assert_eq!(std::fs::read_dir(exp.join("overlays")).unwrap().count(), 4);
    let stdout = String::from_utf8(o.stdout).unwrap();
    let row: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(row["experiment"], "train");

    let eval = tumorseg(
        &[
            "evaluate", "--checkpoint", "out/train/last.ckpt", "--manifest", "out/train/split_manifest.txt",
            "--synthetic", "20,32",
        ],
        dir.path(),
    );
    assert_eq!(eval.status.code(), Some(0), "{}", stderr(&eval));
    let again: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    let stored = &read_csv(&exp.join("report.csv")).unwrap()[0];
    assert_eq!(again["dice"].as_f64().unwrap(), stored.dice);
    assert_eq!(again["loss"].as_f64().unwrap(), stored.loss);

    let plot = tumorseg(&["plot", "out/train/history.csv", "--output-dir", "plots"], dir.path());
    assert_eq!(plot.status.code(), Some(0), "{}", stderr(&plot));
    assert!(dir.path().join("plots/curves_acc.png").is_file());

    let report = tumorseg(&["report", "out"], dir.path());
    assert_eq!(report.status.code(), Some(0), "{}", stderr(&report));
    assert_eq!(read_csv(&dir.path().join("out/report.csv")).unwrap(), vec![stored.clone()]);
}

#[test]
fn campaign_shares_one_split_and_reports_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
name = "mini"
seed = 3
output_dir = "mini"
overlays = 1

[dataset]
synthetic = { n = 20, size = 32 }

[model]
base_filters = 2
bottleneck_filters = 32

[training]
epochs = 1
batch_size = 4

[[experiment]]
name = "plain"
focal = { alpha = 0.25, gamma = 2.0 }

[[experiment]]
name = "rotated"
focal = { alpha = 0.25, gamma = 2.0 }
augmentation = { kind = "rotation" }

[[experiment]]
name = "blocked"
focal = { alpha = 2.0, gamma = 0.75 }
"#;
    std::fs::write(dir.path().join("mini.toml"), config).unwrap();
    std::fs::create_dir_all(dir.path().join("mini")).unwrap();
    std::fs::write(dir.path().join("mini/blocked"), "a file where a directory should go").unwrap();

    let o = tumorseg(&["campaign", "--config", "mini.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let m1 = std::fs::read_to_string(dir.path().join("mini/plain/split_manifest.txt")).unwrap();
    let m2 = std::fs::read_to_string(dir.path().join("mini/rotated/split_manifest.txt")).unwrap();
    assert_eq!(m1, m2);
    let rows = read_csv(&dir.path().join("mini/report.csv")).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.experiment.as_str()).collect();
    assert_eq!(names, ["plain", "rotated"]);
    let text = std::fs::read_to_string(dir.path().join("mini/report.txt")).unwrap();
    assert!(text.contains("Failed experiments") && text.contains("blocked"));
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 5] = [
        &["campaign"],
        &["campaign", "--preset", "phase1"],
        &["campaign", "--preset", "desk", "--alpha", "-1"],
        &["campaign", "--preset", "unknown"],
        &["train", "--synthetic", "20,50"],
    ];
    for args in cases {
        let o = tumorseg(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    std::fs::write(dir.path().join("bad.toml"), "name = 1\n").unwrap();
    let o = tumorseg(&["campaign", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.toml:1"), "{}", stderr(&o));
}

#[test]
fn print_config_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = tumorseg(&["campaign", "--preset", "phase2", "--dataset-root", "data", "--print-config"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.matches("[[experiment]]").count(), 4);
    std::fs::write(dir.path().join("p2.toml"), &text).unwrap();
    let again = tumorseg(&["campaign", "--config", "p2.toml", "--print-config"], dir.path());
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn augment_writes_dataset_layout() {
    let dir = tempfile::tempdir().unwrap();
    let o = tumorseg(
        &["augment", "--kind", "scaling", "--synthetic", "10,32", "--output-dir", "aug"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let samples = tumorseg::io::load_dataset(&dir.path().join("aug"), 32).unwrap();
    assert_eq!(samples.len(), 15);
    assert_eq!(samples.iter().filter(|s| s.id.ends_with("_scale")).count(), 5);
}

#[test]
fn unpaired_dataset_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let samples = tumorseg_core::dataset::generate_synthetic_dataset(6, 32, 1).unwrap();
    tumorseg::io::write_dataset(&dir.path().join("data"), &samples).unwrap();
    std::fs::remove_file(dir.path().join("data/masks/synth_00002.png")).unwrap();
    let o = tumorseg(
        &["train", "--dataset-root", "data", "--image-size", "32", "--base-filters", "2", "--epochs", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("synth_00002"), "{}", stderr(&o));
}
