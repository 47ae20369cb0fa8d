//! End-to-end checks of the `dyce` binary: artifacts, exit codes,
//! determinism, and the CSV surfaces.

use std::path::Path;
use std::process::Command;

fn dyce() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dyce"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.conf");
    std::fs::write(&path, body).unwrap();
    path
}

fn small_config(out_dir: &Path) -> String {
    format!(
        "seed = 3\nout_dir = {}\nsteps = 60\nlr = 0.05\nheight = 4\nwidth = 4\n\
         raw_channels = 3\nn_classes = 3\nsource_images = 10\nlabeled_target = 4\n\
         unlabeled_target = 20\nchannels = 6\nbatch_labeled = 3\nbatch_unlabeled = 3\n",
        out_dir.display()
    )
}

#[test]
fn train_writes_all_three_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let config = write_config(tmp.path(), &small_config(&out));
    let status = dyce().args(["train", "--config"]).arg(&config).status().unwrap();
    assert!(status.success());
    assert!(out.join("runlog.jsonl").is_file());
    assert!(out.join("metrics.csv").is_file());
    assert!(out.join("checkpoint/manifest.json").is_file());
    assert!(out.join("checkpoint/student_decoder_w.dyct").is_file());

    // the run log is one JSON record per step
    let log = std::fs::read_to_string(out.join("runlog.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 60);
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for key in ["step", "lr", "total", "supervised", "consistency", "f_h", "f_c", "wall_ms"] {
        assert!(first.get(key).is_some(), "run log lacks {key}");
    }

    // checkpoint tensors decode and carry sane shapes
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("checkpoint/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["step"], 60);
    let decoder = dyce_cli::io::read_dyct(&out.join("checkpoint/student_decoder_w.dyct")).unwrap();
    assert_eq!(decoder.shape(), &[3, 3]);
}

#[test]
fn same_config_and_seed_give_byte_identical_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out in [&out_a, &out_b] {
        let config = write_config(tmp.path(), &small_config(out));
        let status = dyce()
            .args(["train", "--seed", "11", "--config"])
            .arg(&config)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(out_a.join("metrics.csv")).unwrap();
    let b = std::fs::read(out_b.join("metrics.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_config_exits_2_with_the_field_named() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "th = 1.7\n");
    let output = dyce().args(["train", "--config"]).arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("th"), "stderr was: {stderr}");

    let missing = tmp.path().join("nope.conf");
    let output = dyce().args(["train", "--config"]).arg(&missing).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn gradcheck_passes_and_fault_injection_fails_naming_dyce() {
    let output = dyce()
        .args(["gradcheck", "--instances", "5"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    for component in dyce_core::oracle::CHECKED_COMPONENTS {
        let occurrences = stdout
            .lines()
            .filter(|l| l.split_whitespace().nth(1) == Some(component))
            .count();
        assert_eq!(occurrences, 1, "component {component} listed {occurrences} times");
    }

    let output = dyce()
        .args(["gradcheck", "--instances", "3", "--inject", "dyce-sign-flip"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("dyce"), "stderr was: {stderr}");
}

#[test]
fn ablate_emits_one_row_per_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("unused");
    let config = write_config(tmp.path(), &small_config(&out_dir));

    let empty_sweep = tmp.path().join("empty.sweep");
    std::fs::write(&empty_sweep, "# nothing here\n").unwrap();
    let out_csv = tmp.path().join("empty.csv");
    let status = dyce()
        .args(["ablate", "--config"])
        .arg(&config)
        .arg("--sweep")
        .arg(&empty_sweep)
        .arg("--out")
        .arg(&out_csv)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out_csv).unwrap();
    assert_eq!(csv.lines().count(), 1, "header-only CSV expected");

    let sweep = tmp.path().join("omega.sweep");
    std::fs::write(&sweep, "omega=0.25\nomega=0.5\nomega=0.75\n").unwrap();
    let out_csv = tmp.path().join("omega.csv");
    let status = dyce()
        .env("DYCE_THREADS", "2")
        .args(["ablate", "--config"])
        .arg(&config)
        .arg("--sweep")
        .arg(&sweep)
        .arg("--out")
        .arg(&out_csv)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out_csv).unwrap();
    assert_eq!(csv.lines().count(), 4, "header plus three rows:\n{csv}");
    assert!(csv.lines().nth(1).unwrap().starts_with("omega=0.25,"));
}

#[test]
fn report_aggregates_finished_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = tmp.path().join("runs");
    for (name, seed) in [("first", "1"), ("second", "2")] {
        let out = runs.join(name);
        let config = write_config(tmp.path(), &small_config(&out));
        let status = dyce()
            .args(["train", "--seed", seed, "--config"])
            .arg(&config)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let out_csv = tmp.path().join("summary.csv");
    let status = dyce()
        .args(["report", "--runs"])
        .arg(&runs)
        .arg("--out")
        .arg(&out_csv)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out_csv).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.contains("first,"));
    assert!(csv.contains("second,"));
}

#[test]
fn loss_diagnostics_serialize_to_json() {
    use dyce_core::losses::{dyce_loss, BatchPrediction, DyceConfig};
    let batch = BatchPrediction::new(
        dyce_core::tensor::Tensor::matrix(2, 2, vec![0.8, 0.2, 0.3, 0.7]).unwrap(),
        vec![0, 1],
    )
    .unwrap();
    let result = dyce_loss(&batch, &DyceConfig::new(0.5, 0.5).unwrap()).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&serde_json::to_string(&result.diagnostics).unwrap()).unwrap();
    for key in ["value", "per_class", "clamp_count", "f_h", "f_c"] {
        assert!(json.get(key).is_some(), "diagnostics lack {key}");
    }
    assert_eq!(json["f_h"], 1);
}

#[test]
fn dataset_export_writes_blobs_and_index() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let mut body = small_config(&out);
    body.push_str("export_data = on\n");
    let config = write_config(tmp.path(), &body);
    let status = dyce().args(["train", "--config"]).arg(&config).status().unwrap();
    assert!(status.success());

    let index: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("dataset/index.json")).unwrap())
            .unwrap();
    let splits = index["splits"].as_array().unwrap();
    assert_eq!(splits.len(), 3);
    assert_eq!(splits[0]["images"].as_array().unwrap().len(), 10);
    // unlabeled entries omit their label file
    assert!(splits[2]["images"][0]["labels"].is_null());
    let image =
        dyce_cli::io::read_dyct(&out.join("dataset/source_00000_image.dyct")).unwrap();
    assert_eq!(image.shape(), &[4, 4, 3]);
}
