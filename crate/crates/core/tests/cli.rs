use std::path::Path;
use std::process::{Command, Output};

use mdt_augment::positioning::read_errors_csv;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mdt-augment"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    let out = bin().args(args).current_dir(cwd).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Highway preset with train/val/test parts under `dir/d`.
fn scenario(dir: &Path) {
    run(
        &[
            "--seed", "5", "--out", "d", "generate", "--preset", "highway", "--split",
        ],
        dir,
    );
}

#[test]
fn generate_is_deterministic_and_has_all_cells() {
    let dir = tempfile::tempdir().unwrap();
    run(
        &["--out", "a", "generate", "--preset", "city_center"],
        dir.path(),
    );
    run(
        &["--out", "b", "generate", "--preset", "city_center"],
        dir.path(),
    );
    for f in [
        "city_center.csv",
        "city_center.truth.csv",
        "city_center.meta.json",
    ] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f} differs"
        );
    }
    let csv = std::fs::read_to_string(dir.path().join("a/city_center.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header.matches("RSRP_PCI_").count(), 14);
}

#[test]
fn missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["generate", "--config", "no_such_scenario.toml"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_scenario.toml"));
}

#[test]
fn bad_arguments_exit_with_one() {
    let out = bin().args(["augment", "--rate", "x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unreadable_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "Lon,Lat\n").unwrap();
    let out = bin()
        .args(["augment", "--train", "bad.csv", "--rate", "2"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn augment_rates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scenario(d);
    run(
        &[
            "--out",
            "d/a1.csv",
            "augment",
            "--train",
            "d/highway.train.csv",
            "--rate",
            "1",
        ],
        d,
    );
    assert_eq!(
        std::fs::read(d.join("d/a1.csv")).unwrap(),
        std::fs::read(d.join("d/highway.train.csv")).unwrap()
    );
    run(
        &[
            "--seed",
            "2",
            "--out",
            "d/a5.csv",
            "augment",
            "--train",
            "d/highway.train.csv",
            "--rate",
            "5",
        ],
        d,
    );
    let train = std::fs::read_to_string(d.join("d/highway.train.csv")).unwrap();
    let aug = std::fs::read_to_string(d.join("d/a5.csv")).unwrap();
    let m = train.lines().count() - 1;
    assert_eq!(aug.lines().count() - 1, 5 * m);
    // original rows first, unchanged
    for (a, b) in train.lines().zip(aug.lines()) {
        assert_eq!(a, b);
    }
    let prov = json(&d.join("d/a5.provenance.json"));
    assert_eq!(prov["rate"], 5);
    assert_eq!(prov["seed"], 2);
    assert_eq!(prov["synthetic"], 4 * m);
}

#[test]
fn evaluate_reports_match_error_vector() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scenario(d);
    let args = [
        "--out",
        "ev",
        "evaluate",
        "--db",
        "d/highway.train.csv",
        "--test",
        "d/highway.test.csv",
        "--truth",
        "d/highway.test.truth.csv",
    ];
    run(&args, d);
    let errors = read_errors_csv(&d.join("ev/errors.csv")).unwrap();
    let report = json(&d.join("ev/report.json"));
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    assert!((report["mean_error_m"].as_f64().unwrap() - mean).abs() < 1e-9);
    let first = std::fs::read(d.join("ev/errors.csv")).unwrap();
    run(&args, d);
    assert_eq!(first, std::fs::read(d.join("ev/errors.csv")).unwrap());
}

#[test]
fn self_positioning_with_one_neighbour_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scenario(d);
    run(
        &[
            "--out",
            "ev",
            "evaluate",
            "--db",
            "d/highway.train.csv",
            "--test",
            "d/highway.train.csv",
            "--k",
            "1",
        ],
        d,
    );
    assert_eq!(
        json(&d.join("ev/report.json"))["mean_error_m"].as_f64(),
        Some(0.0)
    );
}

#[test]
fn sweep_with_only_the_original_rate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scenario(d);
    run(
        &[
            "--out",
            "sw",
            "sweep",
            "--train",
            "d/highway.train.csv",
            "--test",
            "d/highway.test.csv",
            "--rates",
            "1",
            "--runs",
            "3",
        ],
        d,
    );
    let rep = json(&d.join("sw/sweep.json"));
    let runs = rep["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 3);
    assert!(runs
        .iter()
        .all(|r| r["mean_error_m"] == runs[0]["mean_error_m"]));
    assert_eq!(rep["provenance"]["spec"]["n_runs"], 3);
}

#[test]
fn comparison_agrees_with_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scenario(d);
    let common = [
        "--train",
        "d/highway.train.csv",
        "--test",
        "d/highway.test.csv",
        "--rates",
        "1,3",
        "--runs",
        "2",
    ];
    let mut args = vec![
        "--seed",
        "9",
        "--out",
        "cmp",
        "compare-models",
        "--models",
        "kde-knn,gmm-knn",
    ];
    args.extend(common);
    run(&args, d);
    let table = json(&d.join("cmp/comparison.json"));
    let cells = table["cells"].as_array().unwrap();
    assert_eq!(cells[0][0]["mean_error_m"], cells[0][1]["mean_error_m"]);

    let mut args = vec!["--seed", "9", "--out", "sw", "sweep", "--spatial", "gmm"];
    args.extend(common);
    run(&args, d);
    let sweep = json(&d.join("sw/sweep.json"));
    assert_eq!(
        cells[1][1]["mean_error_m"],
        sweep["per_rate"][1]["mean_error_m"]
    );
}

#[test]
fn ks_test_and_spatial_fit_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scenario(d);
    run(
        &[
            "--out",
            "ks.json",
            "ks-test",
            "d/highway.train.csv",
            "d/highway.val.csv",
        ],
        d,
    );
    let ks = json(&d.join("ks.json"));
    let p = ks["p_value"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
    run(
        &[
            "--out",
            "m.toml",
            "fit-spatial",
            "--train",
            "d/highway.train.csv",
            "--model",
            "gmm",
        ],
        d,
    );
    let text = std::fs::read_to_string(d.join("m.toml")).unwrap();
    assert!(text.contains("kind = \"gmm\""));
}
