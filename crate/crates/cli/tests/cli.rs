use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bham(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bham"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = bham(args);
    assert!(
        out.status.success(),
        "bham {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn simulate(dir: &Path, family: &str, seed: &str) {
    ok(&[
        "simulate",
        "--family",
        family,
        "--p",
        "4",
        "--seed",
        seed,
        "--n-train",
        "200",
        "--n-test",
        "300",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|c| c.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn predict_on_training_data_reproduces_fitted_values() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "gaussian", "3");
    let out = d.join("out");
    ok(&["fit", "--data", p(&d.join("train.csv")), "--s0", "0.1", "--out-dir", p(&out)]);
    let pred = d.join("pred.csv");
    ok(&[
        "predict",
        "--model",
        p(&out.join("model.bham")),
        "--data",
        p(&d.join("train.csv")),
        "--output",
        p(&pred),
    ]);
    let (fh, fitted) = read_csv(&out.join("fitted.csv"));
    let (ph, predicted) = read_csv(&pred);
    assert_eq!(fh, ["y", "eta", "mu"]);
    assert_eq!(ph, ["eta", "mu"]);
    assert_eq!(fitted.len(), 200);
    for (f, q) in fitted.iter().zip(&predicted) {
        assert!((f[1] - q[0]).abs() < 1e-10);
        assert!((f[2] - q[1]).abs() < 1e-10);
    }
}

#[test]
fn folds_exceeding_rows_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("tiny.csv"), "x,y\n1,2\n2,1\n3,5\n4,4\n5,6\n6,5\n").unwrap();
    let out = bham(&[
        "tune",
        "--data",
        p(&d.join("tiny.csv")),
        "--folds",
        "10",
        "--default-k",
        "3",
        "--out-dir",
        p(&d.join("out")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("folds"));
    assert!(!d.join("out").exists());
}

#[test]
fn unparseable_cell_names_its_location() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.csv"), "x,y\n1,2\nabc,1\n").unwrap();
    let out = bham(&["fit", "--data", p(&d.join("bad.csv")), "--out-dir", p(&d.join("out"))]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line 3") && msg.contains("`x`"), "{msg}");
}

#[test]
fn tune_writes_all_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "gaussian", "5");
    // blank out one predictor cell
    let train = fs::read_to_string(d.join("train.csv")).unwrap();
    let mut lines: Vec<String> = train.lines().map(str::to_string).collect();
    let mut cells: Vec<&str> = lines[4].split(',').collect();
    cells[1] = "";
    lines[4] = cells.join(",");
    fs::write(d.join("train.csv"), lines.join("\n") + "\n").unwrap();

    let out = d.join("out");
    ok(&[
        "tune",
        "--data",
        p(&d.join("train.csv")),
        "--test-data",
        p(&d.join("test.csv")),
        "--folds",
        "5",
        "--s0-count",
        "6",
        "--solver",
        "em-iwls",
        "--out-dir",
        p(&out),
    ]);
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["dropped_rows"], 1);
    assert_eq!(metrics["n_train"], 199);
    assert_eq!(metrics["n_test"], 300);
    assert!(metrics["out_of_sample"]["r2"].as_f64().unwrap() > 0.5);

    let (header, cv) = read_csv(&out.join("cv_table.csv"));
    assert_eq!(header, ["s0", "fold", "criterion", "mean", "se"]);
    assert_eq!(cv.len(), 6 * 5);

    let sel = fs::read_to_string(out.join("selection.csv")).unwrap();
    assert!(sel.starts_with("variable,p_lin,p_nonlin,category\nx1,"));

    // EM-IWLS supplies a covariance, so curves carry bands
    let (header, curve) = read_csv(&out.join("curves").join("x2.csv"));
    assert_eq!(header, ["x", "fit", "se", "lower", "upper"]);
    assert_eq!(curve.len(), 101);
    for r in &curve {
        assert!(r[2] >= 0.0 && (r[3] - (r[1] - 2.0 * r[2])).abs() < 1e-12);
    }

    let timing: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("timing.json")).unwrap()).unwrap();
    let t = |k: &str| timing[k].as_f64().unwrap();
    assert!(t("cv_seconds") >= 0.0 && t("final_seconds") >= 0.0);
    assert!((t("total_seconds") - t("cv_seconds") - t("final_seconds")).abs() < 1e-3);

    let report = ok(&["report", "--model", p(&out.join("model.bham"))]);
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("solver      em_iwls") && text.contains("(intercept)"));
}

#[test]
fn smooth_config_sets_term_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "binomial", "9");
    fs::write(
        d.join("smooth.toml"),
        "default_k = 6\n[smooth.x3]\nkind = \"linear\"\n[smooth.x4]\nk = 4\nknots = \"uniform\"\n",
    )
    .unwrap();
    let out = d.join("out");
    ok(&[
        "fit",
        "--data",
        p(&d.join("train.csv")),
        "--family",
        "binomial",
        "--smooth-config",
        p(&d.join("smooth.toml")),
        "--out-dir",
        p(&out),
    ]);
    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("model.bham")).unwrap()).unwrap();
    let sizes: Vec<usize> = model["terms"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["eigenvalues"].as_array().unwrap().len())
        .collect();
    assert_eq!(sizes, [6, 6, 1, 4]);
    assert!(!out.join("cv_table.csv").exists());

    let bad = bham(&[
        "fit",
        "--data",
        p(&d.join("train.csv")),
        "--smooth-config",
        p(&d.join("missing.toml")),
        "--out-dir",
        p(&d.join("out2")),
    ]);
    assert_ne!(bad.status.code(), Some(0));
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate(a.path(), "binomial", "11");
    simulate(b.path(), "binomial", "11");
    for f in ["train.csv", "test.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
    let (header, rows) = read_csv(&a.path().join("train.csv"));
    assert_eq!(header, ["x1", "x2", "x3", "x4", "y"]);
    assert!(rows.iter().all(|r| r[4] == 0.0 || r[4] == 1.0));
}
