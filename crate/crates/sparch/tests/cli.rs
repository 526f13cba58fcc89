//! CLI contract: exit codes, file round-trips, and report consistency.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sparch"))
}

fn write_lattice_weights(path: &Path) {
    let status = bin()
        .args(["weights", "--lattice", "8x8", "--scheme", "queen", "--row-standardize", "--out"])
        .arg(path)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn missing_input_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["fit", "--family", "esparch", "--data", "/nonexistent/data.csv", "--w"])
        .arg(dir.path().join("also-missing.mtx"))
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn malformed_csv_exits_4_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    fs::write(&data, "y\n1.0\nnot-a-number\n").unwrap();
    let w = dir.path().join("w.mtx");
    write_lattice_weights(&w);
    let out = bin()
        .args(["diagnose", "--data"])
        .arg(&data)
        .arg("--w")
        .arg(&w)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3"), "{stderr}");
}

#[test]
fn regularity_violation_exits_3_citing_lemma() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "simulate",
            "--family",
            "sparch_gaussian",
            "--lattice",
            "4x4",
            "--scheme",
            "queen",
            "--row-standardize",
            "--alpha",
            "1.0",
            "--rho",
            "1.9",
            "--no-truncation",
            "--seed",
            "1",
            "--out",
        ])
        .arg(dir.path().join("sim"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Lemma 1"), "{stderr}");
}

#[test]
fn auto_seed_is_echoed_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "simulate",
            "--family",
            "white_noise",
            "--lattice",
            "5x5",
            "--scheme",
            "rook",
            "--alpha",
            "1.0",
            "--rho",
            "0.0",
            "--out",
        ])
        .arg(dir.path().join("sim"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("seed:"), "{stderr}");
}

#[test]
fn weights_roundtrip_through_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = dir.path().join("w.mtx");
    write_lattice_weights(&mtx);
    // mtx -> csv -> mtx preserves every entry.
    let csv = dir.path().join("w.csv");
    let status = bin().args(["weights", "--w"]).arg(&mtx).arg("--out").arg(&csv).status().unwrap();
    assert!(status.success());
    let back = dir.path().join("back.mtx");
    let status = bin().args(["weights", "--w"]).arg(&csv).arg("--out").arg(&back).status().unwrap();
    assert!(status.success());
    assert_eq!(fs::read(&mtx).unwrap(), fs::read(&back).unwrap());
}

#[test]
fn fit_report_revalidates_and_orders_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.mtx");
    write_lattice_weights(&w);
    let status = bin()
        .args([
            "simulate", "--family", "sparch_gaussian", "--lattice", "8x8", "--scheme", "queen",
            "--row-standardize", "--alpha", "1.0", "--rho", "0.4", "--seed", "99", "--out",
        ])
        .arg(dir.path().join("sim"))
        .status()
        .unwrap();
    assert!(status.success());
    let field = fs::read_to_string(dir.path().join("sim/field.csv")).unwrap();
    let mut data = String::from("id,y,x1\n");
    for (i, line) in field.lines().skip(1).enumerate() {
        let y: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        data.push_str(&format!("{},{y},{}\n", i + 1, (i as f64 * 0.37).sin()));
    }
    fs::write(dir.path().join("data.csv"), data).unwrap();

    let out = bin()
        .args(["fit", "--family", "sparch_gaussian", "--data"])
        .arg(dir.path().join("data.csv"))
        .arg("--w")
        .arg(&w)
        .arg("--b-matrix")
        .arg(&w)
        .args(["--covariates", "x1", "--plot-data", "--out"])
        .arg(dir.path().join("fit"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // Coefficient ordering in the report and summary.
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fit/report.json")).unwrap())
            .unwrap();
    let labels: Vec<&str> = report["labels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(
        labels,
        ["alpha (spARCH)", "rho (spARCH)", "lambda (SAR)", "(Intercept)", "x1"]
    );

    // Arithmetic identities hold exactly on the stored fields.
    let ll = report["loglik"].as_f64().unwrap();
    let k = report["k"].as_u64().unwrap() as f64;
    let n = report["n"].as_u64().unwrap() as f64;
    assert_eq!(report["aic"].as_f64().unwrap(), -2.0 * ll + 2.0 * k);
    assert_eq!(report["bic"].as_f64().unwrap(), -2.0 * ll + k * n.ln());
    for i in 0..labels.len() {
        if let Some(se) = report["std_errors"][i].as_f64() {
            let est = report["estimates"][i].as_f64().unwrap();
            assert_eq!(report["t_values"][i].as_f64().unwrap(), est / se);
        }
    }

    // Plot-data files exist alongside the report.
    for name in ["moran_residuals.csv", "moran_squared_residuals.csv", "qq_residuals.csv"] {
        assert!(dir.path().join("fit").join(name).exists(), "{name}");
    }

    // The summary mirrors the significance legend.
    let summary = fs::read_to_string(dir.path().join("fit/summary.txt")).unwrap();
    assert!(summary.contains("Signif. codes: 0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1"));
}

#[test]
fn select_writes_nonincreasing_trace() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.mtx");
    write_lattice_weights(&w);
    let status = bin()
        .args([
            "simulate", "--family", "sparch_gaussian", "--lattice", "8x8", "--scheme", "queen",
            "--row-standardize", "--alpha", "1.0", "--rho", "0.3", "--seed", "5", "--out",
        ])
        .arg(dir.path().join("sim"))
        .status()
        .unwrap();
    assert!(status.success());
    let field = fs::read_to_string(dir.path().join("sim/field.csv")).unwrap();
    let mut data = String::from("y,x1,x2\n");
    for (i, line) in field.lines().skip(1).enumerate() {
        let u: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        let x1 = (i as f64 * 0.61).sin();
        let x2 = (i as f64 * 1.13).cos();
        data.push_str(&format!("{},{x1},{x2}\n", 1.5 * x1 + u));
    }
    fs::write(dir.path().join("data.csv"), data).unwrap();
    let out = bin()
        .args(["select", "--family", "sparch_gaussian", "--data"])
        .arg(dir.path().join("data.csv"))
        .arg("--w")
        .arg(&w)
        .arg("--b-matrix")
        .arg(&w)
        .args(["--candidates", "x1,x2", "--out"])
        .arg(dir.path().join("sel"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.path().join("sel/trace.csv")).unwrap();
    let bics: Vec<f64> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(!bics.is_empty());
    for pair in bics.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-9);
    }
}
