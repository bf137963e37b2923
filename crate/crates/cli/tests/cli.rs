use std::path::Path;
use std::process::{Command, Output};

const BASE: &str = r#"
seed = 4

[model]
dims = { n = 30, t = 24, k = 2, s = 1 }
signal = { profile = "tilted-infinity", amplitudes = [0.1, 0.045] }
fluctuations = { xi = [0.0017, 0.000765], tau_xi = 10.0, periodic = true }
noise = { sigma = 0.3 }

[smoothing]
tau_z = 2.0
"#;

fn hetpca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetpca")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn csv_values(path: &Path, observable: &str) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| l.starts_with(&format!("{observable},")))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn generate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", BASE);
    let data = dir.path().join("data");
    let d = data.to_str().unwrap();
    ok(&hetpca(&["generate", "--config", &cfg, "--out", d]));
    assert!(data.join("dataset.hpm").exists() && data.join("ground_truth.json").exists());

    let est = dir.path().join("est");
    let e = est.to_str().unwrap();
    ok(&hetpca(&["estimate", "--input", d, "--config", &cfg, "--out", e, "--format", "csv"]));
    let rho = csv_values(&est.join("recovery.csv"), "rho_emp");
    assert_eq!(rho.len(), 4);
    assert!(rho[0] >= 0.0 && rho[0] < 1.0);
    assert!(est.join("recovery.hpm").exists());

    ok(&hetpca(&["estimate", "--input", d, "--out", e]));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(est.join("recovery.json")).unwrap()).unwrap();
    assert_eq!(json["permutation"].as_array().unwrap().len(), 2);

    // a different seed gives a different dataset
    let other = dir.path().join("other");
    ok(&hetpca(&["generate", "--config", &cfg, "--seed", "5", "--out", other.to_str().unwrap()]));
    assert_ne!(std::fs::read(data.join("dataset.hpm")).unwrap(), std::fs::read(other.join("dataset.hpm")).unwrap());
}

#[test]
fn invalid_inputs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = write_config(dir.path(), "missing.toml", &BASE.replace("noise = { sigma = 0.3 }", ""));
    let o = hetpca(&["generate", "--config", &missing, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("noise"));

    let bad = dir.path().join("bad");
    std::fs::create_dir_all(&bad).unwrap();
    std::fs::write(bad.join("dataset.hpm"), b"not a bundle").unwrap();
    std::fs::write(bad.join("ground_truth.json"), b"{}").unwrap();
    let o = hetpca(&["estimate", "--input", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(dir.path(), "run.toml", BASE);
    assert_eq!(hetpca(&["estimate", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(hetpca(&["theory"]).status.code(), Some(2));
    let empty = write_config(dir.path(), "empty.toml", &format!("{BASE}\n[sweep]\naxis = \"sigma\"\nvalues = []\n"));
    let o = hetpca(&["sweep", "--config", &empty, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = hetpca(&["sweep", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn noiseless_theory_has_no_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE.replace("sigma = 0.3", "sigma = 0.0").replace("xi = [0.0017, 0.000765]", "xi = [0.0, 0.0]");
    let out = dir.path().join("th");
    // smoothing damps the two frequencies unequally, so x̄ rows are no longer
    // orthogonal and noiseless PCA returns a rotated basis: ρ = sin²θ · I
    let cfg = write_config(dir.path(), "smoothed.toml", &text);
    ok(&hetpca(&["theory", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "csv"]));
    let rho = csv_values(&out.join("prediction.csv"), "rho");
    assert!(rho[0] > 1e-3 && (rho[0] - rho[3]).abs() < 1e-12 && rho[1].abs() < 1e-12);

    let cfg = write_config(dir.path(), "run.toml", &text.replace("tau_z = 2.0", "tau_z = 0.0"));
    ok(&hetpca(&["theory", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "csv"]));
    let rho = csv_values(&out.join("prediction.csv"), "rho");
    assert_eq!(rho.len(), 4);
    assert!(rho.iter().all(|v| v.abs() < 1e-12));
    assert!(csv_values(&out.join("prediction.csv"), "eps").iter().all(|v| v.abs() < 1e-12));
    assert!(out.join("path.csv").exists());

    ok(&hetpca(&["theory", "--config", &cfg, "--out", out.to_str().unwrap()]));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("prediction.json")).unwrap()).unwrap();
    assert_eq!(json["diagnostics"]["branch"], "continuation");
}

#[test]
fn single_replicate_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{BASE}\n[sweep]\naxis = \"sigma\"\nvalues = [0.1, 0.3]\nreplicates = 1\n");
    let cfg = write_config(dir.path(), "run.toml", &text);
    let out = dir.path().join("sw");
    ok(&hetpca(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "csv", "--svg"]));
    let table = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for r in &rows {
        assert_eq!(r[col("replicates")], "1");
        assert_eq!(r[col("eps_emp_stderr_1_1")].parse::<f64>().unwrap(), 0.0);
        assert!(!r[col("eps_theory_1_1")].is_empty());
    }
    assert!(std::fs::read_to_string(out.join("rho.svg")).unwrap().starts_with("<svg"));
    assert!(out.join("eps.svg").exists());
}

#[test]
fn component_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", BASE);
    let out = dir.path().join("abcd");
    ok(&hetpca(&["abcd-report", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "csv"]));
    let table = std::fs::read_to_string(out.join("abcd.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 4 * 2);
    assert!(table.lines().nth(1).unwrap().starts_with("A,0,1,1,"));

    let k1 = BASE
        .replace("k = 2", "k = 1")
        .replace(r#"signal = { profile = "tilted-infinity", amplitudes = [0.1, 0.045] }"#, r#"signal = { profile = "sine", amplitude = 0.1 }"#)
        .replace("xi = [0.0017, 0.000765]", "xi = [0.0017]");
    let cfg = write_config(dir.path(), "k1.toml", &k1);
    assert_eq!(hetpca(&["abcd-report", "--config", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(2));
}
