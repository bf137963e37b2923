use hetpca::harness::ComparisonRow;
use hetpca::io::*;
use hetpca::model::{generate_experiment, ModelSpec};
use hetpca::theory::Branch;
use hetpca::{Error, Matrix};

fn bundle() -> MatrixBundle {
    let mut b = MatrixBundle::default();
    b.push("a", Matrix::from_row_slice(2, 3, &[1.0, -2.5, 3.0, f64::MIN_POSITIVE, 1e300, -0.0]));
    b.push("empty", Matrix::zeros(0, 4));
    b.push("σ", Matrix::from_element(1, 1, std::f64::consts::PI));
    b
}

#[test]
fn bundle_round_trip() {
    let b = bundle();
    let back = MatrixBundle::from_bytes(&b.to_bytes()).unwrap();
    assert_eq!(back, b);
    assert_eq!(back.get("σ").unwrap()[(0, 0)], std::f64::consts::PI);
    assert!(back.get("missing").is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.hpm");
    b.save(&path).unwrap();
    assert_eq!(MatrixBundle::load(&path).unwrap(), b);
}

#[test]
fn corrupt_bundles_are_parse_errors() {
    let bytes = bundle().to_bytes();
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    let mut trailing = bytes.clone();
    trailing.push(0);
    for bad in [&bytes[..bytes.len() - 3], &bytes[..5], &bad_magic[..], &trailing[..], &[][..]] {
        assert!(matches!(MatrixBundle::from_bytes(bad), Err(Error::Parse(_))));
    }
}

fn row(value: f64, k: usize, with_theory: bool) -> ComparisonRow {
    let m = |s: f64| Matrix::from_fn(k, k, |a, b| s * (1.0 + a as f64) / (1.0 + b as f64) / 3.0);
    ComparisonRow {
        value,
        replicates: 4,
        eps_theory: with_theory.then(|| m(1e-3)),
        rho_theory: with_theory.then(|| m(0.1)),
        eps_emp_mean: m(2e-3),
        eps_emp_stderr: m(1e-4),
        rho_emp_mean: m(0.2),
        rho_emp_stderr: m(0.01),
        transition: !with_theory,
        theory_branch: with_theory.then_some(Branch::Continuation),
        theory_error: (!with_theory).then(|| "continuation failed, at σ̄² 0.5".to_string()),
        sim_seconds: 0.25,
        theory_seconds: 1.5,
    }
}

#[test]
fn sweep_csv_round_trip() {
    let rows = vec![row(0.25, 2, true), row(4.0, 2, false)];
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &rows, 2).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header.split(',').count(), sweep_csv_header(2).len());
    assert!(header.starts_with("value,replicates,transition,theory_branch,eps_theory_1_1,eps_theory_1_2"));
    assert_eq!(read_sweep_csv(&buf[..]).unwrap(), rows);

    let rows = vec![row(1.0, 1, true)];
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &rows, 1).unwrap();
    assert_eq!(read_sweep_csv(&buf[..]).unwrap(), rows);
    assert!(write_sweep_csv(Vec::new(), &rows, 2).is_err());
}

#[test]
fn sweep_svg_draws_both_series() {
    let rows = vec![row(0.25, 2, true), row(0.5, 2, true), row(4.0, 2, false)];
    let svg = sweep_svg(&rows, "rho", "sigma").unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("<polyline") && svg.contains("<circle"));
    assert!(sweep_svg(&rows, "gamma", "sigma").is_err());
}

const CONFIG: &str = r#"
seed = 3

[model]
dims = { n = 40, t = 30, k = 2, s = 1 }
signal = { profile = "tilted-infinity", amplitudes = [0.1, 0.045] }
fluctuations = { xi = [0.0017, 0.000765], tau_xi = 10.0, periodic = true }
noise = { sigma = 0.5 }

[smoothing]
tau_z = 3.0

[sweep]
axis = "sigma"
values = [0.25, 0.5]
"#;

#[test]
fn config_parsing() {
    let cfg = RunConfig::from_toml(CONFIG).unwrap();
    assert_eq!(cfg.seed, 3);
    assert_eq!(cfg.model.dims.n, 40);
    assert_eq!(cfg.smoothing.tau_z, 3.0);
    assert_eq!(cfg.sweep.as_ref().unwrap().replicates, 20);
    assert_eq!(cfg.abcd.components, [0, 1, 2, 3]);
    assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);

    let missing = CONFIG.replace("noise = { sigma = 0.5 }", "");
    let err = RunConfig::from_toml(&missing).unwrap_err();
    assert!(matches!(&err, Error::Parse(m) if m.contains("noise")), "{err}");
    assert!(err.is_validation());

    let unknown = CONFIG.replace("seed = 3", "seed = 3\ncolour = 1");
    assert!(RunConfig::from_toml(&unknown).is_err());
    let negative = CONFIG.replace("tau_z = 3.0", "tau_z = -1.0");
    assert!(RunConfig::from_toml(&negative).unwrap_err().is_validation());
    let zero_n = CONFIG.replace("n = 40", "n = 0");
    assert!(RunConfig::from_toml(&zero_n).unwrap_err().is_validation());
}

#[test]
fn dataset_round_trip_is_exact() {
    let mut m = ModelSpec::reference();
    m.dims.n = 30;
    m.dims.t = 25;
    let ds = generate_experiment(&m, 17).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, 17, dir.path()).unwrap();
    let (back, seed) = load_dataset(dir.path()).unwrap();
    assert_eq!(seed, 17);
    assert_eq!(back.s, ds.s);
    assert_eq!(back.spec, ds.spec);
    assert_eq!(back.truth.signal, ds.truth.signal);
    assert_eq!(back.truth.modes, ds.truth.modes);
    assert_eq!(back.truth.dx, ds.truth.dx);
    assert_eq!(back.truth.kernels, ds.truth.kernels);
    assert_eq!(back.truth.x_filtered, ds.truth.x_filtered);
    assert_eq!(back, ds);

    std::fs::write(dir.path().join(DATASET_FILE), b"HPCAMAT1garbage").unwrap();
    assert!(load_dataset(dir.path()).unwrap_err().is_validation());
    assert!(load_dataset(&dir.path().join("nowhere")).is_err());
}
