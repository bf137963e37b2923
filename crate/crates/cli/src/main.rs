//! hetpca: generate data, run PCA recovery, solve the theory, run sweeps.

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hetpca::estimator::run_pca_pipeline;
use hetpca::harness::{abcd_component_report, run_sweep, smoothing_for, AbcdReport, SweepSpec};
use hetpca::io::{load_dataset, save_dataset, sweep_svg, write_json, write_sweep_csv, MatrixBundle, RunConfig};
use hetpca::model::{generate_experiment, ModeLayout};
use hetpca::theory::{precompute, precompute_with_modes, predict, TheoryPrediction};
use hetpca::Matrix;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hetpca", version, about = "PCA recovery experiments and replica-theory predictions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a dataset and write it with its ground truth.
    Generate(Common),
    /// Run the PCA pipeline on a generated dataset.
    Estimate(Common),
    /// Solve the theory for the configured model.
    Theory(Common),
    /// Run the configured parameter sweep.
    Sweep(Common),
    /// Per-component loadings and error bars for four labelled components.
    AbcdReport(Common),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Also write SVG plots (sweep only).
    #[arg(long)]
    svg: bool,
    /// Dataset directory (estimate only).
    #[arg(long)]
    input: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let path = self.config.as_ref().ok_or_else(|| hetpca::Error::param("--config", "is required"))?;
        let mut cfg = RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> anyhow::Result<&Path> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<hetpca::Error>() {
        Some(he) if he.is_validation() => 2,
        Some(he) if he.is_numerical() => 3,
        Some(_) => 4,
        None if e.downcast_ref::<std::io::Error>().is_some() => 4,
        None => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Generate(c) => generate(&c),
        Cmd::Estimate(c) => estimate(&c),
        Cmd::Theory(c) => theory(&c),
        Cmd::Sweep(c) => sweep(&c),
        Cmd::AbcdReport(c) => abcd(&c),
    }
}

fn generate(c: &Common) -> anyhow::Result<()> {
    let cfg = c.config()?;
    let ds = generate_experiment(&cfg.model, cfg.seed)?;
    save_dataset(&ds, cfg.seed, c.out_dir()?)?;
    println!("wrote dataset N={} T={} K={} to {}", ds.spec.dims.n, ds.spec.dims.t, ds.spec.dims.k, c.out.display());
    Ok(())
}

/// Flat `observable,k,l,value` table with 1-based indices.
fn matrix_table(entries: &[(&str, &Matrix)]) -> String {
    let mut s = String::from("observable,k,l,value\n");
    for (name, m) in entries {
        for a in 0..m.nrows() {
            for b in 0..m.ncols() {
                s.push_str(&format!("{name},{},{},{}\n", a + 1, b + 1, m[(a, b)]));
            }
        }
    }
    s
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(hetpca::Error::from)
        .with_context(|| format!("writing {}", path.display()))
}

fn estimate(c: &Common) -> anyhow::Result<()> {
    let input = c.input.as_ref().ok_or_else(|| hetpca::Error::param("--input", "is required"))?;
    let (ds, _) = load_dataset(input).with_context(|| format!("loading dataset from {}", input.display()))?;
    let tau_z = match &c.config {
        Some(_) => c.config()?.smoothing.tau_z,
        None => 0.0,
    };
    let res = run_pca_pipeline(&ds, &smoothing_for(tau_z)?)?;
    let out = c.out_dir()?;
    let mut b = MatrixBundle::default();
    b.push("v", res.v.clone());
    b.push("y", res.y.clone());
    b.push("y_smoothed", res.y_smoothed.clone());
    b.push("eps_emp", res.eps_emp.clone());
    b.push("eps_smoothed", res.eps_smoothed.clone());
    b.push("rho_emp", res.rho_emp.clone());
    b.push("eigenvalues", Matrix::from_row_slice(1, res.eigenvalues.len(), &res.eigenvalues));
    b.save(&out.join("recovery.hpm"))?;
    match c.format {
        Format::Csv => write_text(
            &out.join("recovery.csv"),
            &matrix_table(&[("eps_emp", &res.eps_emp), ("eps_smoothed", &res.eps_smoothed), ("rho_emp", &res.rho_emp)]),
        )?,
        Format::Json => write_json(
            &out.join("recovery.json"),
            &serde_json::json!({
                "eps_emp": res.eps_emp,
                "eps_smoothed": res.eps_smoothed,
                "rho_emp": res.rho_emp,
                "eigenvalues": res.eigenvalues,
                "permutation": res.alignment.permutation,
                "signs": res.alignment.signs,
            }),
        )?,
    }
    println!("eps diag {:?}, rho diag {:?}", res.eps_emp.diagonal().as_slice(), res.rho_emp.diagonal().as_slice());
    Ok(())
}

fn theory(c: &Common) -> anyhow::Result<()> {
    let cfg = c.config()?;
    let inp = precompute(&cfg.model, &smoothing_for(cfg.smoothing.tau_z)?)?;
    let pred: TheoryPrediction = predict(&inp, cfg.theory, false)?;
    let out = c.out_dir()?;
    match c.format {
        Format::Json => write_json(&out.join("prediction.json"), &pred)?,
        Format::Csv => {
            write_text(&out.join("prediction.csv"), &matrix_table(&[("eps", &pred.eps), ("rho", &pred.rho)]))?;
            let mut path = String::from("stage,xcal_frac,sigma2_frac,iterations,grad_norm,energy\n");
            for p in &pred.diagnostics.path.points {
                path.push_str(&format!(
                    "{:?},{},{},{},{},{}\n",
                    p.stage, p.xcal_frac, p.sigma2_frac, p.iterations, p.grad_norm, p.energy
                ));
            }
            write_text(&out.join("path.csv"), &path)?;
        }
    }
    println!(
        "branch {:?}, eps diag {:?}, rho diag {:?}",
        pred.diagnostics.branch,
        pred.eps.diagonal().as_slice(),
        pred.rho.diagonal().as_slice()
    );
    Ok(())
}

fn sweep(c: &Common) -> anyhow::Result<()> {
    let cfg = c.config()?;
    let sw = cfg.sweep.clone().ok_or_else(|| hetpca::Error::param("sweep", "section missing from config"))?;
    let spec = SweepSpec {
        base: cfg.model.clone(),
        tau_z: cfg.smoothing.tau_z,
        axis: sw.axis,
        values: sw.values,
        replicates: sw.replicates,
        seed: cfg.seed,
        theory: cfg.theory,
    };
    let rows = run_sweep(&spec)?;
    let out = c.out_dir()?;
    match c.format {
        Format::Csv => {
            let path = out.join("sweep.csv");
            let f = std::fs::File::create(&path).map_err(hetpca::Error::from)?;
            write_sweep_csv(f, &rows, cfg.model.dims.k)?;
        }
        Format::Json => write_json(&out.join("sweep.json"), &rows)?,
    }
    if c.svg {
        for obs in ["eps", "rho"] {
            write_text(&out.join(format!("{obs}.svg")), &sweep_svg(&rows, obs, spec.axis.name())?)?;
        }
    }
    println!("{} rows written to {}", rows.len(), out.display());
    Ok(())
}

fn abcd(c: &Common) -> anyhow::Result<()> {
    let mut cfg = c.config()?;
    cfg.model.modes = ModeLayout::Abcd;
    if cfg.model.dims.k != 2 {
        return Err(anyhow!(hetpca::Error::param("model.dims.k", "the component report needs K = 2")));
    }
    let g = smoothing_for(cfg.smoothing.tau_z)?;
    let ds = generate_experiment(&cfg.model, cfg.seed)?;
    let res = run_pca_pipeline(&ds, &g)?;
    let inp = precompute_with_modes(&cfg.model, &g, &ds.truth.modes)?;
    let pred = predict(&inp, cfg.theory, true)?;
    let rho_i = pred.rho_local.as_deref().unwrap_or_default();
    let report: AbcdReport = abcd_component_report(&res, &ds.truth.modes.e, rho_i, cfg.abcd.components)?;
    let out = c.out_dir()?;
    match c.format {
        Format::Json => write_json(&out.join("abcd.json"), &report)?,
        Format::Csv => {
            let mut s = String::from("label,component,k,truth,inferred,error_bar,within\n");
            for r in &report.rows {
                for k in 0..r.truth.len() {
                    s.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        r.label,
                        r.component,
                        k + 1,
                        r.truth[k],
                        r.inferred[k],
                        r.error_bar[k],
                        r.within[k]
                    ));
                }
            }
            write_text(&out.join("abcd.csv"), &s)?;
        }
    }
    for r in &report.rows {
        println!("{} (i={}): e={:?} v={:?} ±{:?}", r.label, r.component, r.truth, r.inferred, r.error_bar);
    }
    Ok(())
}
