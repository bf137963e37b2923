//! Seeded parameter sweeps comparing Monte-Carlo PCA recovery with the theory.

use crate::error::{Error, Result};
use crate::estimator::{run_pca_pipeline, RecoveryResult, SmoothingKernel};
use crate::model::{generate_experiment, GammaParams, KernelSpec, ModelSpec, NoiseSpec, Sigma};
use crate::rng::{derive, stream};
use crate::theory::{precompute, predict, Branch, ContinuationOptions};
use crate::Matrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Theory ρ^(k,k) above which a grid point counts as near the transition.
pub const TRANSITION_RHO: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    N,
    Sigma,
    /// Fluctuation ratio: ξ^(k) = value · a^(k).
    Xi,
    TauZ,
    S,
    /// 0 for instantaneous probes, anything else for the reference Gamma ensemble.
    KernelOn,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::N => "N",
            SweepAxis::Sigma => "sigma",
            SweepAxis::Xi => "xi",
            SweepAxis::TauZ => "tau_z",
            SweepAxis::S => "S",
            SweepAxis::KernelOn => "kernel_on",
        }
    }
}

fn default_replicates() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ModelSpec,
    /// Smoothing width at the base point; 0 means no smoothing.
    pub tau_z: f64,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub theory: ContinuationOptions,
}

/// Rise and decay ensembles used when kernels are switched on.
pub fn reference_gamma_kernel() -> KernelSpec {
    KernelSpec::Gamma {
        rise: GammaParams { shape: 12.25, scale: 0.43 },
        decay: GammaParams { shape: 2.78, scale: 28.8 },
        support: None,
    }
}

pub fn smoothing_for(tau_z: f64) -> Result<SmoothingKernel> {
    if tau_z == 0.0 {
        Ok(SmoothingKernel::identity())
    } else {
        SmoothingKernel::gaussian(tau_z)
    }
}

fn as_count(name: &str, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v.is_finite() {
        Ok(v as usize)
    } else {
        Err(Error::param(name, format!("must be a positive integer, got {v}")))
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::param("values", "must not be empty"));
        }
        if self.replicates == 0 {
            return Err(Error::param("replicates", "must be at least 1"));
        }
        for &v in &self.values {
            self.point(v)?;
        }
        Ok(())
    }

    /// Model and smoothing width at one axis value.
    pub fn point(&self, value: f64) -> Result<(ModelSpec, f64)> {
        if !value.is_finite() {
            return Err(Error::param(self.axis.name(), "must be finite"));
        }
        let mut m = self.base.clone();
        let mut tau_z = self.tau_z;
        match self.axis {
            SweepAxis::N => m.dims.n = as_count("N", value)?,
            SweepAxis::S => m.dims.s = as_count("S", value)?,
            SweepAxis::Sigma => {
                if value < 0.0 {
                    return Err(Error::param("sigma", format!("must be ≥ 0, got {value}")));
                }
                m.noise = NoiseSpec::uniform(value);
            }
            SweepAxis::Xi => {
                if value < 0.0 {
                    return Err(Error::param("xi", format!("must be ≥ 0, got {value}")));
                }
                m = m.with_xi_ratio(value);
            }
            SweepAxis::TauZ => {
                if value < 0.0 {
                    return Err(Error::param("tau_z", format!("must be ≥ 0, got {value}")));
                }
                tau_z = value;
            }
            SweepAxis::KernelOn => {
                m.kernel = if value == 0.0 { KernelSpec::Instantaneous } else { reference_gamma_kernel() };
            }
        }
        m.validate()?;
        smoothing_for(tau_z)?;
        Ok((m, tau_z))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub value: f64,
    pub replicates: usize,
    pub eps_theory: Option<Matrix>,
    pub rho_theory: Option<Matrix>,
    pub eps_emp_mean: Matrix,
    pub eps_emp_stderr: Matrix,
    pub rho_emp_mean: Matrix,
    pub rho_emp_stderr: Matrix,
    /// Theory failed, left the continuation branch, or has some ρ^(k,k) > 0.9.
    pub transition: bool,
    pub theory_branch: Option<Branch>,
    pub theory_error: Option<String>,
    /// Mean wall time per replicate (generation and PCA), seconds.
    pub sim_seconds: f64,
    pub theory_seconds: f64,
}

/// Element-wise mean and standard error of the mean.
pub fn mean_stderr(ms: &[Matrix]) -> (Matrix, Matrix) {
    let n = ms.len();
    let (r, c) = ms[0].shape();
    let mean = ms.iter().fold(Matrix::zeros(r, c), |a, m| a + m) / n as f64;
    if n < 2 {
        return (mean, Matrix::zeros(r, c));
    }
    let var = ms.iter().fold(Matrix::zeros(r, c), |a, m| a + (m - &mean).map(|d| d * d)) / (n - 1) as f64;
    (mean, var.map(|v| (v / n as f64).sqrt()))
}

struct Replicate {
    eps: Matrix,
    rho: Matrix,
    seconds: f64,
}

fn replicate(m: &ModelSpec, g: &SmoothingKernel, seed: u64) -> Result<Replicate> {
    let t0 = Instant::now();
    let ds = generate_experiment(m, seed)?;
    let res = run_pca_pipeline(&ds, g)?;
    Ok(Replicate { eps: res.eps_smoothed, rho: res.rho_emp, seconds: t0.elapsed().as_secs_f64() })
}

/// Seed of replicate `rep` at grid index `idx`.
pub fn replicate_seed(master: u64, idx: usize, rep: usize) -> u64 {
    derive(derive(master, 1000 + idx as u64), rep as u64)
}

/// Runs every grid point: `replicates` seeded simulations plus one theory solve.
/// Empirical ε uses the smoothed-signal convention so that it is comparable with
/// the theory. Results are independent of thread scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ComparisonRow>> {
    spec.validate()?;
    let points: Vec<(ModelSpec, f64)> = spec.values.iter().map(|&v| spec.point(v)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> =
        (0..points.len()).flat_map(|i| (0..spec.replicates).map(move |r| (i, r))).collect();
    let sims: Vec<Replicate> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let (m, tau) = &points[i];
            replicate(m, &smoothing_for(*tau)?, replicate_seed(spec.seed, i, r))
        })
        .collect::<Result<_>>()?;
    let theories: Vec<_> = points
        .par_iter()
        .map(|(m, tau)| {
            let t0 = Instant::now();
            let out = smoothing_for(*tau)
                .and_then(|g| precompute(m, &g))
                .and_then(|inp| predict(&inp, spec.theory, false));
            (out, t0.elapsed().as_secs_f64())
        })
        .collect();

    let mut rows = Vec::with_capacity(points.len());
    for (i, (theory, secs)) in theories.into_iter().enumerate() {
        let reps = &sims[i * spec.replicates..(i + 1) * spec.replicates];
        let eps: Vec<Matrix> = reps.iter().map(|r| r.eps.clone()).collect();
        let rho: Vec<Matrix> = reps.iter().map(|r| r.rho.clone()).collect();
        let (eps_emp_mean, eps_emp_stderr) = mean_stderr(&eps);
        let (rho_emp_mean, rho_emp_stderr) = mean_stderr(&rho);
        let sim_seconds = reps.iter().map(|r| r.seconds).sum::<f64>() / reps.len() as f64;
        let mut row = ComparisonRow {
            value: spec.values[i],
            replicates: spec.replicates,
            eps_theory: None,
            rho_theory: None,
            eps_emp_mean,
            eps_emp_stderr,
            rho_emp_mean,
            rho_emp_stderr,
            transition: true,
            theory_branch: None,
            theory_error: None,
            sim_seconds,
            theory_seconds: secs,
        };
        match theory {
            Ok(p) => {
                let near = (0..p.rho.nrows()).any(|k| p.rho[(k, k)] > TRANSITION_RHO);
                row.transition = near || p.diagnostics.branch != Branch::Continuation;
                row.theory_branch = Some(p.diagnostics.branch);
                row.eps_theory = Some(p.eps);
                row.rho_theory = Some(p.rho);
            }
            Err(e) => row.theory_error = Some(e.to_string()),
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Copy of `base` with σ_i² = g_i² · mean_sigma2 / mean(g²), g_i ~ N(0, 1).
pub fn heterogeneous_noise_variant(base: &ModelSpec, mean_sigma2: f64, seed: u64) -> Result<ModelSpec> {
    if !(mean_sigma2 > 0.0 && mean_sigma2.is_finite()) {
        return Err(Error::param("mean_sigma2", format!("must be positive, got {mean_sigma2}")));
    }
    let n = base.dims.n;
    let mut rng = stream(seed, 7);
    let g2: Vec<f64> = (0..n)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * g
        })
        .collect();
    let mean = g2.iter().sum::<f64>() / n as f64;
    let mut out = base.clone();
    out.noise = NoiseSpec { sigma: Sigma::PerComponent(g2.iter().map(|v| (v * mean_sigma2 / mean).sqrt()).collect()) };
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub label: String,
    pub component: usize,
    /// Ground-truth loadings e_i^(k).
    pub truth: Vec<f64>,
    /// Inferred loadings v_i^(k).
    pub inferred: Vec<f64>,
    /// Error bars sqrt(ρ_i^(k,k)).
    pub error_bar: Vec<f64>,
    pub within: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbcdReport {
    pub rows: Vec<ComponentRow>,
}

/// Per-component loadings with theory error bars for four components,
/// labelled A, B, C, D in the order given.
pub fn abcd_component_report(
    result: &RecoveryResult,
    e: &Matrix,
    rho_i: &[Matrix],
    components: [usize; 4],
) -> Result<AbcdReport> {
    let (k, n) = e.shape();
    if result.v.shape() != (k, n) || rho_i.len() != n {
        return Err(Error::Dimension("modes, inferred modes and ρ_i disagree in shape".into()));
    }
    let mut rows = Vec::with_capacity(4);
    for (label, &i) in ["A", "B", "C", "D"].iter().zip(components.iter()) {
        if i >= n {
            return Err(Error::Dimension(format!("component {i} out of range (N = {n})")));
        }
        let truth: Vec<f64> = (0..k).map(|a| e[(a, i)]).collect();
        let inferred: Vec<f64> = (0..k).map(|a| result.v[(a, i)]).collect();
        let error_bar: Vec<f64> = (0..k).map(|a| rho_i[i][(a, a)].max(0.0).sqrt()).collect();
        let within = (0..k).map(|a| (inferred[a] - truth[a]).abs() <= error_bar[a]).collect();
        rows.push(ComponentRow { label: label.to_string(), component: i, truth, inferred, error_bar, within });
    }
    Ok(AbcdReport { rows })
}

/// First axis value at which the theory no longer recovers mode `k`
/// (failed solve or ρ^(k,k) ≥ `threshold`).
pub fn transition_value(rows: &[ComparisonRow], k: usize, threshold: f64) -> Option<f64> {
    rows.iter()
        .find(|r| r.rho_theory.as_ref().is_none_or(|rho| rho[(k, k)] >= threshold))
        .map(|r| r.value)
}
