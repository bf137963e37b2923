use super::{GammaParams, KernelSpec};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::{Matrix, Vector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// F_τ = exp(−τ/d) − exp(−τ/r), τ = 0..L−1.
pub fn kernel_from_times(rise: f64, decay: f64, support: usize) -> Vec<f64> {
    (0..support)
        .map(|tau| {
            let t = tau as f64;
            (-t / decay).exp() - (-t / rise).exp()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelSample {
    /// N×L, one kernel per component.
    pub f: Matrix,
    pub mean: Vector,
    /// Empirical covariance across components.
    pub xi: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelStats {
    pub mean: Vector,
    pub xi: Matrix,
}

fn gamma(p: GammaParams, name: &str) -> Result<Gamma<f64>> {
    Gamma::new(p.shape, p.scale).map_err(|e| Error::param(name, e.to_string()))
}

fn draw_times<R: Rng>(rise: &Gamma<f64>, decay: &Gamma<f64>, rng: &mut R) -> (f64, f64) {
    loop {
        let r = rise.sample(rng);
        let d = decay.sample(rng);
        if r < d {
            return (r, d);
        }
    }
}

fn gamma_pair(spec: &KernelSpec) -> Result<Option<(Gamma<f64>, Gamma<f64>)>> {
    match spec {
        KernelSpec::Instantaneous => Ok(None),
        KernelSpec::Gamma { rise, decay, .. } => {
            Ok(Some((gamma(*rise, "kernel.rise")?, gamma(*decay, "kernel.decay")?)))
        }
    }
}

/// Draws one kernel per component. Instantaneous probes give F = δ for all i.
pub fn sample_kernels(spec: &KernelSpec, n: usize, t: usize, seed: u64) -> Result<KernelSample> {
    spec.validate(t)?;
    let l = spec.support(t);
    let mut f = Matrix::zeros(n, l);
    match gamma_pair(spec)? {
        None => f.column_mut(0).fill(1.0),
        Some((rise, decay)) => {
            let mut rng = stream(seed, 0x6b65726e);
            for i in 0..n {
                let (r, d) = draw_times(&rise, &decay, &mut rng);
                for (tau, v) in kernel_from_times(r, d, l).into_iter().enumerate() {
                    f[(i, tau)] = v;
                }
            }
        }
    }
    let mean = f.row_mean().transpose();
    let centered = Matrix::from_fn(n, l, |i, j| f[(i, j)] - mean[j]);
    let xi = centered.transpose() * &centered / n as f64;
    Ok(KernelSample { f, mean, xi })
}

const POPULATION_DRAWS: usize = 100_000;
const POPULATION_SEED: u64 = 0x5eed_f00d;

fn cache() -> &'static Mutex<HashMap<String, Arc<KernelStats>>> {
    static C: OnceLock<Mutex<HashMap<String, Arc<KernelStats>>>> = OnceLock::new();
    C.get_or_init(Default::default)
}

/// Population mean kernel and covariance, estimated from 10⁵ draws with a fixed
/// internal seed. Results are memoized per (spec, support).
pub fn population_kernel_stats(spec: &KernelSpec, t: usize) -> Result<Arc<KernelStats>> {
    spec.validate(t)?;
    let l = spec.support(t);
    let Some((rise, decay)) = gamma_pair(spec)? else {
        let mut mean = Vector::zeros(1);
        mean[0] = 1.0;
        return Ok(Arc::new(KernelStats { mean, xi: Matrix::zeros(1, 1) }));
    };
    let key = format!("{spec:?}/{l}");
    if let Some(s) = cache().lock().unwrap().get(&key) {
        return Ok(s.clone());
    }
    let mut rng = stream(POPULATION_SEED, 0x706f70);
    let chunk = 1000;
    let mut sum = Vector::zeros(l);
    let mut second = Matrix::zeros(l, l);
    let mut block = Matrix::zeros(chunk, l);
    for _ in 0..POPULATION_DRAWS / chunk {
        for i in 0..chunk {
            let (r, d) = draw_times(&rise, &decay, &mut rng);
            for (tau, v) in kernel_from_times(r, d, l).into_iter().enumerate() {
                block[(i, tau)] = v;
            }
        }
        sum += block.row_sum().transpose();
        second.gemm_tr(1.0, &block, &block, 1.0);
    }
    let m = POPULATION_DRAWS as f64;
    let mean = sum / m;
    let xi = second / m - &mean * mean.transpose();
    let xi = (&xi + xi.transpose()) * 0.5;
    let stats = Arc::new(KernelStats { mean, xi });
    cache().lock().unwrap().insert(key, stats.clone());
    Ok(stats)
}
