use super::{
    population_kernel_stats, sample_kernels, Dataset, Dims, GroundTruth, LatentSignal, ModeLayout, ModelSpec,
    Modes, SignalSpec,
};
use crate::conv::filter_rows;
use crate::error::{Error, Result};
use crate::rng::{derive, stream};
use crate::Matrix;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

/// x¹_t = a1 (sin 2πt/T + sin 4πt/T), x²_t = a2 (−sin 2πt/T + sin 4πt/T), t = 1..T.
pub fn make_signal(dims: Dims, a1: f64, a2: f64) -> Result<LatentSignal> {
    if dims.k != 2 {
        return Err(Error::UnsupportedProfile(format!("tilted-infinity profile needs K = 2, got {}", dims.k)));
    }
    if dims.t < 4 {
        return Err(Error::Dimension(format!("tilted-infinity profile needs T ≥ 4, got {}", dims.t)));
    }
    let t = dims.t as f64;
    let x = Matrix::from_fn(2, dims.t, |k, j| {
        let s = j as f64 + 1.0;
        let (s1, s2) = ((2.0 * PI * s / t).sin(), (4.0 * PI * s / t).sin());
        if k == 0 {
            a1 * (s1 + s2)
        } else {
            a2 * (s2 - s1)
        }
    });
    Ok(LatentSignal { x: center_rows(x), amplitudes: vec![a1, a2] })
}

/// Generic constructor: any K×T matrix, re-centered per row.
pub fn signal_from_matrix(x: Matrix) -> LatentSignal {
    let x = center_rows(x);
    let amplitudes = x.row_iter().map(|r| (r.norm_squared() / r.len() as f64).sqrt()).collect();
    LatentSignal { x, amplitudes }
}

fn center_rows(mut x: Matrix) -> Matrix {
    for mut row in x.row_iter_mut() {
        let m = row.mean();
        row.add_scalar_mut(-m);
    }
    x
}

pub fn signal_for(spec: &ModelSpec) -> Result<LatentSignal> {
    let d = spec.dims;
    match &spec.signal {
        SignalSpec::TiltedInfinity { amplitudes } => make_signal(d, amplitudes[0], amplitudes[1]),
        SignalSpec::Sine { amplitude } => {
            let x = Matrix::from_fn(1, d.t, |_, j| amplitude * (2.0 * PI * (j as f64 + 1.0) / d.t as f64).sin());
            Ok(LatentSignal { amplitudes: vec![*amplitude], ..signal_from_matrix(x) })
        }
        SignalSpec::Custom { rows } => {
            if rows.len() != d.k || rows.iter().any(|r| r.len() != d.t) {
                return Err(Error::Dimension(format!("custom signal must be {}×{}", d.k, d.t)));
            }
            Ok(signal_from_matrix(Matrix::from_fn(d.k, d.t, |k, j| rows[k][j])))
        }
    }
}

/// Gaussian rows, modified Gram-Schmidt, scaled to norm √N.
pub fn sample_modes(dims: Dims, seed: u64) -> Result<Modes> {
    if dims.k > dims.n {
        return Err(Error::Dimension(format!("K = {} exceeds N = {}", dims.k, dims.n)));
    }
    let mut rng = stream(seed, 1);
    let mut e = Matrix::from_fn(dims.k, dims.n, |_, _| rng.sample::<f64, _>(StandardNormal));
    gram_schmidt_rows(&mut e, 0, dims.n);
    e *= (dims.n as f64).sqrt();
    Ok(Modes { e })
}

/// Orthonormalizes rows over the column range `lo..hi`.
fn gram_schmidt_rows(e: &mut Matrix, lo: usize, hi: usize) {
    for k in 0..e.nrows() {
        for j in 0..k {
            let d = (lo..hi).map(|i| e[(k, i)] * e[(j, i)]).sum::<f64>();
            for i in lo..hi {
                e[(k, i)] -= d * e[(j, i)];
            }
        }
        let nrm = (lo..hi).map(|i| e[(k, i)].powi(2)).sum::<f64>().sqrt();
        for i in lo..hi {
            e[(k, i)] /= nrm;
        }
    }
}

/// K = 2 modes whose first four components are A = (1, 0), B = (1, 1), C = (0, 1), D = (0, 0);
/// the remaining components are random and chosen so the rows stay orthogonal with norm √N.
pub fn abcd_modes(dims: Dims, seed: u64) -> Result<Modes> {
    if dims.k != 2 || dims.n < 8 {
        return Err(Error::param("modes", "abcd layout needs K = 2 and N ≥ 8"));
    }
    let n = dims.n;
    let fixed = [[1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]];
    let mut rng = stream(seed, 1);
    let mut free = Matrix::from_fn(2, n - 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    gram_schmidt_rows(&mut free, 0, n - 4);
    // Row norms² of the free part must be N − (fixed part)², and their overlap must
    // cancel the fixed-part overlap e¹·e² = 1 (from component B).
    let n1 = n as f64 - 2.0;
    let n2 = n as f64 - 2.0;
    let c = -1.0;
    let a = n1.sqrt();
    let b1 = c / a;
    let b2 = (n2 - b1 * b1).sqrt();
    let mut e = Matrix::zeros(2, n);
    for (i, f) in fixed.iter().enumerate() {
        e[(0, i)] = f[0];
        e[(1, i)] = f[1];
    }
    for i in 0..n - 4 {
        e[(0, i + 4)] = a * free[(0, i)];
        e[(1, i + 4)] = b1 * free[(0, i)] + b2 * free[(1, i)];
    }
    Ok(Modes { e })
}

pub fn modes_for(spec: &ModelSpec, seed: u64) -> Result<Modes> {
    match spec.modes {
        ModeLayout::Random => sample_modes(spec.dims, seed),
        ModeLayout::Abcd => abcd_modes(spec.dims, seed),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDelta {
    pub delta: Matrix,
    /// Magnitude of the most negative eigenvalue removed by clipping (0 if none).
    pub clip: f64,
}

/// Δ_{t1,t2} = exp(−d²/(2τ_ξ²)) with plain or circular distance d.
pub fn build_gaussian_delta(t: usize, tau_xi: f64, periodic: bool) -> Result<GaussianDelta> {
    if !(tau_xi > 0.0 && tau_xi.is_finite()) {
        return Err(Error::param("tau_xi", format!("must be positive, got {tau_xi}")));
    }
    let delta = Matrix::from_fn(t, t, |a, b| {
        let d = a.abs_diff(b);
        let d = if periodic { d.min(t - d) } else { d } as f64;
        (-d * d / (2.0 * tau_xi * tau_xi)).exp()
    });
    let eig = delta.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -1e-10 {
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let delta = &eig.eigenvectors * Matrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        return Ok(GaussianDelta { delta: (&delta + delta.transpose()) * 0.5, clip: -min });
    }
    Ok(GaussianDelta { delta, clip: 0.0 })
}

/// Square-root factor L with L Lᵀ = Δ (eigenvalues below zero are clipped).
pub fn psd_factor(delta: &Matrix) -> Result<Matrix> {
    let eig = delta.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -1e-10 * delta.amax().max(1.0) {
        return Err(Error::Covariance { min_eig: min });
    }
    let sq = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * Matrix::from_diagonal(&sq))
}

/// δx rows ξ^(k) · L g_k with L Lᵀ = Δ and independent standard Gaussian g_k.
pub fn sample_fluctuations(xi: &[f64], delta: &Matrix, seed: u64) -> Result<Matrix> {
    let factor = psd_factor(delta)?;
    Ok(fluctuations_with_factor(xi, &factor, seed))
}

fn fluctuations_with_factor(xi: &[f64], factor: &Matrix, seed: u64) -> Matrix {
    let t = factor.nrows();
    let mut rng = stream(seed, 2);
    let g = Matrix::from_fn(t, xi.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut dx = (factor * g).transpose();
    for (k, x) in xi.iter().enumerate() {
        dx.row_mut(k).scale_mut(*x);
    }
    dx
}

struct Shared {
    signal: LatentSignal,
    modes: Modes,
    factor: Option<Matrix>,
    x_filtered: Matrix,
}

fn shared(spec: &ModelSpec, seed: u64) -> Result<Shared> {
    spec.validate()?;
    let signal = signal_for(spec)?;
    let modes = modes_for(spec, derive(seed, 1))?;
    let factor = if spec.fluctuations.xi.iter().any(|x| *x > 0.0) {
        let d = build_gaussian_delta(spec.dims.t, spec.fluctuations.tau_xi, spec.fluctuations.periodic)?;
        Some(psd_factor(&d.delta)?)
    } else {
        None
    };
    let stats = population_kernel_stats(&spec.kernel, spec.dims.t)?;
    let x_filtered = filter_rows(&signal.x, stats.mean.as_slice(), 0);
    Ok(Shared { signal, modes, factor, x_filtered })
}

/// Realizes s = (F + δF) ∗ eᵀ(x + δx) + z for one sample.
fn realize(spec: &ModelSpec, sh: &Shared, kernels: Option<&Matrix>, seed: u64) -> (Matrix, Matrix) {
    let d = spec.dims;
    let dx = match &sh.factor {
        Some(f) => fluctuations_with_factor(&spec.fluctuations.xi, f, seed),
        None => Matrix::zeros(d.k, d.t),
    };
    let u = sh.modes.e.transpose() * (&sh.signal.x + &dx);
    let mut s = match kernels {
        None => u,
        Some(f) => {
            let mut s = Matrix::zeros(d.n, d.t);
            let l = f.ncols();
            for tau in 0..l {
                for t in 0..d.t {
                    let src = (t + d.t - tau % d.t) % d.t;
                    for i in 0..d.n {
                        s[(i, t)] += f[(i, tau)] * u[(i, src)];
                    }
                }
            }
            s
        }
    };
    let sig = spec.noise.sigmas(d.n);
    if sig.iter().any(|x| *x > 0.0) {
        let mut rng = stream(seed, 3);
        for t in 0..d.t {
            for (i, sg) in sig.iter().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                s[(i, t)] += sg * z;
            }
        }
    }
    (s, dx)
}

fn kernels_for(spec: &ModelSpec, seed: u64) -> Result<Option<Matrix>> {
    match spec.kernel {
        super::KernelSpec::Instantaneous => Ok(None),
        _ => Ok(Some(sample_kernels(&spec.kernel, spec.dims.n, spec.dims.t, seed)?.f)),
    }
}

/// All S samples of one experiment. Signal and modes are shared; kernels are shared
/// unless `redraw_kernels_per_sample` is set; δx and z are drawn per sample.
pub fn generate_samples(spec: &ModelSpec, seed: u64) -> Result<Vec<Dataset>> {
    let sh = shared(spec, seed)?;
    let fixed_kernels = kernels_for(spec, derive(seed, 2))?;
    let single = ModelSpec { dims: Dims { s: 1, ..spec.dims }, ..spec.clone() };
    let mut out = Vec::with_capacity(spec.dims.s);
    for j in 0..spec.dims.s {
        let sample_seed = derive(seed, 100 + j as u64);
        let kernels = if spec.redraw_kernels_per_sample {
            kernels_for(spec, derive(sample_seed, 2))?
        } else {
            fixed_kernels.clone()
        };
        let (s, dx) = realize(spec, &sh, kernels.as_ref(), sample_seed);
        out.push(Dataset {
            s,
            spec: single.clone(),
            truth: GroundTruth {
                signal: sh.signal.clone(),
                modes: sh.modes.clone(),
                dx: vec![dx],
                kernels: kernels.into_iter().collect(),
                x_filtered: sh.x_filtered.clone(),
            },
            samples: 1,
        });
    }
    Ok(out)
}

/// One sample (S is ignored).
pub fn generate_sample(spec: &ModelSpec, seed: u64) -> Result<Dataset> {
    let single = ModelSpec { dims: Dims { s: 1, ..spec.dims }, ..spec.clone() };
    Ok(generate_samples(&single, seed)?.remove(0))
}

/// generate_samples followed by average_samples.
pub fn generate_experiment(spec: &ModelSpec, seed: u64) -> Result<Dataset> {
    average_samples(generate_samples(spec, seed)?)
}

pub fn average_samples(datasets: Vec<Dataset>) -> Result<Dataset> {
    let Some(first) = datasets.first() else {
        return Err(Error::param("datasets", "empty list"));
    };
    let total: usize = datasets.iter().map(|d| d.samples).sum();
    let spec = first.spec.clone();
    for d in &datasets[1..] {
        let same_spec = ModelSpec { dims: Dims { s: 1, ..d.spec.dims }, ..d.spec.clone() }
            == ModelSpec { dims: Dims { s: 1, ..spec.dims }, ..spec.clone() };
        if !same_spec || d.truth.modes != first.truth.modes || d.truth.signal != first.truth.signal {
            return Err(Error::param("datasets", "samples do not share spec, modes and signal"));
        }
    }
    let mut s = Matrix::zeros(first.s.nrows(), first.s.ncols());
    for d in &datasets {
        s += &d.s * d.samples as f64;
    }
    s /= total as f64;
    let mut truth = first.truth.clone();
    truth.dx = datasets.iter().flat_map(|d| d.truth.dx.iter().cloned()).collect();
    truth.kernels = Vec::new();
    for d in &datasets {
        for k in &d.truth.kernels {
            if !truth.kernels.contains(k) {
                truth.kernels.push(k.clone());
            }
        }
    }
    let spec = ModelSpec { dims: Dims { s: total, ..spec.dims }, ..spec };
    Ok(Dataset { s, spec, truth, samples: total })
}
