//! Empirical recovery: smoothing, covariance, top-K eigenmodes, alignment,
//! projection and the empirical error matrices.

use crate::conv::{circulant, filter_rows};
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingKernel {
    /// Weights G_τ for τ = −h..h, centered.
    pub weights: Vec<f64>,
    pub tau_z: f64,
}

impl SmoothingKernel {
    pub fn identity() -> Self {
        SmoothingKernel { weights: vec![1.0], tau_z: 0.0 }
    }

    /// Gaussian of width τ_z truncated at ±ceil(4τ_z) and normalized to unit sum.
    /// τ_z = 0 gives the identity.
    pub fn gaussian(tau_z: f64) -> Result<Self> {
        if !(tau_z >= 0.0 && tau_z.is_finite()) {
            return Err(Error::param("tau_z", format!("must be finite and ≥ 0, got {tau_z}")));
        }
        if tau_z == 0.0 {
            return Ok(Self::identity());
        }
        let h = (4.0 * tau_z).ceil() as i64;
        let w: Vec<f64> = (-h..=h).map(|t| (-(t * t) as f64 / (2.0 * tau_z * tau_z)).exp()).collect();
        let total: f64 = w.iter().sum();
        Ok(SmoothingKernel { weights: w.iter().map(|x| x / total).collect(), tau_z })
    }

    /// Builds a kernel from explicit centered weights (odd length).
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.len().is_multiple_of(2) {
            return Err(Error::param("weights", "length must be odd (centered support)"));
        }
        Ok(SmoothingKernel { weights, tau_z: f64::NAN })
    }

    pub fn half_width(&self) -> usize {
        (self.weights.len() - 1) / 2
    }

    pub fn sum_sq(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    /// Circulant matrix G with (G u)_t = Σ_τ G_τ u_{t−τ}.
    pub fn matrix(&self, t: usize) -> Matrix {
        circulant(&self.weights, self.half_width(), t)
    }

    /// Smoothed-noise correlation Z = G Gᵀ / Σ G_τ².
    pub fn z_matrix(&self, t: usize) -> Matrix {
        let g = self.matrix(t);
        &g * g.transpose() / self.sum_sq()
    }
}

/// Circular convolution of each row with G.
pub fn smooth(series: &Matrix, g: &SmoothingKernel) -> Result<Matrix> {
    if g.weights.len() > series.ncols() {
        return Err(Error::Dimension(format!(
            "smoothing support {} exceeds T = {}",
            g.weights.len(),
            series.ncols()
        )));
    }
    Ok(filter_rows(series, &g.weights, g.half_width()))
}

/// C_ij = (1/T) Σ_t s̄_it s̄_jt − means product.
pub fn covariance(s_bar: &Matrix) -> Result<Matrix> {
    let t = s_bar.ncols();
    if t < 2 {
        return Err(Error::Dimension(format!("covariance needs T ≥ 2, got {t}")));
    }
    let mean = s_bar.column_mean();
    let mut c = s_bar * s_bar.transpose() / t as f64;
    c -= &mean * mean.transpose();
    Ok((&c + c.transpose()) * 0.5)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Eigenmodes {
    /// K×N, rows of norm √N, descending eigenvalue order.
    pub v: Matrix,
    pub eigenvalues: Vec<f64>,
}

pub fn top_modes(c: &Matrix, k: usize) -> Result<Eigenmodes> {
    let n = c.nrows();
    if k > n {
        return Err(Error::Dimension(format!("K = {k} exceeds N = {n}")));
    }
    let eig = c.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let scale = (n as f64).sqrt();
    let mut v = Matrix::zeros(k, n);
    let mut eigenvalues = Vec::with_capacity(k);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let col = eig.eigenvectors.column(idx);
        let imax = col.iamax();
        let sign = if col[imax] < 0.0 { -1.0 } else { 1.0 };
        let nrm = col.norm();
        for i in 0..n {
            v[(row, i)] = sign * scale * col[i] / nrm;
        }
        eigenvalues.push(eig.eigenvalues[idx]);
    }
    Ok(Eigenmodes { v, eigenvalues })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Row k of the aligned matrix is `signs[k] · v[permutation[k]]`.
    pub permutation: Vec<usize>,
    pub signs: Vec<f64>,
}

/// Matches inferred rows to ground-truth rows maximizing Σ_k |⟨v^(π(k)), e^(k)⟩|,
/// then flips signs so every matched overlap is ≥ 0.
pub fn align(v: &Matrix, e: &Matrix) -> (Matrix, Alignment) {
    let k = e.nrows();
    let overlap = e * v.transpose();
    let score = Matrix::from_fn(k, v.nrows(), |a, b| overlap[(a, b)].abs());
    let permutation = if k <= 4 { best_permutation(&score) } else { hungarian_max(&score) };
    let mut aligned = Matrix::zeros(k, v.ncols());
    let mut signs = Vec::with_capacity(k);
    for (row, &src) in permutation.iter().enumerate() {
        let s = if overlap[(row, src)] < 0.0 { -1.0 } else { 1.0 };
        aligned.row_mut(row).copy_from(&(v.row(src) * s));
        signs.push(s);
    }
    (aligned, Alignment { permutation, signs })
}

fn best_permutation(score: &Matrix) -> Vec<usize> {
    let k = score.nrows();
    let mut perm: Vec<usize> = (0..score.ncols()).collect();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    permute(&mut perm, 0, k, &mut |p| {
        let s: f64 = (0..k).map(|r| score[(r, p[r])]).sum();
        if s > best.0 {
            best = (s, p[..k].to_vec());
        }
    });
    best.1
}

fn permute(p: &mut Vec<usize>, depth: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    if depth == k {
        f(p);
        return;
    }
    for i in depth..p.len() {
        p.swap(depth, i);
        permute(p, depth + 1, k, f);
        p.swap(depth, i);
    }
}

/// Maximum-weight assignment of rows to columns (Kuhn-Munkres, O(K³)).
fn hungarian_max(score: &Matrix) -> Vec<usize> {
    let (n, m) = (score.nrows(), score.ncols());
    let inf = f64::INFINITY;
    let cost = |i: usize, j: usize| -score[(i - 1, j - 1)];
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; m + 1]);
    let (mut p, mut way) = (vec![0usize; m + 1], vec![0usize; m + 1]);
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// y = (1/N) v s.
pub fn project(v: &Matrix, s: &Matrix) -> Result<Matrix> {
    if v.ncols() != s.nrows() {
        return Err(Error::Dimension(format!("v is {}×{}, s is {}×{}", v.nrows(), v.ncols(), s.nrows(), s.ncols())));
    }
    Ok(v * s / v.ncols() as f64)
}

/// ε = (1/T)(y − x)(y − x)ᵀ.
pub fn epsilon_empirical(y: &Matrix, x: &Matrix) -> Result<Matrix> {
    if y.shape() != x.shape() {
        return Err(Error::Dimension(format!("y is {:?}, x is {:?}", y.shape(), x.shape())));
    }
    let r = y - x;
    let e = &r * r.transpose() / y.ncols() as f64;
    Ok((&e + e.transpose()) * 0.5)
}

/// ρ = (1/2N)(v − e)(v − e)ᵀ.
pub fn rho_empirical(v: &Matrix, e: &Matrix) -> Result<Matrix> {
    if v.shape() != e.shape() {
        return Err(Error::Dimension(format!("v is {:?}, e is {:?}", v.shape(), e.shape())));
    }
    let d = v - e;
    let r = &d * d.transpose() / (2.0 * v.ncols() as f64);
    Ok((&r + r.transpose()) * 0.5)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Project the smoothed data instead of the raw data for `y`.
    pub project_smoothed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryResult {
    /// Aligned inferred modes, K×N.
    pub v: Matrix,
    /// Projected trajectories, K×T.
    pub y: Matrix,
    /// ε of y against the raw signal x.
    pub eps_emp: Matrix,
    pub rho_emp: Matrix,
    pub alignment: Alignment,
    pub s_bar: Matrix,
    pub covariance: Matrix,
    pub eigenvalues: Vec<f64>,
    /// Smoothed projection V s̄ / N.
    pub y_smoothed: Matrix,
    /// ε of the smoothed projection against the smoothed, kernel-filtered signal;
    /// the like-for-like counterpart of the theoretical ε.
    pub eps_smoothed: Matrix,
}

pub fn run_pca_pipeline(dataset: &Dataset, g: &SmoothingKernel) -> Result<RecoveryResult> {
    run_pca_pipeline_with(dataset, g, PipelineOptions::default())
}

pub fn run_pca_pipeline_with(dataset: &Dataset, g: &SmoothingKernel, opts: PipelineOptions) -> Result<RecoveryResult> {
    if dataset.s.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("dataset".into()));
    }
    let k = dataset.spec.dims.k;
    let e = &dataset.truth.modes.e;
    let s_bar = smooth(&dataset.s, g)?;
    let covariance = covariance(&s_bar)?;
    let modes = top_modes(&covariance, k)?;
    let (v, alignment) = align(&modes.v, e);
    let y_smoothed = project(&v, &s_bar)?;
    let y = if opts.project_smoothed { y_smoothed.clone() } else { project(&v, &dataset.s)? };
    let eps_emp = epsilon_empirical(&y, &dataset.truth.signal.x)?;
    let rho_emp = rho_empirical(&v, e)?;
    let x_bar = smooth(&dataset.truth.x_filtered, g)?;
    let eps_smoothed = epsilon_empirical(&y_smoothed, &x_bar)?;
    let eigenvalues = alignment.permutation.iter().map(|&p| modes.eigenvalues[p]).collect();
    Ok(RecoveryResult { v, y, eps_emp, rho_emp, alignment, s_bar, covariance, eigenvalues, y_smoothed, eps_smoothed })
}
