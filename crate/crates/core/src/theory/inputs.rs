use crate::conv::{circulant, filter_rows};
use crate::error::{Error, Result};
use crate::estimator::SmoothingKernel;
use crate::model::{build_gaussian_delta, modes_for, population_kernel_stats, signal_for, Dims, KernelSpec, ModelSpec, Modes};
use crate::Matrix;

/// Mode seed used when the theory is built from a spec alone.
pub const THEORY_MODE_SEED: u64 = 0x7e0;

/// Smoothed and rescaled model quantities entering the energy.
#[derive(Clone, Debug)]
pub struct TheoryInputs {
    pub dims: Dims,
    pub alpha: f64,
    /// K×T, smoothed (and kernel-filtered) signal.
    pub x_bar: Matrix,
    /// T×T smoothed-noise correlation, unit diagonal.
    pub z: Matrix,
    /// T×T smoothed fluctuation correlation (divided by S).
    pub delta_bar: Matrix,
    /// K² blocks of the kernel-fluctuation tensor, block (l, l') at index l·K + l', each T×T.
    pub xcal: Vec<Matrix>,
    pub xi2: Vec<f64>,
    /// σ̄_i² = σ_i² Σ G² / (N S).
    pub sigma_bar2: Vec<f64>,
    /// K×N ground-truth modes.
    pub e: Matrix,
    /// KT×KT block matrix of x̄ x̄ᵀ.
    pub x_outer: Matrix,
    /// KT×KT: diag(ξ²) ⊗ sym(Δ̄(I − J)) + X.
    pub y_tilde: Matrix,
}

/// Raw ingredients for [`TheoryInputs::from_parts`].
#[derive(Clone, Debug)]
pub struct TheoryParts<'a> {
    /// K×T raw signal.
    pub x: &'a Matrix,
    /// K×N modes.
    pub e: &'a Matrix,
    /// Per-component noise standard deviations.
    pub sigma: &'a [f64],
    pub xi: &'a [f64],
    /// T×T fluctuation correlation.
    pub delta: &'a Matrix,
    pub smoothing: &'a SmoothingKernel,
    /// Mean kernel (length L) and kernel covariance (L×L); None for instantaneous probes.
    pub kernel: Option<(&'a [f64], &'a Matrix)>,
    pub samples: usize,
    /// Whether kernels are redrawn per sample (then Ξ is also divided by S).
    pub kernels_redrawn: bool,
}

impl TheoryInputs {
    pub fn from_parts(p: TheoryParts<'_>) -> Result<Self> {
        let (k, t) = p.x.shape();
        let n = p.e.ncols();
        if p.e.nrows() != k || p.sigma.len() != n || p.xi.len() != k || p.delta.shape() != (t, t) {
            return Err(Error::Dimension("theory inputs have inconsistent shapes".into()));
        }
        if p.smoothing.weights.len() > t {
            return Err(Error::Dimension(format!("smoothing support {} exceeds T = {t}", p.smoothing.weights.len())));
        }
        let dims = Dims::new(n, t, k, p.samples)?;
        let s = p.samples as f64;
        let g = p.smoothing.matrix(t);
        let (fmat, x_f) = match p.kernel {
            None => (Matrix::identity(t, t), p.x.clone()),
            Some((mean, _)) => {
                if mean.len() > t {
                    return Err(Error::Dimension(format!("kernel support {} exceeds T = {t}", mean.len())));
                }
                (circulant(mean, 0, t), filter_rows(p.x, mean, 0))
            }
        };
        let x_bar = &x_f * g.transpose();
        let z = p.smoothing.z_matrix(t);
        let gf = &g * &fmat;
        let delta_bar = &gf * p.delta * gf.transpose() / s;
        let xi2: Vec<f64> = p.xi.iter().map(|x| x * x).collect();
        let gs = p.smoothing.sum_sq();
        let sigma_bar2 = p.sigma.iter().map(|x| x * x * gs / (n as f64 * s)).collect();

        let mut xcal = vec![Matrix::zeros(t, t); k * k];
        if let Some((mean, cov)) = p.kernel {
            let l = mean.len();
            if cov.shape() != (l, l) {
                return Err(Error::Dimension("kernel covariance shape does not match the mean kernel".into()));
            }
            let scale = if p.kernels_redrawn { n as f64 * s } else { n as f64 };
            if cov.iter().any(|v| *v != 0.0) {
                // Sh_k[t, τ] = x_k[t − τ]
                let shifts: Vec<Matrix> = (0..k)
                    .map(|kk| Matrix::from_fn(t, l, |tt, tau| p.x[(kk, (tt + t - tau % t) % t)]))
                    .collect();
                for a in 0..k {
                    let left = &g * &shifts[a] * cov;
                    for b in 0..k {
                        xcal[a * k + b] = &left * (&g * &shifts[b]).transpose() / scale;
                    }
                }
            }
        }

        let mut x_outer = Matrix::zeros(k * t, k * t);
        let mut y_tilde = Matrix::zeros(k * t, k * t);
        for a in 0..k {
            for b in 0..k {
                let outer = x_bar.row(a).transpose() * x_bar.row(b);
                x_outer.view_mut((a * t, b * t), (t, t)).copy_from(&outer);
            }
        }
        let centered = centered_sym(&delta_bar);
        y_tilde.copy_from(&x_outer);
        for a in 0..k {
            let mut blk = y_tilde.view_mut((a * t, a * t), (t, t));
            blk += &centered * xi2[a];
        }
        Ok(TheoryInputs {
            dims,
            alpha: dims.alpha(),
            x_bar,
            z,
            delta_bar,
            xcal,
            xi2,
            sigma_bar2,
            e: p.e.clone(),
            x_outer,
            y_tilde,
        })
    }

    pub fn k(&self) -> usize {
        self.dims.k
    }

    pub fn t(&self) -> usize {
        self.dims.t
    }

    pub fn n(&self) -> usize {
        self.dims.n
    }

    pub fn has_kernel_fluctuations(&self) -> bool {
        self.xcal.iter().any(|m| m.iter().any(|v| *v != 0.0))
    }

    /// Copy with 𝓧 and σ̄² multiplied by the given fractions (continuation ramps).
    pub fn ramped(&self, xcal_frac: f64, sigma2_frac: f64) -> Self {
        let mut out = self.clone();
        for m in out.xcal.iter_mut() {
            *m *= xcal_frac;
        }
        for s in out.sigma_bar2.iter_mut() {
            *s *= sigma2_frac;
        }
        out
    }

    /// J_T, all entries 1/T.
    pub fn j_matrix(&self) -> Matrix {
        Matrix::from_element(self.t(), self.t(), 1.0 / self.t() as f64)
    }
}

/// sym(A(I − J)) = ½(A(I − J) + (I − J)Aᵀ).
pub fn centered_sym(a: &Matrix) -> Matrix {
    let t = a.nrows();
    let row_mean = a.column_mean();
    let mut c = a.clone();
    for j in 0..t {
        for i in 0..t {
            c[(i, j)] -= row_mean[i];
        }
    }
    (&c + c.transpose()) * 0.5
}

/// Builds theory inputs from a model spec, drawing modes with [`THEORY_MODE_SEED`].
pub fn precompute(model: &ModelSpec, g: &SmoothingKernel) -> Result<TheoryInputs> {
    let modes = modes_for(model, THEORY_MODE_SEED)?;
    precompute_with_modes(model, g, &modes)
}

pub fn precompute_with_modes(model: &ModelSpec, g: &SmoothingKernel, modes: &Modes) -> Result<TheoryInputs> {
    model.validate()?;
    let d = model.dims;
    let signal = signal_for(model)?;
    let delta = build_gaussian_delta(d.t, model.fluctuations.tau_xi, model.fluctuations.periodic)?.delta;
    let sigma = model.noise.sigmas(d.n);
    let stats;
    let kernel = match model.kernel {
        KernelSpec::Instantaneous => None,
        _ => {
            stats = population_kernel_stats(&model.kernel, d.t)?;
            Some((stats.mean.as_slice(), &stats.xi))
        }
    };
    TheoryInputs::from_parts(TheoryParts {
        x: &signal.x,
        e: &modes.e,
        sigma: &sigma,
        xi: &model.fluctuations.xi,
        delta: &delta,
        smoothing: g,
        kernel,
        samples: d.s,
        kernels_redrawn: model.redraw_kernels_per_sample,
    })
}
