//! Generative model: latent signal, modes, fluctuations, kernels, noise.

mod generate;
mod kernel;

pub use generate::*;
pub use kernel::{kernel_from_times, population_kernel_stats, sample_kernels, KernelSample, KernelStats};

use crate::error::{Error, Result};
use crate::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub n: usize,
    pub t: usize,
    pub k: usize,
    #[serde(default = "one")]
    pub s: usize,
}

fn one() -> usize {
    1
}

impl Dims {
    pub fn new(n: usize, t: usize, k: usize, s: usize) -> Result<Self> {
        let d = Dims { n, t, k, s };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t == 0 || self.k == 0 || self.s == 0 {
            return Err(Error::Dimension(format!("all of N, T, K, S must be positive, got {self:?}")));
        }
        if self.k > self.n.min(self.t) {
            return Err(Error::Dimension(format!("K = {} exceeds min(N, T) = {}", self.k, self.n.min(self.t))));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.t as f64 / self.n as f64
    }

    pub fn r(&self) -> f64 {
        self.n as f64 / self.t as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentSignal {
    /// K×T, rows centered.
    pub x: Matrix,
    pub amplitudes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Modes {
    /// K×N, rows of squared norm N, mutually orthogonal.
    pub e: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalSpec {
    /// Two-mode tilted figure-eight profile.
    TiltedInfinity { amplitudes: [f64; 2] },
    /// Single sine period, K = 1.
    Sine { amplitude: f64 },
    /// Arbitrary K×T rows (re-centered on use).
    Custom { rows: Vec<Vec<f64>> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeLayout {
    /// Gaussian draws, Gram-Schmidt, scaled to √N.
    #[default]
    Random,
    /// Random, except components 0..4 carry the A/B/C/D loadings
    /// (1, 0), (1, 1), (0, 1), (0, 0). Requires K = 2.
    Abcd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluctuationSpec {
    /// Per-mode standard deviations ξ^(k), signal units.
    pub xi: Vec<f64>,
    /// Correlation width in time steps.
    pub tau_xi: f64,
    #[serde(default = "yes")]
    pub periodic: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaParams {
    pub shape: f64,
    /// Time steps.
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    /// F = δ_{τ,0}, no fluctuations.
    #[default]
    Instantaneous,
    /// Difference-of-exponentials kernels with Gamma-distributed rise/decay times.
    Gamma {
        rise: GammaParams,
        decay: GammaParams,
        /// Support length in time steps; defaults to min(T, ceil(6 θ_d k_d)).
        #[serde(default)]
        support: Option<usize>,
    },
}

impl KernelSpec {
    pub fn support(&self, t: usize) -> usize {
        match self {
            KernelSpec::Instantaneous => 1,
            KernelSpec::Gamma { decay, support, .. } => {
                support.unwrap_or_else(|| ((6.0 * decay.scale * decay.shape).ceil() as usize).clamp(1, t))
            }
        }
    }

    pub fn validate(&self, t: usize) -> Result<()> {
        if let KernelSpec::Gamma { rise, decay, support } = self {
            for (name, v) in [
                ("kernel.rise.shape", rise.shape),
                ("kernel.rise.scale", rise.scale),
                ("kernel.decay.shape", decay.shape),
                ("kernel.decay.scale", decay.scale),
            ] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::param(name, format!("must be positive, got {v}")));
                }
            }
            if let Some(l) = support {
                if *l == 0 || *l > t {
                    return Err(Error::param("kernel.support", format!("must lie in 1..={t}, got {l}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sigma {
    Uniform(f64),
    PerComponent(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Standard deviation of the fast noise, one value or one per component.
    pub sigma: Sigma,
}

impl NoiseSpec {
    pub fn uniform(sigma: f64) -> Self {
        NoiseSpec { sigma: Sigma::Uniform(sigma) }
    }

    pub fn sigmas(&self, n: usize) -> Vec<f64> {
        match &self.sigma {
            Sigma::Uniform(s) => vec![*s; n],
            Sigma::PerComponent(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub dims: Dims,
    pub signal: SignalSpec,
    #[serde(default)]
    pub modes: ModeLayout,
    pub fluctuations: FluctuationSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    pub noise: NoiseSpec,
    /// Redraw δF for every sample instead of fixing it per experiment.
    #[serde(default)]
    pub redraw_kernels_per_sample: bool,
}

impl ModelSpec {
    /// The two-mode reference configuration: N = T = 200, amplitudes (0.1, 0.045),
    /// σ = 1, fluctuation ratio 0.017 with τ_ξ = 10, instantaneous probes.
    pub fn reference() -> Self {
        let a = [0.1, 0.045];
        ModelSpec {
            dims: Dims { n: 200, t: 200, k: 2, s: 1 },
            signal: SignalSpec::TiltedInfinity { amplitudes: a },
            modes: ModeLayout::Random,
            fluctuations: FluctuationSpec { xi: vec![0.017 * a[0], 0.017 * a[1]], tau_xi: 10.0, periodic: true },
            kernel: KernelSpec::Instantaneous,
            noise: NoiseSpec::uniform(1.0),
            redraw_kernels_per_sample: false,
        }
    }

    /// Sets ξ^(k) = ratio · a^(k).
    pub fn with_xi_ratio(mut self, ratio: f64) -> Self {
        let amps = self.signal_amplitudes();
        self.fluctuations.xi = amps.iter().map(|a| ratio * a).collect();
        self
    }

    pub fn signal_amplitudes(&self) -> Vec<f64> {
        match &self.signal {
            SignalSpec::TiltedInfinity { amplitudes } => amplitudes.to_vec(),
            SignalSpec::Sine { amplitude } => vec![*amplitude],
            SignalSpec::Custom { rows } => rows
                .iter()
                .map(|r| {
                    let m = r.iter().sum::<f64>() / r.len().max(1) as f64;
                    (r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / r.len().max(1) as f64).sqrt()
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let (k, n, t) = (self.dims.k, self.dims.n, self.dims.t);
        match &self.signal {
            SignalSpec::TiltedInfinity { .. } if k != 2 => {
                return Err(Error::UnsupportedProfile(format!("tilted-infinity needs K = 2, got K = {k}")))
            }
            SignalSpec::Sine { .. } if k != 1 => {
                return Err(Error::UnsupportedProfile(format!("sine needs K = 1, got K = {k}")))
            }
            SignalSpec::Custom { rows } if rows.len() != k || rows.iter().any(|r| r.len() != t) => {
                return Err(Error::Dimension(format!("custom signal must be {k}×{t}")));
            }
            _ => {}
        }
        if self.modes == ModeLayout::Abcd && (k != 2 || n < 8) {
            return Err(Error::param("modes", "abcd layout needs K = 2 and N ≥ 8"));
        }
        let f = &self.fluctuations;
        if f.xi.len() != k {
            return Err(Error::Dimension(format!("fluctuations.xi has {} entries, expected K = {k}", f.xi.len())));
        }
        if f.xi.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::param("fluctuations.xi", "entries must be finite and ≥ 0"));
        }
        if !(f.tau_xi > 0.0 && f.tau_xi.is_finite()) {
            return Err(Error::param("fluctuations.tau_xi", format!("must be positive, got {}", f.tau_xi)));
        }
        self.kernel.validate(t)?;
        let sig = self.noise.sigmas(n);
        if sig.len() != n {
            return Err(Error::Dimension(format!("noise.sigma has {} entries, expected N = {n}", sig.len())));
        }
        if sig.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::param("noise.sigma", "entries must be finite and ≥ 0"));
        }
        Ok(())
    }
}

/// Ground truth retained alongside generated data.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub signal: LatentSignal,
    pub modes: Modes,
    /// Realized δx per sample (K×T each).
    pub dx: Vec<Matrix>,
    /// Realized per-component kernels (N×L) per distinct draw; empty for instantaneous probes.
    pub kernels: Vec<Matrix>,
    /// Population mean kernel convolved with x: the noiseless trajectory the data carries (K×T).
    pub x_filtered: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// N×T measurements (sample average when `samples > 1`).
    pub s: Matrix,
    pub spec: ModelSpec,
    pub truth: GroundTruth,
    pub samples: usize,
}
