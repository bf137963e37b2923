use super::derivs::evaluate;
use super::inputs::{centered_sym, TheoryInputs};
use super::layout::{Block, Layout, OrderParams};
use crate::error::{Error, Result};
use crate::scalar::Mat;
use crate::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug)]
pub struct ZeroNoiseInit {
    pub omega: Vec<f64>,
    /// Eigenvalues of A in aligned order.
    pub d: Vec<f64>,
    /// Aligned eigenvector rows.
    pub p: Matrix,
}

/// Exact saddle at σ = 0, Ξ = 0: from A = diag(ξ²) Tr(Δ̄(I−J))/T + x̄x̄ᵀ/T = PᵀDP.
pub fn init_zero_noise(inp: &TheoryInputs) -> Result<ZeroNoiseInit> {
    let (k, t, n) = (inp.k(), inp.t(), inp.n());
    let tf = t as f64;
    let alpha = inp.alpha;
    let xi2 = Matrix::from_diagonal(&crate::Vector::from_vec(inp.xi2.clone()));
    let centered = centered_sym(&inp.delta_bar);
    let a = &xi2 * (centered.trace() / tf) + &inp.x_bar * inp.x_bar.transpose() / tf;
    let a_z = &xi2 * ((&inp.z * &centered).trace() / tf) + &inp.x_bar * &inp.z * inp.x_bar.transpose() / tf;

    let scale = a.amax();
    let off = (0..k).flat_map(|i| (0..k).filter(move |j| *j != i).map(move |j| (i, j))).fold(0.0f64, |m, (i, j)| m.max(a[(i, j)].abs()));
    let p = if off <= 1e-13 * scale {
        Matrix::identity(k, k)
    } else {
        let eig = a.clone().symmetric_eigen();
        align_rows(&eig.eigenvectors.transpose())
    };
    let pap = &p * &a * p.transpose();
    let d: Vec<f64> = (0..k).map(|i| pap[(i, i)]).collect();
    let dmax = d.iter().cloned().fold(0.0, f64::max);
    if d.iter().any(|x| *x <= 1e-12 * dmax.max(f64::MIN_POSITIVE)) || dmax <= 0.0 {
        return Err(Error::DegenerateSignal(format!("signal covariance eigenvalues {d:?} are not all positive")));
    }

    let mut o = OrderParams::<f64>::zeros(k);
    let dm = Matrix::from_diagonal(&crate::Vector::from_vec(d.clone()));
    o.r = Mat::from_f64(&p);
    o.r_hat = Mat::from_f64(&(&dm * &p * (-2.0 * alpha)));
    o.u_hat = Mat::from_f64(&(&dm * (2.0 * alpha)));
    o.w_hat = Mat::from_f64(&(Matrix::identity(k, k) * (-2.0 * alpha)));
    o.m_hat = Mat::from_f64(&(&p * &a_z * p.transpose() * (-4.0 * alpha)));
    let u_inv: Vec<f64> = d.iter().map(|x| 1.0 / (2.0 * alpha * x)).collect();
    let pe = &p * &inp.e;
    for i in 0..n {
        for ab in 0..k * k {
            let y = inp.e[(ab / k, i)] * inp.e[(ab % k, i)] / n as f64;
            if y == 0.0 {
                continue;
            }
            for cd in 0..k * k {
                let (c, dd) = (cd / k, cd % k);
                o.q[(ab, cd)] += y * pe[(c, i)] * pe[(dd, i)];
                if c == dd {
                    o.v[(ab, cd)] += y * u_inv[c];
                }
            }
        }
    }
    let omega = Layout::new(k).pack(&o);
    Ok(ZeroNoiseInit { omega, d, p })
}

/// Permutes and sign-flips rows so the result is as close to I as possible.
fn align_rows(p: &Matrix) -> Matrix {
    crate::estimator::align(p, &Matrix::identity(p.nrows(), p.nrows())).0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 50, max_halvings: 30 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl Inertia {
    pub fn of(h: &Matrix) -> Self {
        let ev = h.clone().symmetric_eigen().eigenvalues;
        let tol = 1e-12 * ev.amax().max(1e-300);
        let mut out = Inertia::default();
        for l in ev.iter() {
            if *l > tol {
                out.positive += 1;
            } else if *l < -tol {
                out.negative += 1;
            } else {
                out.zero += 1;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub iterations: usize,
    /// ‖∇E‖∞ over all coordinates.
    pub grad_norm: f64,
    pub energy: f64,
    pub inertia: Inertia,
}

/// Coordinates Newton moves: everything but the off-diagonal Û entries, which
/// fix the O(K) gauge freedom of the conjugate index.
pub fn free_coordinates(k: usize) -> Vec<usize> {
    let layout = Layout::new(k);
    let gauge = layout.gauge_coordinates();
    (0..layout.dim()).filter(|i| !gauge.contains(i)).collect()
}

fn max_abs(g: &[f64], idx: &[usize]) -> f64 {
    idx.iter().fold(0.0, |m, &i| m.max(g[i].abs()))
}

/// Damped Newton iteration ω ← ω − λ 𝓗⁻¹∇E on the free coordinates.
pub fn newton_solve(omega0: &[f64], inp: &TheoryInputs, opts: NewtonOptions) -> Result<(Vec<f64>, NewtonReport)> {
    let free = free_coordinates(inp.k());
    let mut omega = omega0.to_vec();
    for it in 0..=opts.max_iter {
        let ev = evaluate(&omega, inp, true)?;
        let gn = max_abs(&ev.gradient, &free);
        let hs = ev.hessian.expect("requested");
        if gn < opts.tol {
            let all: Vec<usize> = (0..omega.len()).collect();
            return Ok((
                omega,
                NewtonReport {
                    iterations: it,
                    grad_norm: max_abs(&ev.gradient, &all),
                    energy: ev.energy,
                    inertia: Inertia::of(&hs),
                },
            ));
        }
        if it == opts.max_iter {
            return Err(Error::NoConvergence { iterations: it, grad_norm: gn });
        }
        let hf = Matrix::from_fn(free.len(), free.len(), |a, b| hs[(free[a], free[b])]);
        let gf = crate::Vector::from_iterator(free.len(), free.iter().map(|&i| ev.gradient[i]));
        let step = hf.lu().solve(&gf).ok_or_else(|| Error::Singular("Hessian".into()))?;
        if step.iter().any(|s| !s.is_finite()) {
            return Err(Error::Singular("Hessian".into()));
        }
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut trial = omega.clone();
            for (a, &i) in free.iter().enumerate() {
                trial[i] -= lambda * step[a];
            }
            if let Ok(tv) = evaluate(&trial, inp, false) {
                if max_abs(&tv.gradient, &free) < gn {
                    accepted = Some(trial);
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some(w) => omega = w,
            None => return Err(Error::NoConvergence { iterations: it, grad_norm: gn }),
        }
    }
    unreachable!("loop returns on its last iteration")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    pub steps_xi: usize,
    pub steps_sigma: usize,
    /// Maximum number of successive step halvings before the path is declared failed.
    pub max_bisections: usize,
    pub newton: NewtonOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions { steps_xi: 10, steps_sigma: 20, max_bisections: 8, newton: NewtonOptions::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Init,
    Xi,
    Sigma,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub stage: Stage,
    /// Fraction of 𝓧 applied.
    pub xcal_frac: f64,
    /// Fraction of σ̄² applied.
    pub sigma2_frac: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub energy: f64,
    /// Row norms of R (a vanishing row means that mode is no longer recovered).
    pub r_row_norms: Vec<f64>,
    pub omega: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub points: Vec<PathPoint>,
    pub bisections: usize,
    /// First ramp stage and fraction at which a step could not be completed.
    pub failure: Option<(Stage, f64)>,
    /// Modes moved onto the no-recovery branch, with the stage and fraction where it happened.
    pub dropped: Vec<(usize, Stage, f64)>,
}

impl PathRecord {
    /// σ̄² fraction at which inferred mode `k` first lost its overlap
    /// (R row norm < 1e-6, or the mode was dropped).
    pub fn collapse_fraction(&self, k: usize) -> Option<f64> {
        let seen = self.points.iter().find(|p| p.stage == Stage::Sigma && p.r_row_norms[k] < 1e-6).map(|p| p.sigma2_frac);
        let dropped = self.dropped.iter().find(|d| d.0 == k && d.1 == Stage::Sigma).map(|d| d.2);
        match (seen, dropped) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Continuation,
    NoRecovery,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Saddle {
    pub omega: Vec<f64>,
    pub report: NewtonReport,
    pub path: PathRecord,
    pub branch: Branch,
}

fn r_row_norms(omega: &[f64], k: usize) -> Vec<f64> {
    let r = Layout::new(k).range(Block::R);
    (0..k).map(|a| (0..k).map(|b| omega[r.start + a * k + b].powi(2)).sum::<f64>().sqrt()).collect()
}

fn record(path: &mut PathRecord, stage: Stage, xf: f64, sf: f64, omega: &[f64], rep: &NewtonReport, k: usize) {
    path.points.push(PathPoint {
        stage,
        xcal_frac: xf,
        sigma2_frac: sf,
        iterations: rep.iterations,
        grad_norm: rep.grad_norm,
        energy: rep.energy,
        r_row_norms: r_row_norms(omega, k),
        omega: omega.to_vec(),
    });
}

struct Progress {
    omega: Vec<f64>,
    report: NewtonReport,
    path: PathRecord,
}

/// Zeroes row `a` of R and R̂: inferred mode `a` carries no overlap.
fn drop_mode(omega: &mut [f64], k: usize, a: usize) {
    let layout = Layout::new(k);
    for b in [Block::R, Block::RHat] {
        let start = layout.range(b).start + a * k;
        omega[start..start + k].fill(0.0);
    }
}

/// Ramps 𝓧 then σ̄². When a step cannot be completed, either stops (strict) or
/// moves the weakest still-recovered mode onto its R = 0 branch and carries on.
fn run(target: &TheoryInputs, opts: ContinuationOptions, strict: bool) -> Result<Progress> {
    let k = target.k();
    let init = init_zero_noise(target)?;
    let base = target.ramped(0.0, 0.0);
    let (mut omega, mut report) = newton_solve(&init.omega, &base, opts.newton)?;
    let mut path = PathRecord::default();
    record(&mut path, Stage::Init, 0.0, 0.0, &omega, &report, k);
    let mut alive: Vec<usize> = (0..k).collect();

    let ramps = [
        (Stage::Xi, opts.steps_xi, target.has_kernel_fluctuations()),
        (Stage::Sigma, opts.steps_sigma, target.sigma_bar2.iter().any(|s| *s > 0.0)),
    ];
    let mut xf = 0.0;
    let mut sf = 0.0;
    for (stage, steps, active) in ramps {
        if active {
            let h0 = 1.0 / steps.max(1) as f64;
            let mut h = h0;
            let mut f = 0.0;
            let mut halvings = 0;
            while f < 1.0 {
                let next = (f + h).min(1.0);
                let (x, s) = if stage == Stage::Xi { (next, sf) } else { (xf, next) };
                match newton_solve(&omega, &target.ramped(x, s), opts.newton) {
                    Ok((w, rep)) => {
                        omega = w;
                        report = rep;
                        f = next;
                        record(&mut path, stage, x, s, &omega, &report, k);
                        halvings = 0;
                        h = (2.0 * h).min(h0);
                    }
                    Err(e) if e.is_numerical() => {
                        h *= 0.5;
                        halvings += 1;
                        path.bisections += 1;
                        if halvings <= opts.max_bisections {
                            continue;
                        }
                        let here = if stage == Stage::Xi { f } else { sf.max(f) };
                        if path.failure.is_none() {
                            path.failure = Some((stage, here));
                        }
                        if strict || alive.is_empty() {
                            return Err(Error::PathFailure { stage: format!("{stage:?}").to_lowercase(), fraction: here });
                        }
                        let norms = r_row_norms(&omega, k);
                        let (pos, &a) = alive
                            .iter()
                            .enumerate()
                            .min_by(|x, y| norms[*x.1].total_cmp(&norms[*y.1]))
                            .expect("nonempty");
                        alive.remove(pos);
                        path.dropped.push((a, stage, here));
                        drop_mode(&mut omega, k, a);
                        h = h0;
                        halvings = 0;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        if stage == Stage::Xi {
            xf = 1.0;
        } else {
            sf = 1.0;
        }
    }
    Ok(Progress { omega, report, path })
}

/// Tracks the saddle from the zero-noise point: ramps 𝓧 then σ̄² to their targets.
/// Fails with a path error (carrying the last good ramp fraction) if a step cannot
/// be completed after the allowed bisections.
pub fn continuation_solve(target: &TheoryInputs, opts: ContinuationOptions) -> Result<Saddle> {
    let p = run(target, opts, true)?;
    Ok(Saddle { omega: p.omega, report: p.report, path: p.path, branch: Branch::Continuation })
}

/// Like [`continuation_solve`], but past a path failure the weakest recovered mode
/// is moved onto the no-recovery branch (its rows of R and R̂ set to zero) and the
/// ramp continues from there.
pub fn solve_theory(target: &TheoryInputs, opts: ContinuationOptions) -> Result<Saddle> {
    let p = run(target, opts, false)?;
    let branch = if p.path.dropped.is_empty() { Branch::Continuation } else { Branch::NoRecovery };
    Ok(Saddle { omega: p.omega, report: p.report, path: p.path, branch })
}
