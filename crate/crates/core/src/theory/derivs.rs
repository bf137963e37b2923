//! Energy, gradient and Hessian in packed coordinates.
//!
//! The KT×KT part is differentiated by hand (dense nalgebra); the per-component
//! part is differentiated with second-order jets over the conjugate variables;
//! the bilinear couplings are exact.

use super::energy::{linear_part, local_part};
use super::inputs::TheoryInputs;
use super::layout::{Block, Layout, OrderParams};
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::Matrix;

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub energy: f64,
    pub gradient: Vec<f64>,
    pub hessian: Option<Matrix>,
}

pub fn gradient(omega: &[f64], inp: &TheoryInputs) -> Result<Vec<f64>> {
    Ok(evaluate(omega, inp, false)?.gradient)
}

pub fn hessian(omega: &[f64], inp: &TheoryInputs) -> Result<Matrix> {
    Ok(evaluate(omega, inp, true)?.hessian.expect("requested"))
}

/// A structured KT×KT direction Σ_{(a,b) ∈ positions} E_ab ⊗ mat.
struct Basis<'a> {
    coord: usize,
    positions: Vec<(usize, usize)>,
    mat: &'a Matrix,
}

fn block(a: &Matrix, t: usize, i: usize, j: usize) -> nalgebra::DMatrixView<'_, f64> {
    a.view((i * t, j * t), (t, t))
}

impl Basis<'_> {
    fn inner(&self, a: &Matrix, t: usize) -> f64 {
        self.positions.iter().map(|&(i, j)| block(a, t, i, j).dot(self.mat)).sum()
    }

    /// A · B.
    fn right_mul(&self, a: &Matrix, t: usize) -> Matrix {
        let kt = a.nrows();
        let mut out = Matrix::zeros(kt, kt);
        for &(i, j) in &self.positions {
            let src = a.view((0, i * t), (kt, t));
            out.view_mut((0, j * t), (kt, t)).gemm(1.0, &src, self.mat, 1.0);
        }
        out
    }
}

/// Σ_j ⟨A_lj, B_jkᵀ⟩, the partial trace over time of A·B, as a K×K matrix.
pub(crate) fn ptrace_prod(a: &Matrix, b: &Matrix, k: usize, t: usize) -> Matrix {
    Matrix::from_fn(k, k, |l, kk| {
        (0..k).map(|j| block(a, t, l, j).dot(&block(b, t, j, kk).transpose())).sum()
    })
}

/// (C ⊗ I_T) · A for a K×K matrix C.
pub(crate) fn kron_left(c: &Matrix, a: &Matrix, t: usize) -> Matrix {
    let k = c.nrows();
    let kt = a.ncols();
    let mut out = Matrix::zeros(k * t, kt);
    for r in 0..k {
        for m in 0..k {
            let w = c[(r, m)];
            if w != 0.0 {
                let src = a.view((m * t, 0), (t, kt));
                let mut dst = out.view_mut((r * t, 0), (t, kt));
                dst.zip_apply(&src, |d, x| *d += w * x);
            }
        }
    }
    out
}

/// Z-and-𝓧 structured matrix Σ (C⊗Z) + contract(A).
fn structured(c: &Matrix, a: &Matrix, inp: &TheoryInputs, with_xcal: bool) -> Matrix {
    let (k, t) = (inp.k(), inp.t());
    let mut out = Matrix::zeros(k * t, k * t);
    for i in 0..k {
        for j in 0..k {
            let mut blk = out.view_mut((i * t, j * t), (t, t));
            let cij = c[(i, j)];
            blk.zip_apply(&inp.z, |d, x| *d = cij * x);
            if with_xcal {
                for ll in 0..k * k {
                    let w = a[(ll, i * k + j)];
                    if w != 0.0 {
                        blk.zip_apply(&inp.xcal[ll], |d, x| *d += w * x);
                    }
                }
            }
        }
    }
    out
}

/// (R ⊗ I) Ỹ (Rᵀ ⊗ I).
pub(crate) fn signal_term(r: &Matrix, inp: &TheoryInputs) -> Matrix {
    let t = inp.t();
    let left = kron_left(r, &inp.y_tilde, t);
    kron_left(r, &left.transpose(), t).transpose()
}

pub(crate) struct HState {
    pub h: Matrix,
    pub y: Matrix,
}

/// H and Y at the given order parameters.
pub(crate) fn h_state(p: &OrderParams<f64>, inp: &TheoryInputs) -> Result<HState> {
    let kt = inp.k() * inp.t();
    let with_xcal = inp.has_kernel_fluctuations();
    let l = structured(&p.w.to_f64(), &p.v.to_f64(), inp, with_xcal);
    let a = Matrix::identity(kt, kt) - l * 2.0;
    let h = a.try_inverse().ok_or_else(|| Error::Singular("I − 2(W⊗Z + vᵀ𝓧)".into()))?;
    let h = (&h + h.transpose()) * 0.5;
    let y = structured(&p.m.to_f64(), &p.q.to_f64(), inp, with_xcal) + signal_term(&p.r.to_f64(), inp);
    Ok(HState { h, y })
}

pub fn evaluate(omega: &[f64], inp: &TheoryInputs, want_hessian: bool) -> Result<Evaluation> {
    let (k, t) = (inp.k(), inp.t());
    let layout = Layout::new(k);
    let dim = layout.dim();
    if omega.len() != dim {
        return Err(Error::Dimension(format!("ω has {} entries, expected {dim}", omega.len())));
    }
    if omega.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("order parameters".into()));
    }
    let p = layout.unpack(omega);
    let c = inp.alpha / t as f64;
    let mut grad = vec![0.0; dim];
    let mut hess = want_hessian.then(|| Matrix::zeros(dim, dim));

    // KT×KT part
    let HState { h, y } = h_state(&p, inp)?;
    let e_h = c * h.dot(&y);
    let g_mat = &h * &y * &h;

    let with_xcal = inp.has_kernel_fluctuations();
    let xsum: Vec<Matrix> = (0..layout.p())
        .map(|pi| layout.class(pi).iter().fold(Matrix::zeros(t, t), |acc, &(a, b)| acc + &inp.xcal[a * k + b]))
        .collect();
    let mut theta = Vec::new();
    let mut phi = Vec::new();
    for (blk_sym, blk_four, list) in [(Block::W, Block::V, &mut theta), (Block::M, Block::Q, &mut phi)] {
        let r = layout.range(blk_sym);
        for pi in 0..layout.p() {
            list.push(Basis { coord: r.start + pi, positions: layout.class(pi), mat: &inp.z });
        }
        if with_xcal {
            let r = layout.range(blk_four);
            let pp = layout.p();
            for p1 in 0..pp {
                for p2 in 0..pp {
                    list.push(Basis { coord: r.start + p1 * pp + p2, positions: layout.class(p2), mat: &xsum[p1] });
                }
            }
        }
    }
    for b in &theta {
        grad[b.coord] += 2.0 * c * b.inner(&g_mat, t);
    }
    for b in &phi {
        grad[b.coord] += c * b.inner(&h, t);
    }
    let r_mat = p.r.to_f64();
    let rt = r_mat.transpose();
    let r_range = layout.range(Block::R);
    let rt_h = kron_left(&rt, &h, t);
    let g_r = ptrace_prod(&inp.y_tilde, &rt_h, k, t);
    for kk in 0..k {
        for l in 0..k {
            grad[r_range.start + kk * k + l] += 2.0 * c * g_r[(l, kk)];
        }
    }
    if let Some(hs) = hess.as_mut() {
        for a in &theta {
            let pa = a.right_mul(&g_mat, t) * &h;
            for b in &theta {
                hs[(a.coord, b.coord)] += 8.0 * c * b.inner(&pa, t);
            }
            let qa = a.right_mul(&h, t) * &h;
            for b in &phi {
                let v = 2.0 * c * b.inner(&qa, t);
                hs[(a.coord, b.coord)] += v;
                hs[(b.coord, a.coord)] += v;
            }
            let tr = ptrace_prod(&inp.y_tilde, &kron_left(&rt, &qa, t), k, t);
            for kk in 0..k {
                for l in 0..k {
                    let v = 4.0 * c * tr[(l, kk)];
                    let rc = r_range.start + kk * k + l;
                    hs[(a.coord, rc)] += v;
                    hs[(rc, a.coord)] += v;
                }
            }
        }
        for k1 in 0..k {
            for l1 in 0..k {
                for k2 in 0..k {
                    for l2 in 0..k {
                        let v = 2.0 * c * block(&h, t, k1, k2).dot(&block(&inp.y_tilde, t, l1, l2));
                        hs[(r_range.start + k1 * k + l1, r_range.start + k2 * k + l2)] += v;
                    }
                }
            }
        }
    }

    // per-component part, jets over the conjugate coordinates
    let h0 = layout.hat_start();
    let nh = dim - h0;
    let jets: Vec<Jet> = omega
        .iter()
        .enumerate()
        .map(|(i, &v)| if i < h0 { Jet::constant(v) } else { Jet::variable(v, i - h0, nh) })
        .collect();
    let pj: OrderParams<Jet> = layout.unpack(&jets);
    let loc = local_part(&pj, inp)?;
    let lg = loc.gradient(nh);
    for i in 0..nh {
        grad[h0 + i] += lg[i];
    }
    if let Some(hs) = hess.as_mut() {
        let lh = loc.hessian(nh);
        for i in 0..nh {
            for j in 0..nh {
                hs[(h0 + i, h0 + j)] += lh[i * nh + j];
            }
        }
    }

    // bilinear and linear couplings
    let lin = linear_part(&p);
    for (i, j, cf) in layout.bilinear_terms() {
        grad[i] += cf * omega[j];
        grad[j] += cf * omega[i];
        if let Some(hs) = hess.as_mut() {
            hs[(i, j)] += cf;
            hs[(j, i)] += cf;
        }
    }
    for (i, cf) in layout.linear_terms() {
        grad[i] += cf;
    }

    if let Some(hs) = hess.as_mut() {
        let sym = (&*hs + hs.transpose()) * 0.5;
        *hs = sym;
    }
    let energy = loc.v + e_h + lin;
    if !energy.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("energy or gradient".into()));
    }
    Ok(Evaluation { energy, gradient: grad, hessian: hess })
}

/// Energy only, f64, using the dense fast path for the KT×KT term.
pub fn energy_value(omega: &[f64], inp: &TheoryInputs) -> Result<f64> {
    let layout = Layout::new(inp.k());
    let p = layout.unpack(omega);
    let HState { h, y } = h_state(&p, inp)?;
    let c = inp.alpha / inp.t() as f64;
    Ok(local_part(&p, inp)? + c * h.dot(&y) + linear_part(&p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(r: usize, c: usize, seed: f64) -> Matrix {
        Matrix::from_fn(r, c, |i, j| ((i * 7 + j * 3) as f64 * seed).sin())
    }

    #[test]
    fn partial_trace_and_kron_match_loops() {
        let (k, t) = (3, 4);
        let a = filled(k * t, k * t, 0.37);
        let b = filled(k * t, k * t, 0.91);
        let c = filled(k, k, 1.3);
        let pt = ptrace_prod(&a, &b, k, t);
        let ab = &a * &b;
        for l in 0..k {
            for m in 0..k {
                let want: f64 = (0..t).map(|s| ab[(l * t + s, m * t + s)]).sum();
                assert!((pt[(l, m)] - want).abs() < 1e-12);
            }
        }
        let kl = kron_left(&c, &a, t);
        let want = c.kronecker(&Matrix::identity(t, t)) * &a;
        assert!((kl - want).amax() < 1e-12);
    }
}
