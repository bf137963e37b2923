//! Ground-state energy, generic over the scalar type.
//!
//! E = −(1/2N) Σ_i Tr(B_i S_i) + (α/T) Tr(H Y) + linear couplings, with
//! H = (I − 2(W⊗Z + contract(v)))⁻¹, Y = M⊗Z + contract(q) + (R⊗I) Ỹ (Rᵀ⊗I),
//! B_i = (σ̄_i² Ŵ + Û + mat(v̂ᵀ y_i))⁻¹, S_i = σ̄_i² M̂ + mat(q̂ᵀ y_i) − R̂e_i e_iᵀR̂ᵀ,
//! y_i = e_i ⊗ e_i.

use super::inputs::TheoryInputs;
use super::layout::{Layout, OrderParams};
use crate::error::{Error, Result};
use crate::scalar::{Mat, Scalar};

pub fn energy<S: Scalar>(omega: &[S], inp: &TheoryInputs) -> Result<S> {
    let layout = Layout::new(inp.k());
    let p = layout.unpack(omega);
    Ok(local_part(&p, inp)? + h_part(&p, inp)? + linear_part(&p))
}

/// Block (k, k') = Σ_{(l,l')} A[(l,l'), (k,k')] 𝓧^{(l,l')}, as a KT×KT matrix.
pub fn contract<S: Scalar>(a: &Mat<S>, inp: &TheoryInputs) -> Mat<S> {
    let (k, t) = (inp.k(), inp.t());
    let mut out = Mat::zeros(k * t, k * t);
    for ll in 0..k * k {
        let x = &inp.xcal[ll];
        if x.iter().all(|v| *v == 0.0) {
            continue;
        }
        for kk in 0..k * k {
            let coef = a[(ll, kk)].clone();
            if coef.is_zero() {
                continue;
            }
            let (r0, c0) = ((kk / k) * t, (kk % k) * t);
            for i in 0..t {
                for j in 0..t {
                    let slot: &mut S = &mut out[(r0 + i, c0 + j)];
                    *slot = slot.clone() + coef.clone() * S::from_f64(x[(i, j)]);
                }
            }
        }
    }
    out
}

fn kron_f64<S: Scalar>(a: &Mat<S>, b: &crate::Matrix) -> Mat<S> {
    a.kron(&Mat::from_f64(b))
}

/// (α/T) Tr(H Y).
pub fn h_part<S: Scalar>(p: &OrderParams<S>, inp: &TheoryInputs) -> Result<S> {
    let (k, t) = (inp.k(), inp.t());
    let two = S::from_f64(2.0);
    let l = kron_f64(&p.w, &inp.z).add(&contract(&p.v, inp));
    let a = Mat::identity(k * t).sub(&l.scale(two));
    let h = a.inverse().ok_or_else(|| Error::Singular("I − 2(W⊗Z + vᵀ𝓧)".into()))?;
    let ri = p.r.kron(&Mat::identity(t));
    let y = kron_f64(&p.m, &inp.z)
        .add(&contract(&p.q, inp))
        .add(&ri.matmul(&Mat::from_f64(&inp.y_tilde)).matmul(&ri.transpose()));
    Ok(S::from_f64(inp.alpha / t as f64) * h.dot(&y.transpose()))
}

/// Per-component matrices (D_i, S_i) with B_i = D_i⁻¹.
pub fn local_matrices<S: Scalar>(p: &OrderParams<S>, inp: &TheoryInputs, i: usize) -> (Mat<S>, Mat<S>) {
    let k = inp.k();
    let s2 = S::from_f64(inp.sigma_bar2[i]);
    let e: Vec<f64> = (0..k).map(|a| inp.e[(a, i)]).collect();
    let mut d = p.w_hat.scale(s2.clone()).add(&p.u_hat);
    let mut s = p.m_hat.scale(s2);
    for ll in 0..k * k {
        let y = e[ll / k] * e[ll % k];
        if y == 0.0 {
            continue;
        }
        let y = S::from_f64(y);
        for a in 0..k {
            for b in 0..k {
                let kk = a * k + b;
                d[(a, b)] = d[(a, b)].clone() + y.clone() * p.v_hat[(ll, kk)].clone();
                s[(a, b)] = s[(a, b)].clone() + y.clone() * p.q_hat[(ll, kk)].clone();
            }
        }
    }
    let re: Vec<S> = (0..k)
        .map(|a| (0..k).fold(S::zero(), |acc, b| acc + p.r_hat[(a, b)].clone() * S::from_f64(e[b])))
        .collect();
    for a in 0..k {
        for b in 0..k {
            s[(a, b)] = s[(a, b)].clone() - re[a].clone() * re[b].clone();
        }
    }
    (d, s)
}

/// −(1/2N) Σ_i Tr(B_i S_i).
pub fn local_part<S: Scalar>(p: &OrderParams<S>, inp: &TheoryInputs) -> Result<S> {
    let n = inp.n();
    let mut acc = S::zero();
    for i in 0..n {
        let (d, s) = local_matrices(p, inp, i);
        let b = d.inverse().ok_or_else(|| Error::Singular(format!("σ̄²Ŵ + Û + v̂ᵀ(e⊗e) at component {i}")))?;
        acc = acc + b.dot(&s.transpose());
    }
    Ok(acc * S::from_f64(-0.5 / n as f64))
}

/// ½Tr Û + ½⟨v̂,q⟩ + ½⟨q̂,v⟩ + ⟨R̂,R⟩ + ½⟨Ŵ,M⟩ + ½⟨M̂,W⟩.
pub fn linear_part<S: Scalar>(p: &OrderParams<S>) -> S {
    let half = S::from_f64(0.5);
    half.clone() * p.u_hat.trace()
        + half.clone() * p.v_hat.dot(&p.q)
        + half.clone() * p.q_hat.dot(&p.v)
        + p.r_hat.dot(&p.r)
        + half.clone() * p.w_hat.dot(&p.m)
        + half * p.m_hat.dot(&p.w)
}
