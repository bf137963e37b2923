use super::derivs::{h_state, kron_left, ptrace_prod, signal_term};
use super::energy::local_matrices;
use super::inputs::TheoryInputs;
use super::layout::Layout;
use crate::error::{Error, Result};
use crate::Matrix;

/// Trajectory error matrix at a saddle:
/// (1/T)[x̄x̄ᵀ − 2Tr_T(H(R⊗I)X) + Tr_T(H(M⊗Z + qᵀ𝓧 + R diag(ξ²)Rᵀ⊗Δ̄)(I⊗J)) + Tr_T(H Y H)].
pub fn epsilon_theory(omega: &[f64], inp: &TheoryInputs) -> Result<Matrix> {
    let (k, t) = (inp.k(), inp.t());
    let p = Layout::new(k).unpack(omega);
    let st = h_state(&p, inp)?;
    let r = p.r.to_f64();
    let xi2 = Matrix::from_diagonal(&crate::Vector::from_vec(inp.xi2.clone()));
    let rxr = &r * xi2 * r.transpose();

    let base = &st.y - signal_term(&r, inp);
    let mut t3 = base;
    for a in 0..k {
        for b in 0..k {
            let mut blk = t3.view_mut((a * t, b * t), (t, t));
            let w = rxr[(a, b)];
            blk.zip_apply(&inp.delta_bar, |d, x| *d += w * x);
            // right-multiply the block by J: every column becomes the row mean
            let means = blk.column_mean();
            for j in 0..t {
                blk.column_mut(j).copy_from(&means);
            }
        }
    }
    let cross = ptrace_prod(&st.h, &kron_left(&r, &inp.x_outer, t), k, t);
    let third = ptrace_prod(&st.h, &t3, k, t);
    let fourth = ptrace_prod(&st.h, &(&st.y * &st.h), k, t);
    let eps = (&inp.x_bar * inp.x_bar.transpose() - cross * 2.0 + third + fourth) / t as f64;
    // the cross and J terms are not separately symmetric; ε is, by definition
    let eps = (&eps + eps.transpose()) * 0.5;
    if eps.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ε".into()));
    }
    Ok(eps)
}

/// ρ = I − (R + Rᵀ)/2.
pub fn rho_theory(omega: &[f64], k: usize) -> Matrix {
    let r = Layout::new(k).unpack(omega).r.to_f64();
    Matrix::identity(k, k) - (&r + r.transpose()) * 0.5
}

/// Per-component uncertainty
/// ρ_i = −½ B_i S_i B_i + ½ e_i e_iᵀ + ½(B_i R̂ e_i e_iᵀ + e_i e_iᵀ R̂ᵀ B_i).
pub fn rho_local(omega: &[f64], inp: &TheoryInputs, i: usize) -> Result<Matrix> {
    let k = inp.k();
    if i >= inp.n() {
        return Err(Error::Dimension(format!("component {i} out of range (N = {})", inp.n())));
    }
    let p = Layout::new(k).unpack(omega);
    let (d, s) = local_matrices(&p, inp, i);
    let b = d
        .to_f64()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("σ̄²Ŵ + Û + v̂ᵀ(e⊗e) at component {i}")))?;
    let s = s.to_f64();
    let e = inp.e.column(i).clone_owned();
    let eet = &e * e.transpose();
    let rh = p.r_hat.to_f64();
    let cross = &b * &rh * &eet;
    let out = -(&b * s * &b) * 0.5 + &eet * 0.5 + (&cross + cross.transpose()) * 0.5;
    Ok((&out + out.transpose()) * 0.5)
}

pub fn rho_local_all(omega: &[f64], inp: &TheoryInputs) -> Result<Vec<Matrix>> {
    (0..inp.n()).map(|i| rho_local(omega, inp, i)).collect()
}

fn check_nonneg(pairs: &[(&str, f64)]) -> Result<()> {
    for (name, v) in pairs {
        if !(*v >= 0.0 && v.is_finite()) {
            return Err(Error::param(name, format!("must be finite and ≥ 0, got {v}")));
        }
    }
    Ok(())
}

/// K = 1 overlap R = sqrt[((v+ξ²)²T − σ⁴/N) / ((v+ξ²)((v+ξ²)T + σ²))], clamped to [0, 1].
pub fn closed_form_overlap(var_x: f64, xi: f64, sigma: f64, n: usize, t: usize) -> Result<f64> {
    check_nonneg(&[("var_x", var_x), ("xi", xi), ("sigma", sigma)])?;
    if n == 0 || t == 0 {
        return Err(Error::param("N, T", "must be positive"));
    }
    let a = var_x + xi * xi;
    let (tf, nf) = (t as f64, n as f64);
    let num = a * a * tf - sigma.powi(4) / nf;
    let den = a * (a * tf + sigma * sigma);
    if num <= 0.0 || den <= 0.0 {
        return Ok(0.0);
    }
    Ok((num / den).sqrt().clamp(0.0, 1.0))
}

/// Large-N expansion ρ ≈ ρ_∞ + ρ_1/N of 1 − R.
pub fn rho_finite_size(var_x: f64, xi: f64, sigma: f64, t: usize) -> Result<(f64, f64)> {
    check_nonneg(&[("var_x", var_x), ("xi", xi), ("sigma", sigma)])?;
    let a = var_x + xi * xi;
    let tf = t as f64;
    if sigma == 0.0 {
        return Ok((0.0, 0.0));
    }
    let rho_inf = 1.0 - (a * tf / (a * tf + sigma * sigma)).sqrt();
    let rho_1 = sigma.powi(4) / (2.0 * (tf * a.powi(3) * (a * tf + sigma * sigma)).sqrt());
    Ok((rho_inf, rho_1))
}
