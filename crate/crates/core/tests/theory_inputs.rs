use hetpca::estimator::SmoothingKernel;
use hetpca::model::{build_gaussian_delta, ModelSpec, NoiseSpec, SignalSpec};
use hetpca::theory::*;
use hetpca::{Jet, Matrix};

fn parts_k1(x: &Matrix, e: &Matrix, sigma: &[f64], xi: f64, delta: &Matrix, g: &SmoothingKernel) -> TheoryInputs {
    TheoryInputs::from_parts(TheoryParts {
        x,
        e,
        sigma,
        xi: &[xi],
        delta,
        smoothing: g,
        kernel: None,
        samples: 1,
        kernels_redrawn: false,
    })
    .unwrap()
}

#[test]
fn packed_dimension_matches_parameter_count() {
    for k in 1..=4usize {
        let kf = k as f64;
        let count = kf.powi(4) + 2.0 * kf.powi(3) + 5.5 * kf * kf + 2.5 * kf;
        assert_eq!(Layout::new(k).dim() as f64, count);
    }
    assert_eq!(Layout::new(2).dim(), 59);
}

#[test]
fn identity_smoothing_leaves_inputs_raw() {
    let m = ModelSpec::reference();
    let inp = precompute(&m, &SmoothingKernel::identity()).unwrap();
    let x = hetpca::model::signal_for(&m).unwrap().x;
    let delta = build_gaussian_delta(200, 10.0, true).unwrap().delta;
    assert_eq!(inp.z, Matrix::identity(200, 200));
    assert!((&inp.x_bar - x).amax() < 1e-15);
    assert!((&inp.delta_bar - delta).amax() < 1e-15);
    assert!(!inp.has_kernel_fluctuations());
    assert!((inp.alpha - 1.0).abs() < 1e-15);
    assert!(inp.sigma_bar2.iter().all(|s| (s - 1.0 / 200.0).abs() < 1e-15));
}

#[test]
fn smoothed_inputs_are_symmetric() {
    let m = ModelSpec::reference();
    let inp = precompute(&m, &SmoothingKernel::gaussian(3.0).unwrap()).unwrap();
    assert!((&inp.z - inp.z.transpose()).amax() < 1e-15);
    assert!((0..200).all(|t| (inp.z[(t, t)] - 1.0).abs() < 1e-12));
    assert!((&inp.delta_bar - inp.delta_bar.transpose()).amax() < 1e-14);
    assert!((&inp.y_tilde - inp.y_tilde.transpose()).amax() < 1e-14);
}

#[test]
fn kernel_tensor_matches_double_sum() {
    let (t, n) = (4, 3);
    let x = Matrix::from_row_slice(1, t, &[1.0, 0.0, -1.0, 0.0]);
    let e = Matrix::from_row_slice(1, n, &[1.0, 1.0, 1.0]);
    let cov = Matrix::identity(2, 2);
    let mean = [0.6, 0.4];
    let inp = TheoryInputs::from_parts(TheoryParts {
        x: &x,
        e: &e,
        sigma: &[0.5; 3],
        xi: &[0.0],
        delta: &Matrix::identity(t, t),
        smoothing: &SmoothingKernel::identity(),
        kernel: Some((&mean, &cov)),
        samples: 1,
        kernels_redrawn: false,
    })
    .unwrap();
    for a in 0..t {
        for b in 0..t {
            let mut want = 0.0;
            for tau in 0..2 {
                for tau2 in 0..2 {
                    want += cov[(tau, tau2)] * x[(0, (a + t - tau) % t)] * x[(0, (b + t - tau2) % t)];
                }
            }
            assert!((inp.xcal[0][(a, b)] - want / n as f64).abs() < 1e-15);
        }
    }
    // mean kernel acts on the signal by circular convolution
    let want_xbar = [0.6, 0.4, -0.6, -0.4];
    assert!((0..t).all(|j| (inp.x_bar[(0, j)] - want_xbar[j]).abs() < 1e-15));
}

#[test]
fn energy_reference_values() {
    let mut m = ModelSpec::reference();
    m.noise = NoiseSpec::uniform(0.0);
    m.fluctuations.xi = vec![0.0, 0.0];
    let z = precompute(&m, &SmoothingKernel::identity()).unwrap();
    let init = init_zero_noise(&z).unwrap();
    let e = energy_value(&init.omega, &z).unwrap();
    let sum: f64 = init.d.iter().sum();
    assert!((e - z.alpha * sum).abs() < 1e-12 * sum.max(1.0), "{e} vs α·ΣD = {}", z.alpha * sum);

    let layout = Layout::new(2);
    let mut w = vec![0.0; layout.dim()];
    for (i, c) in layout.linear_terms() {
        w[i] = 2.0 * c; // diagonal of Û
    }
    let inp = precompute(&ModelSpec::reference(), &SmoothingKernel::identity()).unwrap();
    let e = energy_value(&w, &inp).unwrap();
    assert!((e - 1.0).abs() < 1e-15);
    let generic: f64 = energy(&w, &inp).unwrap();
    assert!((generic - e).abs() < 1e-15);
}

#[test]
fn energy_k1_t2_hand_expansion() {
    let x = Matrix::from_row_slice(1, 2, &[0.3, -0.3]);
    let e = Matrix::from_row_slice(1, 2, &[1.2, 0.6]);
    let sigma = [0.7, 0.4];
    let delta = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let inp = parts_k1(&x, &e, &sigma, 0.2, &delta, &SmoothingKernel::identity());
    // ω = (R, W, M, v, q, R̂, Ŵ, M̂, v̂, q̂, Û)
    let w = [0.8, 0.1, 0.05, 0.02, 0.03, -0.4, -1.1, -0.2, 0.3, 0.1, 0.9];
    let [r, ww, mm, v, q, rh, wh, mh, vh, qh, uh] = w;
    let (n, t) = (2.0, 2.0);
    let alpha = t / n;
    // Z = I, 𝓧 = 0, Ỹ = ξ² Δ(I−J) symmetrised + x xᵀ
    let dc = [[0.25, -0.25], [-0.25, 0.25]];
    let yt = |i: usize, j: usize| 0.04 * dc[i][j] + x[(0, i)] * x[(0, j)];
    let h = 1.0 / (1.0 - 2.0 * ww);
    let tr_hy = h * (mm * 2.0 + r * r * (yt(0, 0) + yt(1, 1)));
    let mut local = 0.0;
    for i in 0..2 {
        let s2 = sigma[i] * sigma[i] / n;
        let y = e[(0, i)] * e[(0, i)];
        let d = s2 * wh + uh + vh * y;
        let s = s2 * mh + qh * y - rh * rh * y;
        local += s / d;
    }
    let want = -local / (2.0 * n) + alpha / t * tr_hy + 0.5 * uh + 0.5 * vh * q + 0.5 * qh * v + rh * r + 0.5 * wh * mm + 0.5 * mh * ww;
    let got = energy_value(&w, &inp).unwrap();
    assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    let jets: Vec<Jet> = w.iter().map(|v| Jet::constant(*v)).collect();
    assert!((energy(&jets, &inp).unwrap().v - want).abs() < 1e-14);
}

fn k1_reference(sigma: f64, xi: f64) -> TheoryInputs {
    let mut m = ModelSpec::reference();
    m.dims.k = 1;
    m.signal = SignalSpec::Sine { amplitude: 0.02f64.sqrt() };
    m.fluctuations.xi = vec![xi];
    m.noise = NoiseSpec::uniform(sigma);
    let modes = hetpca::model::sample_modes(m.dims, 3).unwrap();
    let e = &modes.e;
    let x = hetpca::model::signal_for(&m).unwrap().x;
    parts_k1(&x, e, &vec![sigma; 200], xi, &Matrix::identity(200, 200), &SmoothingKernel::identity())
}

#[test]
fn zero_noise_initialisation() {
    let inp = k1_reference(0.0, 0.0);
    let init = init_zero_noise(&inp).unwrap();
    assert!((init.d[0] - 0.01).abs() < 1e-15);
    let o = Layout::new(1).unpack(&init.omega);
    assert!((o.u_hat[(0, 0)] - 2.0 * inp.alpha * 0.01).abs() < 1e-15);
    let g = gradient(&init.omega, &inp).unwrap();
    assert!(g.iter().all(|v| v.abs() < 1e-9));

    let m = ModelSpec::reference();
    let mut inp = precompute(&m, &SmoothingKernel::identity()).unwrap();
    inp.xi2 = vec![0.0; 2];
    let init = init_zero_noise(&inp).unwrap();
    assert_eq!(init.p, Matrix::identity(2, 2));
}

#[test]
fn hessian_is_symmetric() {
    let inp = precompute(&ModelSpec::reference(), &SmoothingKernel::gaussian(3.0).unwrap()).unwrap();
    let w = init_zero_noise(&inp).unwrap().omega;
    let h = hessian(&w, &inp).unwrap();
    assert!((&h - h.transpose()).amax() < 1e-10 * h.amax());
}

#[test]
fn newton_and_continuation_limits() {
    let inp = k1_reference(0.0, 0.1);
    let init = init_zero_noise(&inp).unwrap();
    let (w, rep) = newton_solve(&init.omega, &inp, NewtonOptions::default()).unwrap();
    assert!(rep.iterations <= 1);
    assert!(w.iter().zip(&init.omega).all(|(a, b)| (a - b).abs() < 1e-12));
    let s = continuation_solve(&inp, ContinuationOptions::default()).unwrap();
    assert!(s.omega.iter().zip(&init.omega).all(|(a, b)| (a - b).abs() < 1e-12));
    assert!(epsilon_theory(&s.omega, &inp).unwrap()[(0, 0)] > 0.0);
}

#[test]
fn first_continuation_step_at_reference_point() {
    let mut m = ModelSpec::reference();
    m.noise = NoiseSpec::uniform(0.1);
    let inp = precompute(&m, &SmoothingKernel::gaussian(3.0).unwrap()).unwrap();
    let init = init_zero_noise(&inp.ramped(0.0, 0.0)).unwrap();
    let (_, rep) = newton_solve(&init.omega, &inp, NewtonOptions::default()).unwrap();
    assert!(rep.iterations < 50);
    assert!(rep.grad_norm < 1e-9);
}

#[test]
fn zero_noise_epsilon_vanishes() {
    let mut m = ModelSpec::reference();
    m.noise = NoiseSpec::uniform(0.0);
    m.fluctuations.xi = vec![0.0, 0.0];
    let inp = precompute(&m, &SmoothingKernel::identity()).unwrap();
    let s = solve_theory(&inp, ContinuationOptions::default()).unwrap();
    assert!(epsilon_theory(&s.omega, &inp).unwrap().amax() < 1e-12);
    assert_eq!(rho_theory(&s.omega, 2), Matrix::zeros(2, 2));
}

#[test]
fn rho_theory_limits() {
    let layout = Layout::new(2);
    let mut w = vec![0.0; layout.dim()];
    assert_eq!(rho_theory(&w, 2), Matrix::identity(2, 2));
    let r = layout.range(Block::R).start;
    w[r] = 1.0;
    w[r + 3] = 1.0;
    assert_eq!(rho_theory(&w, 2), Matrix::zeros(2, 2));
}

#[test]
fn closed_form_limits() {
    assert_eq!(closed_form_overlap(0.01, 0.0, 0.0, 200, 200).unwrap(), 1.0);
    // (v + ξ²)² T = σ⁴ / N
    let (v, t, n) = (0.01f64, 100usize, 100usize);
    let sigma = (v * v * t as f64 * n as f64).powf(0.25);
    assert!(closed_form_overlap(v, 0.0, sigma, n, t).unwrap() < 1e-6);
    assert_eq!(rho_finite_size(0.01, 0.05, 0.0, 200).unwrap(), (0.0, 0.0));
    let rho1 = |xi: f64| rho_finite_size(0.01, xi, 1.0, 200).unwrap().1;
    assert!(rho1(0.0) > rho1(0.05) && rho1(0.05) > rho1(0.1));
    assert!(closed_form_overlap(-1.0, 0.0, 1.0, 10, 10).unwrap_err().is_validation());
}

#[test]
fn closed_form_expansion_converges() {
    let (v, xi, sigma, t) = (0.01, 0.01, 1.0, 200);
    let (r0, r1) = rho_finite_size(v, xi, sigma, t).unwrap();
    let gap = |n: usize| (1.0 - closed_form_overlap(v, xi, sigma, n, t).unwrap() - (r0 + r1 / n as f64)).abs();
    assert!(gap(10_000) < gap(1000) && gap(1000) < gap(300));
}

#[test]
fn solver_matches_closed_form_off_grid() {
    let inp = k1_reference(1.0, 0.01);
    let s = solve_theory(&inp, ContinuationOptions::default()).unwrap();
    let r = s.omega[Layout::new(1).range(Block::R).start].abs();
    let want = closed_form_overlap(0.01, 0.01 * (1.0 - 1.0 / 200.0f64).sqrt(), 1.0, 200, 200).unwrap();
    assert!((r - want).abs() < 1e-6);
    assert!(s.report.grad_norm < 1e-9);
    let rho = rho_theory(&s.omega, 1);
    assert!((rho[(0, 0)] - (1.0 - want)).abs() < 1e-6);
}

#[test]
fn past_the_transition_rho_is_one() {
    let inp = k1_reference(2.0, 0.0);
    let s = solve_theory(&inp, ContinuationOptions::default()).unwrap();
    assert!((rho_theory(&s.omega, 1)[(0, 0)] - 1.0).abs() < 1e-6);
    // ε equals its value with R and R̂ zeroed
    let mut w0 = s.omega.clone();
    let l = Layout::new(1);
    w0[l.range(Block::R).start] = 0.0;
    w0[l.range(Block::RHat).start] = 0.0;
    let a = epsilon_theory(&s.omega, &inp).unwrap();
    let b = epsilon_theory(&w0, &inp).unwrap();
    assert!((a - b).amax() < 1e-9);
}

#[test]
fn rho_local_null_component_is_finite() {
    let mut m = ModelSpec::reference();
    m.modes = hetpca::model::ModeLayout::Abcd;
    m.noise = NoiseSpec { sigma: hetpca::model::Sigma::PerComponent((0..200).map(|i| if i == 3 { 0.0 } else { 0.5 }).collect()) };
    let modes = hetpca::model::modes_for(&m, 1).unwrap();
    let inp = precompute_with_modes(&m, &SmoothingKernel::gaussian(3.0).unwrap(), &modes).unwrap();
    let s = solve_theory(&inp, ContinuationOptions::default()).unwrap();
    let r = rho_local(&s.omega, &inp, 3).unwrap();
    assert!(r.iter().all(|v| v.is_finite()));
    assert!(r[(0, 0)] >= 0.0 && r[(1, 1)] >= 0.0);
    let all = rho_local_all(&s.omega, &inp).unwrap();
    let mean = all.iter().fold(Matrix::zeros(2, 2), |a, m| a + m) / 200.0;
    assert!((mean - rho_theory(&s.omega, 2)).amax() < 1e-8);
}
