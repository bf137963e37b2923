use hetpca::estimator::SmoothingKernel;
use hetpca::model::{sample_modes, Dims};
use hetpca::theory::{
    closed_form_overlap, evaluate, free_coordinates, init_zero_noise, rho_local_all, rho_theory, solve_theory, Block,
    Branch, ContinuationOptions, Layout, TheoryInputs, TheoryParts,
};
use hetpca::Matrix;
use std::time::Instant;

fn k1_inputs(n: usize, t: usize, sigma: f64, xi: f64) -> TheoryInputs {
    let amp = 0.02f64.sqrt();
    let x = Matrix::from_fn(1, t, |_, j| amp * (2.0 * std::f64::consts::PI * (j + 1) as f64 / t as f64).sin());
    let e = sample_modes(Dims::new(n, t, 1, 1).unwrap(), 11).unwrap().e;
    TheoryInputs::from_parts(TheoryParts {
        x: &x,
        e: &e,
        sigma: &vec![sigma; n],
        xi: &[xi],
        delta: &Matrix::identity(t, t),
        smoothing: &SmoothingKernel::identity(),
        kernel: None,
        samples: 1,
        kernels_redrawn: false,
    })
    .unwrap()
}

#[test]
fn zero_noise_initialisation_is_stationary() {
    let inp = k1_inputs(50, 40, 0.0, 0.1);
    let w = init_zero_noise(&inp).unwrap().omega;
    let g = evaluate(&w, &inp, false).unwrap().gradient;
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(gmax < 1e-10, "gradient {gmax:e}");
    assert_eq!(rho_theory(&w, 1)[(0, 0)], 0.0);
}

#[test]
fn k1_saddle_matches_closed_form() {
    let (n, t) = (200, 200);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for sigma in [0.2, 0.5, 1.0, 2.0] {
        for xi in [0.0, 0.05, 0.1] {
            let inp = k1_inputs(n, t, sigma, xi);
            let saddle = solve_theory(&inp, ContinuationOptions::default()).unwrap();
            let r = saddle.omega[Layout::new(1).range(Block::R).start].abs();
            let xi_eff = xi * (1.0 - 1.0 / t as f64).sqrt();
            let want = closed_form_overlap(0.01, xi_eff, sigma, n, t).unwrap();
            println!("σ={sigma} ξ={xi}: R={r:.10} closed form {want:.10} branch {:?}", saddle.branch);
            worst = worst.max((r - want).abs());
        }
    }
    println!("worst {worst:e}, {:?}", start.elapsed());
    assert!(worst < 1e-6);
}

#[test]
fn local_uncertainties_average_to_rho() {
    let inp = k1_inputs(60, 30, 0.5, 0.05);
    let s = solve_theory(&inp, ContinuationOptions::default()).unwrap();
    let loc = rho_local_all(&s.omega, &inp).unwrap();
    let mean = loc.iter().fold(Matrix::zeros(1, 1), |a, m| a + m) / loc.len() as f64;
    assert!((mean - rho_theory(&s.omega, 1)).amax() < 1e-8);
    assert_eq!(s.branch, Branch::Continuation);
    let _ = free_coordinates(1);
}
