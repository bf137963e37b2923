use hetpca::estimator::SmoothingKernel;
use hetpca::model::build_gaussian_delta;
use hetpca::theory::{energy, energy_value, evaluate, init_zero_noise, Layout, TheoryInputs, TheoryParts};
use hetpca::{Jet, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_inputs(k: usize, t: usize, with_kernel: bool, seed: u64) -> TheoryInputs {
    let n = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Matrix::from_fn(k, t, |_, _| rng.random_range(-2.0..2.0));
    let e = Matrix::from_fn(k, n, |_, _| rng.random_range(-1.5..1.5));
    let sigma: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..0.8)).collect();
    let xi: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..0.2)).collect();
    let delta = build_gaussian_delta(t, 1.5, true).unwrap().delta;
    let g = SmoothingKernel::from_weights(vec![0.25, 0.5, 0.25]).unwrap();
    let mean = [0.7, 0.3];
    let a = Matrix::from_fn(2, 2, |_, _| rng.random_range(-0.2..0.2));
    let cov = &a * a.transpose();
    TheoryInputs::from_parts(TheoryParts {
        x: &x,
        e: &e,
        sigma: &sigma,
        xi: &xi,
        delta: &delta,
        smoothing: &g,
        kernel: with_kernel.then_some((&mean[..], &cov)),
        samples: 1,
        kernels_redrawn: false,
    })
    .unwrap()
}

fn test_point(inp: &TheoryInputs, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = init_zero_noise(inp).unwrap().omega;
    for v in w.iter_mut() {
        *v += rng.random_range(-0.02..0.02) * (v.abs() + 0.05);
    }
    w
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1e-6_f64).max(a.abs().max(b.abs()))
}

fn check(k: usize, t: usize, with_kernel: bool) {
    let inp = small_inputs(k, t, with_kernel, 7 + k as u64 * 10 + t as u64);
    let w = test_point(&inp, 3);
    let dim = Layout::new(k).dim();
    let ev = evaluate(&w, &inp, true).unwrap();
    let hs = ev.hessian.unwrap();

    let jets: Vec<Jet> = w.iter().enumerate().map(|(i, &v)| Jet::variable(v, i, dim)).collect();
    let full = energy(&jets, &inp).unwrap();
    assert!(rel_err(full.v, ev.energy) < 1e-12, "energy {} vs {}", full.v, ev.energy);
    assert!((energy_value(&w, &inp).unwrap() - ev.energy).abs() < 1e-12);
    let g = full.gradient(dim);
    let h = full.hessian(dim);
    let scale = hs.amax().max(1.0);
    for i in 0..dim {
        assert!(rel_err(g[i], ev.gradient[i]) < 1e-9, "grad[{i}]: jet {} analytic {}", g[i], ev.gradient[i]);
        for j in 0..dim {
            let d = (h[i * dim + j] - hs[(i, j)]).abs();
            assert!(d < 1e-9 * scale, "hess[{i},{j}]: jet {} analytic {}", h[i * dim + j], hs[(i, j)]);
        }
    }

    let step = 1e-5;
    for i in 0..dim {
        let (mut p, mut m) = (w.clone(), w.clone());
        p[i] += step;
        m[i] -= step;
        let fd = (energy_value(&p, &inp).unwrap() - energy_value(&m, &inp).unwrap()) / (2.0 * step);
        let err = (fd - ev.gradient[i]).abs() / ev.gradient[i].abs().max(1e-3);
        assert!(err < 1e-5, "fd grad[{i}]: {fd} vs {}", ev.gradient[i]);
    }
}

#[test]
fn analytic_derivatives_match_ad_and_finite_differences() {
    for k in [1, 2] {
        for t in [4, 8] {
            for kern in [false, true] {
                check(k, t, kern);
            }
        }
    }
}
