//! Second-order forward-mode dual numbers.
//!
//! A [`Jet`] carries a value, its gradient and its (dense, symmetric) Hessian
//! with respect to `n` seeded variables. Constants carry empty derivative
//! storage and are promoted on contact with a variable.

use crate::scalar::Scalar;
use num_traits::{One, Zero};
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: Vec<f64>,
    /// Row-major n×n.
    pub h: Vec<f64>,
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Jet { v, g: Vec::new(), h: Vec::new() }
    }

    pub fn variable(v: f64, index: usize, n: usize) -> Self {
        let mut g = vec![0.0; n];
        g[index] = 1.0;
        Jet { v, g, h: vec![0.0; n * n] }
    }

    /// Seeds every entry of `x` as an independent variable.
    pub fn seed(x: &[f64]) -> Vec<Jet> {
        let n = x.len();
        x.iter().enumerate().map(|(i, &v)| Jet::variable(v, i, n)).collect()
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn gradient(&self, n: usize) -> Vec<f64> {
        if self.g.is_empty() {
            vec![0.0; n]
        } else {
            self.g.clone()
        }
    }

    pub fn hessian(&self, n: usize) -> Vec<f64> {
        if self.h.is_empty() {
            vec![0.0; n * n]
        } else {
            self.h.clone()
        }
    }

    /// Applies f with f(v), f'(v), f''(v) given.
    pub fn chain(&self, f0: f64, f1: f64, f2: f64) -> Jet {
        let n = self.dim();
        let mut h = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                h.push(f1 * self.h[i * n + j] + f2 * self.g[i] * self.g[j]);
            }
        }
        Jet { v: f0, g: self.g.iter().map(|x| f1 * x).collect(), h }
    }

    pub fn recip(&self) -> Jet {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    fn promoted(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        if self.g.is_empty() {
            (vec![0.0; n], vec![0.0; n * n])
        } else {
            (self.g.clone(), self.h.clone())
        }
    }

    fn linear(a: Jet, ca: f64, b: Jet, cb: f64) -> Jet {
        let v = ca * a.v + cb * b.v;
        match (a.g.is_empty(), b.g.is_empty()) {
            (true, true) => Jet::constant(v),
            (false, true) => Jet {
                v,
                g: a.g.iter().map(|x| ca * x).collect(),
                h: a.h.iter().map(|x| ca * x).collect(),
            },
            (true, false) => Jet {
                v,
                g: b.g.iter().map(|x| cb * x).collect(),
                h: b.h.iter().map(|x| cb * x).collect(),
            },
            (false, false) => {
                assert_eq!(a.g.len(), b.g.len(), "jet dimension mismatch");
                Jet {
                    v,
                    g: a.g.iter().zip(&b.g).map(|(x, y)| ca * x + cb * y).collect(),
                    h: a.h.iter().zip(&b.h).map(|(x, y)| ca * x + cb * y).collect(),
                }
            }
        }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        Jet::linear(self, 1.0, rhs, 1.0)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        Jet::linear(self, 1.0, rhs, -1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { v: -self.v, g: self.g.iter().map(|x| -x).collect(), h: self.h.iter().map(|x| -x).collect() }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        if self.g.is_empty() {
            return Jet::linear(rhs, self.v, Jet::constant(0.0), 0.0);
        }
        if rhs.g.is_empty() {
            return Jet::linear(self, rhs.v, Jet::constant(0.0), 0.0);
        }
        let n = self.dim().max(rhs.dim());
        let (ag, ah) = self.promoted(n);
        let (bg, bh) = rhs.promoted(n);
        let (a, b) = (self.v, rhs.v);
        let mut h = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                h.push(a * bh[k] + b * ah[k] + ag[i] * bg[j] + bg[i] * ag[j]);
            }
        }
        Jet { v: a * b, g: ag.iter().zip(&bg).map(|(x, y)| b * x + a * y).collect(), h }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Jet) -> Jet {
        if rhs.g.is_empty() {
            return Jet::linear(self, 1.0 / rhs.v, Jet::constant(0.0), 0.0);
        }
        self * rhs.recip()
    }
}

impl Zero for Jet {
    fn zero() -> Self {
        Jet::constant(0.0)
    }
    fn is_zero(&self) -> bool {
        self.v == 0.0 && self.g.iter().all(|x| *x == 0.0) && self.h.iter().all(|x| *x == 0.0)
    }
}

impl One for Jet {
    fn one() -> Self {
        Jet::constant(1.0)
    }
}

impl Scalar for Jet {
    fn from_f64(x: f64) -> Self {
        Jet::constant(x)
    }
    fn re(&self) -> f64 {
        self.v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_second_order() {
        // f(x, y) = x² y / (1 + y) at (1.5, 0.5)
        let v = Jet::seed(&[1.5, 0.5]);
        let (x, y) = (v[0].clone(), v[1].clone());
        let f = x.clone() * x.clone() * y.clone() / (Jet::one() + y.clone());
        let (xv, yv) = (1.5f64, 0.5f64);
        let val = xv * xv * yv / (1.0 + yv);
        let dfdx = 2.0 * xv * yv / (1.0 + yv);
        let dfdy = xv * xv / (1.0 + yv).powi(2);
        let dxx = 2.0 * yv / (1.0 + yv);
        let dxy = 2.0 * xv / (1.0 + yv).powi(2);
        let dyy = -2.0 * xv * xv / (1.0 + yv).powi(3);
        assert!((f.v - val).abs() < 1e-14);
        assert!((f.g[0] - dfdx).abs() < 1e-14 && (f.g[1] - dfdy).abs() < 1e-14);
        assert!((f.h[0] - dxx).abs() < 1e-13);
        assert!((f.h[1] - dxy).abs() < 1e-13 && (f.h[2] - dxy).abs() < 1e-13);
        assert!((f.h[3] - dyy).abs() < 1e-13);
    }

    #[test]
    fn constants_promote() {
        let x = Jet::variable(2.0, 0, 1);
        let c = Jet::constant(3.0);
        let f = c.clone() - x.clone() * c;
        assert_eq!(f.v, -3.0);
        assert_eq!(f.g, vec![-3.0]);
        assert_eq!(f.h, vec![0.0]);
    }
}
