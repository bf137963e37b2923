//! Packing of the order parameters into a flat vector.
//!
//! Order: R (K²), W, M (p each), v, q (p² each), R̂ (K²), Ŵ, M̂ (p each),
//! v̂, q̂ (p² each), Û (p), with p = K(K+1)/2. Symmetric K×K blocks store the
//! upper triangle; 4-tensors are K²×K² matrices symmetric within the row pair
//! and within the column pair, stored as p×p.

use crate::scalar::{Mat, Scalar};
use std::ops::Range;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    R,
    W,
    M,
    V,
    Q,
    RHat,
    WHat,
    MHat,
    VHat,
    QHat,
    UHat,
}

const ORDER: [Block; 11] = [
    Block::R,
    Block::W,
    Block::M,
    Block::V,
    Block::Q,
    Block::RHat,
    Block::WHat,
    Block::MHat,
    Block::VHat,
    Block::QHat,
    Block::UHat,
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub k: usize,
    /// Unordered pairs (a ≤ b) in packing order.
    pub pairs: Vec<(usize, usize)>,
    offsets: [usize; 12],
}

impl Layout {
    pub fn new(k: usize) -> Self {
        let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a..k).map(move |b| (a, b))).collect();
        let p = pairs.len();
        let mut offsets = [0; 12];
        for (i, b) in ORDER.iter().enumerate() {
            let len = match b {
                Block::R | Block::RHat => k * k,
                Block::W | Block::M | Block::WHat | Block::MHat | Block::UHat => p,
                Block::V | Block::Q | Block::VHat | Block::QHat => p * p,
            };
            offsets[i + 1] = offsets[i] + len;
        }
        Layout { k, pairs, offsets }
    }

    pub fn dim(&self) -> usize {
        self.offsets[11]
    }

    pub fn p(&self) -> usize {
        self.pairs.len()
    }

    pub fn range(&self, b: Block) -> Range<usize> {
        let i = ORDER.iter().position(|x| *x == b).unwrap();
        self.offsets[i]..self.offsets[i + 1]
    }

    /// First index of the conjugate (hatted) coordinates; they run to the end.
    pub fn hat_start(&self) -> usize {
        self.range(Block::RHat).start
    }

    pub fn pair_index(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        // index of (a, b) in the upper-triangular enumeration
        a * self.k - a * (a + 1) / 2 + b
    }

    /// Number of full-matrix entries represented by one packed pair.
    pub fn multiplicity(&self, pair: usize) -> f64 {
        let (a, b) = self.pairs[pair];
        if a == b {
            1.0
        } else {
            2.0
        }
    }

    /// Ordered index pairs (a, b) and (b, a) belonging to packed pair `pair`.
    pub fn class(&self, pair: usize) -> Vec<(usize, usize)> {
        let (a, b) = self.pairs[pair];
        if a == b {
            vec![(a, a)]
        } else {
            vec![(a, b), (b, a)]
        }
    }

    /// Coordinates of the off-diagonal Û entries (the gauge directions).
    pub fn gauge_coordinates(&self) -> Vec<usize> {
        let r = self.range(Block::UHat);
        self.pairs.iter().enumerate().filter(|(_, (a, b))| a != b).map(|(i, _)| r.start + i).collect()
    }

    /// Bilinear couplings of the linear terms as (i, j, c): contribution c·ω_i·ω_j.
    pub fn bilinear_terms(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        let (r, rh) = (self.range(Block::R), self.range(Block::RHat));
        for j in 0..self.k * self.k {
            out.push((r.start + j, rh.start + j, 1.0));
        }
        let p = self.p();
        for (x, xh) in [(Block::W, Block::MHat), (Block::M, Block::WHat)] {
            let (a, b) = (self.range(x).start, self.range(xh).start);
            for i in 0..p {
                out.push((a + i, b + i, 0.5 * self.multiplicity(i)));
            }
        }
        for (x, xh) in [(Block::V, Block::QHat), (Block::Q, Block::VHat)] {
            let (a, b) = (self.range(x).start, self.range(xh).start);
            for i in 0..p {
                for j in 0..p {
                    out.push((a + i * p + j, b + i * p + j, 0.5 * self.multiplicity(i) * self.multiplicity(j)));
                }
            }
        }
        out
    }

    /// Linear-term coefficients c_i (contribution c_i·ω_i): ½ on diagonal Û entries.
    pub fn linear_terms(&self) -> Vec<(usize, f64)> {
        let r = self.range(Block::UHat);
        self.pairs.iter().enumerate().filter(|(_, (a, b))| a == b).map(|(i, _)| (r.start + i, 0.5)).collect()
    }

    pub fn unpack<S: Scalar>(&self, w: &[S]) -> OrderParams<S> {
        assert_eq!(w.len(), self.dim(), "packed vector has wrong length");
        let full = |b: Block| {
            let r = self.range(b);
            let mut m = Mat::zeros(self.k, self.k);
            for a in 0..self.k {
                for c in 0..self.k {
                    m[(a, c)] = w[r.start + a * self.k + c].clone();
                }
            }
            m
        };
        let sym = |b: Block| {
            let r = self.range(b);
            let mut m = Mat::zeros(self.k, self.k);
            for a in 0..self.k {
                for c in 0..self.k {
                    m[(a, c)] = w[r.start + self.pair_index(a, c)].clone();
                }
            }
            m
        };
        let four = |b: Block| {
            let r = self.range(b);
            let (k, p) = (self.k, self.p());
            let mut m = Mat::zeros(k * k, k * k);
            for i in 0..k * k {
                for j in 0..k * k {
                    let pi = self.pair_index(i / k, i % k);
                    let pj = self.pair_index(j / k, j % k);
                    m[(i, j)] = w[r.start + pi * p + pj].clone();
                }
            }
            m
        };
        OrderParams {
            r: full(Block::R),
            w: sym(Block::W),
            m: sym(Block::M),
            v: four(Block::V),
            q: four(Block::Q),
            r_hat: full(Block::RHat),
            w_hat: sym(Block::WHat),
            m_hat: sym(Block::MHat),
            v_hat: four(Block::VHat),
            q_hat: four(Block::QHat),
            u_hat: sym(Block::UHat),
        }
    }

    /// Packs by reading one representative entry per independent coordinate
    /// (the upper triangle for symmetric blocks).
    pub fn pack<S: Scalar>(&self, o: &OrderParams<S>) -> Vec<S> {
        let (k, p) = (self.k, self.p());
        let mut w = vec![S::zero(); self.dim()];
        let put_full = |w: &mut Vec<S>, b: Block, m: &Mat<S>| {
            let r = self.range(b);
            for a in 0..k {
                for c in 0..k {
                    w[r.start + a * k + c] = m[(a, c)].clone();
                }
            }
        };
        put_full(&mut w, Block::R, &o.r);
        put_full(&mut w, Block::RHat, &o.r_hat);
        for (b, m) in [(Block::W, &o.w), (Block::M, &o.m), (Block::WHat, &o.w_hat), (Block::MHat, &o.m_hat), (Block::UHat, &o.u_hat)] {
            let r = self.range(b);
            for (i, (a, c)) in self.pairs.iter().enumerate() {
                w[r.start + i] = m[(*a, *c)].clone();
            }
        }
        for (b, m) in [(Block::V, &o.v), (Block::Q, &o.q), (Block::VHat, &o.v_hat), (Block::QHat, &o.q_hat)] {
            let r = self.range(b);
            for (i, (a, c)) in self.pairs.iter().enumerate() {
                for (j, (d, e)) in self.pairs.iter().enumerate() {
                    w[r.start + i * p + j] = m[(a * k + c, d * k + e)].clone();
                }
            }
        }
        w
    }
}

/// Order parameters and their conjugates as full matrices.
#[derive(Clone, Debug)]
pub struct OrderParams<S> {
    pub r: Mat<S>,
    pub w: Mat<S>,
    pub m: Mat<S>,
    pub v: Mat<S>,
    pub q: Mat<S>,
    pub r_hat: Mat<S>,
    pub w_hat: Mat<S>,
    pub m_hat: Mat<S>,
    pub v_hat: Mat<S>,
    pub q_hat: Mat<S>,
    pub u_hat: Mat<S>,
}

impl<S: Scalar> OrderParams<S> {
    pub fn zeros(k: usize) -> Self {
        let kk = Mat::zeros(k, k);
        let ff = Mat::zeros(k * k, k * k);
        OrderParams {
            r: kk.clone(),
            w: kk.clone(),
            m: kk.clone(),
            v: ff.clone(),
            q: ff.clone(),
            r_hat: kk.clone(),
            w_hat: kk.clone(),
            m_hat: kk.clone(),
            v_hat: ff.clone(),
            q_hat: ff,
            u_hat: kk,
        }
    }
}
