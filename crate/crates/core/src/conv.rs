//! Circular convolutions and their matrix forms.

use crate::Matrix;

/// Circulant matrix C with C[t, (t − τ) mod T] = Σ taps[j] over τ = j − offset,
/// so that (C u)_t = Σ_j taps[j] u_{t − (j − offset)}.
pub fn circulant(taps: &[f64], offset: usize, t: usize) -> Matrix {
    let mut c = Matrix::zeros(t, t);
    for (j, w) in taps.iter().enumerate() {
        let tau = j as i64 - offset as i64;
        for row in 0..t {
            let col = (row as i64 - tau).rem_euclid(t as i64) as usize;
            c[(row, col)] += w;
        }
    }
    c
}

/// Row-wise circular filter: out[i, t] = Σ_j taps[j] · m[i, (t − j + offset) mod T].
pub fn filter_rows(m: &Matrix, taps: &[f64], offset: usize) -> Matrix {
    let t = m.ncols() as i64;
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for (j, w) in taps.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let tau = j as i64 - offset as i64;
        for col in 0..m.ncols() {
            let src = (col as i64 - tau).rem_euclid(t) as usize;
            for row in 0..m.nrows() {
                out[(row, col)] += w * m[(row, src)];
            }
        }
    }
    out
}
