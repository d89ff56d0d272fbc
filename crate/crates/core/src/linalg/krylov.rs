use num_complex::Complex64 as C64;

use super::dense::{dot, vec_norm, CMatrix};
use super::schur::eig_general;
use crate::error::Result;

/// Ritz pairs of an operator from `k` Arnoldi steps.
pub struct Arnoldi {
    pub ritz_values: Vec<C64>,
    pub ritz_vectors: Vec<Vec<C64>>,
    /// |h_{k+1,k} y_k|, the Arnoldi residual estimate of each pair.
    pub estimates: Vec<f64>,
}

/// Arnoldi with two-pass Gram-Schmidt; `apply` is typically a shift-invert solve.
pub fn arnoldi(n: usize, k: usize, start: &[C64], mut apply: impl FnMut(&[C64]) -> Vec<C64>) -> Result<Arnoldi> {
    let k = k.min(n);
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(k + 1);
    let nv = vec_norm(start);
    basis.push(start.iter().map(|z| z / nv).collect());
    let mut h = CMatrix::zeros(k + 1, k);
    let mut steps = k;
    for j in 0..k {
        let mut w = apply(&basis[j]);
        for _pass in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let c = dot(&w, v);
                h[(i, j)] += c;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
        }
        let nw = vec_norm(&w);
        h[(j + 1, j)] = C64::new(nw, 0.0);
        if nw < 1e-13 {
            steps = j + 1;
            break;
        }
        basis.push(w.iter().map(|z| z / nw).collect());
    }
    let hk = CMatrix::from_fn(steps, steps, |i, j| h[(i, j)]);
    let beta = h[(steps, steps - 1)].norm();
    let eig = eig_general(&hk)?;
    let mut ritz_vectors = Vec::with_capacity(steps);
    let mut estimates = Vec::with_capacity(steps);
    for c in 0..steps {
        let y = eig.vectors.column(c);
        let mut v = vec![C64::new(0.0, 0.0); n];
        for (i, yi) in y.iter().enumerate() {
            for (vv, bi) in v.iter_mut().zip(&basis[i]) {
                *vv += yi * bi;
            }
        }
        estimates.push(beta * y[steps - 1].norm());
        ritz_vectors.push(v);
    }
    Ok(Arnoldi { ritz_values: eig.values, ritz_vectors, estimates })
}
