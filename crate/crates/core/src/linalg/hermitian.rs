use num_complex::Complex64 as C64;

use super::dense::CMatrix;
use super::tridiag::{tql2, TrackedRows};
use super::EigenDecomposition;
use crate::error::Result;

/// Householder reduction to real tridiagonal form, then implicit QL.
pub fn eig_hermitian(a: &CMatrix) -> Result<EigenDecomposition> {
    assert!(a.is_square());
    let n = a.rows();
    let mut m = a.clone();
    let mut q = CMatrix::identity(n);
    let zero = C64::new(0.0, 0.0);

    for k in 0..n.saturating_sub(2) {
        let x: Vec<C64> = (k + 1..n).map(|i| m[(i, k)]).collect();
        let sigma = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let tail = x[1..].iter().map(|z| z.norm_sqr()).sum::<f64>();
        if sigma == 0.0 || tail == 0.0 {
            continue;
        }
        let phase = if x[0].norm() > 0.0 { x[0] / x[0].norm() } else { C64::new(1.0, 0.0) };
        let alpha = -phase * sigma;
        let mut v = x.clone();
        v[0] -= alpha;
        let vn = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in v.iter_mut() {
            *z /= vn;
        }
        // rows: M <- (I - 2vv*) M
        for j in 0..n {
            let mut s = zero;
            for (t, vi) in v.iter().enumerate() {
                s += vi.conj() * m[(k + 1 + t, j)];
            }
            s *= 2.0;
            for (t, vi) in v.iter().enumerate() {
                m[(k + 1 + t, j)] -= vi * s;
            }
        }
        // cols: M <- M (I - 2vv*), same for Q
        for mat in [&mut m, &mut q] {
            for i in 0..n {
                let mut s = zero;
                for (t, vi) in v.iter().enumerate() {
                    s += mat[(i, k + 1 + t)] * vi;
                }
                s *= 2.0;
                for (t, vi) in v.iter().enumerate() {
                    mat[(i, k + 1 + t)] -= s * vi.conj();
                }
            }
        }
    }

    let mut d: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    let mut off = Vec::with_capacity(n.saturating_sub(1));
    let mut ph = vec![C64::new(1.0, 0.0); n];
    for k in 0..n.saturating_sub(1) {
        let e = m[(k + 1, k)];
        let r = e.norm();
        off.push(r);
        ph[k + 1] = if r > 0.0 { ph[k] * e / r } else { ph[k] };
    }
    let mut z = TrackedRows::new(n, n);
    for i in 0..n {
        for j in 0..n {
            z.set(i, j, q[(i, j)] * ph[j]);
        }
    }
    tql2(&mut d, &off, Some(&mut z))?;
    let vectors = CMatrix::from_fn(n, n, |i, j| z.get(i, j));
    let values: Vec<C64> = d.iter().map(|&x| C64::new(x, 0.0)).collect();
    let residual = super::residual(a, &values, &vectors);
    Ok(EigenDecomposition { values, vectors, residual })
}
