use num_complex::Complex64 as C64;

use super::dense::CMatrix;
use super::EigenDecomposition;
use crate::error::{Error, Result};

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Householder reduction to upper Hessenberg form, accumulating Q (A = Q H Q*).
pub fn hessenberg(h: &mut CMatrix, q: &mut CMatrix) {
    let n = h.rows();
    for k in 0..n.saturating_sub(2) {
        let x: Vec<C64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let sigma = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let tail = x[1..].iter().map(|z| z.norm_sqr()).sum::<f64>();
        if sigma == 0.0 || tail == 0.0 {
            continue;
        }
        let phase = if x[0].norm() > 0.0 { x[0] / x[0].norm() } else { C64::new(1.0, 0.0) };
        let mut v = x;
        v[0] += phase * sigma;
        let vn = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|z| *z /= vn);
        for j in 0..n {
            let mut s = zero();
            for (t, vi) in v.iter().enumerate() {
                s += vi.conj() * h[(k + 1 + t, j)];
            }
            s *= 2.0;
            for (t, vi) in v.iter().enumerate() {
                h[(k + 1 + t, j)] -= vi * s;
            }
        }
        for mat in [&mut *h, &mut *q] {
            for i in 0..n {
                let mut s = zero();
                for (t, vi) in v.iter().enumerate() {
                    s += mat[(i, k + 1 + t)] * vi;
                }
                s *= 2.0;
                for (t, vi) in v.iter().enumerate() {
                    mat[(i, k + 1 + t)] -= s * vi.conj();
                }
            }
        }
        for i in k + 2..n {
            h[(i, k)] = zero();
        }
    }
}

/// Rotation G = [[c, s], [-conj(s), c]] with G [x; y] = [r; 0].
fn givens(x: C64, y: C64) -> (f64, C64) {
    let ax = x.norm();
    let r = ax.hypot(y.norm());
    if r == 0.0 {
        return (1.0, zero());
    }
    if ax == 0.0 {
        return (0.0, C64::new(1.0, 0.0) * (y.conj() / y.norm()));
    }
    let c = ax / r;
    let s = (x / ax) * y.conj() / r;
    (c, s)
}

/// Single-shift QR on a Hessenberg matrix; leaves the Schur form T in `h`.
pub fn schur(h: &mut CMatrix, q: &mut CMatrix) -> Result<()> {
    let n = h.rows();
    if n < 2 {
        return Ok(());
    }
    let norm = h.norm_fro().max(f64::MIN_POSITIVE);
    let eps = f64::EPSILON;
    let mut hi = n - 1;
    let mut its = 0;
    while hi > 0 {
        let mut l = hi;
        while l > 0 {
            let mut s = h[(l - 1, l - 1)].norm() + h[(l, l)].norm();
            if s == 0.0 {
                s = norm;
            }
            if h[(l, l - 1)].norm() < eps * s {
                h[(l, l - 1)] = zero();
                break;
            }
            l -= 1;
        }
        if l == hi {
            hi -= 1;
            its = 0;
            continue;
        }
        its += 1;
        if its > 100 {
            return Err(Error::ConvergenceFailure("Hessenberg QR".into()));
        }
        let d = h[(hi, hi)];
        let mu = if its % 11 == 10 {
            d + C64::new(0.75 * h[(hi, hi - 1)].norm(), 0.0)
        } else {
            let a = h[(hi - 1, hi - 1)];
            let b = h[(hi - 1, hi)];
            let c = h[(hi, hi - 1)];
            let p = (a - d) * 0.5;
            let disc = (p * p + b * c).sqrt();
            let mid = (a + d) * 0.5;
            let (m1, m2) = (mid + disc, mid - disc);
            if (m1 - d).norm() <= (m2 - d).norm() {
                m1
            } else {
                m2
            }
        };
        for k in l..hi {
            let (x, y) = if k == l { (h[(l, l)] - mu, h[(l + 1, l)]) } else { (h[(k, k - 1)], h[(k + 1, k - 1)]) };
            let (c, s) = givens(x, y);
            let c0 = if k > l { k - 1 } else { l };
            for j in c0..n {
                let t1 = h[(k, j)];
                let t2 = h[(k + 1, j)];
                h[(k, j)] = t1 * c + s * t2;
                h[(k + 1, j)] = -s.conj() * t1 + t2 * c;
            }
            if k > l {
                h[(k + 1, k - 1)] = zero();
            }
            let rmax = (k + 2).min(hi);
            for i in 0..=rmax {
                let t1 = h[(i, k)];
                let t2 = h[(i, k + 1)];
                h[(i, k)] = t1 * c + t2 * s.conj();
                h[(i, k + 1)] = -t1 * s + t2 * c;
            }
            for i in 0..n {
                let t1 = q[(i, k)];
                let t2 = q[(i, k + 1)];
                q[(i, k)] = t1 * c + t2 * s.conj();
                q[(i, k + 1)] = -t1 * s + t2 * c;
            }
        }
    }
    Ok(())
}

/// Full eigendecomposition of a general complex matrix, sorted by real part.
pub fn eig_general(a: &CMatrix) -> Result<EigenDecomposition> {
    assert!(a.is_square());
    let n = a.rows();
    let mut t = a.clone();
    let mut q = CMatrix::identity(n);
    hessenberg(&mut t, &mut q);
    schur(&mut t, &mut q)?;
    let small = f64::EPSILON * t.norm_fro().max(f64::MIN_POSITIVE);
    let mut vecs = CMatrix::zeros(n, n);
    for k in 0..n {
        let lam = t[(k, k)];
        let mut y = vec![zero(); k + 1];
        y[k] = C64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut s = zero();
            for l in j + 1..=k {
                s += t[(j, l)] * y[l];
            }
            let mut den = t[(j, j)] - lam;
            if den.norm() < small {
                den = C64::new(small, 0.0);
            }
            y[j] = -s / den;
        }
        let mut v: Vec<C64> = (0..n).map(|i| (0..=k).map(|l| q[(i, l)] * y[l]).sum()).collect();
        let nv = super::dense::vec_norm(&v);
        v.iter_mut().for_each(|z| *z /= nv);
        vecs.set_column(k, &v);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let vals: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();
    order.sort_by(|&i, &j| vals[i].re.total_cmp(&vals[j].re).then(vals[i].im.total_cmp(&vals[j].im)));
    let values: Vec<C64> = order.iter().map(|&i| vals[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| vecs[(i, order[j])]);
    let residual = super::residual(a, &values, &vectors);
    Ok(EigenDecomposition { values, vectors, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn diagonal_exact() {
        let a = CMatrix::from_diag(&[c(1.0, 2.0), c(3.0, 0.0)]);
        let e = eig_general(&a).unwrap();
        assert_eq!(e.values, vec![c(1.0, 2.0), c(3.0, 0.0)]);
    }

    #[test]
    fn upper_triangular() {
        let a = CMatrix::from_real(2, 2, &[1.0, 5.0, 0.0, 2.0]);
        let e = eig_general(&a).unwrap();
        assert!((e.values[0] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((e.values[1] - c(2.0, 0.0)).norm() < 1e-14);
        assert!(e.residual < 1e-13);
    }

    #[test]
    fn conjugate_matrix_conjugate_spectrum() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let n = 40;
        let a = CMatrix::from_fn(n, n, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let e1 = eig_general(&a).unwrap();
        let e2 = eig_general(&a.conj()).unwrap();
        assert!(e1.residual < 1e-9 * a.norm_max());
        for v in &e1.values {
            let best = e2.values.iter().map(|w| (w - v.conj()).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-10);
        }
    }

    #[test]
    fn real_rotation_has_complex_pair() {
        let a = CMatrix::from_real(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let e = eig_general(&a).unwrap();
        let mut ims: Vec<f64> = e.values.iter().map(|z| z.im).collect();
        ims.sort_by(f64::total_cmp);
        assert!((ims[0] + 1.0).abs() < 1e-14 && (ims[1] - 1.0).abs() < 1e-14);
    }
}
