use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Rows of an accumulated transform, updated by the column rotations of QL.
///
/// With `rows` = identity this yields full eigenvectors; with a few projected
/// rows it yields only the components needed for a spectral measure.
#[derive(Debug, Clone)]
pub struct TrackedRows {
    pub rows: usize,
    pub n: usize,
    pub data: Vec<C64>,
}

impl TrackedRows {
    pub fn new(rows: usize, n: usize) -> Self {
        TrackedRows { rows, n, data: vec![C64::new(0.0, 0.0); rows * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::new(n, n);
        for i in 0..n {
            t.data[i * n + i] = C64::new(1.0, 0.0);
        }
        t
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.n + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        self.data[r * self.n + c] = v;
    }

    fn rotate_cols(&mut self, i: usize, c: f64, s: f64) {
        let n = self.n;
        for k in 0..self.rows {
            let row = &mut self.data[k * n..(k + 1) * n];
            let h = row[i + 1];
            let v = row[i];
            row[i + 1] = v * s + h * c;
            row[i] = v * c - h * s;
        }
    }

    fn permute_cols(&mut self, order: &[usize]) {
        let n = self.n;
        for k in 0..self.rows {
            let row: Vec<C64> = order.iter().map(|&j| self.data[k * n + j]).collect();
            self.data[k * n..(k + 1) * n].copy_from_slice(&row);
        }
    }
}

/// Implicit QL on a real symmetric tridiagonal matrix.
///
/// `d` holds the diagonal, `off` the n-1 off-diagonal entries. On return `d`
/// holds the eigenvalues in ascending order and the tracked rows hold their
/// transforms, column j belonging to eigenvalue j.
pub fn tql2(d: &mut [f64], off: &[f64], mut z: Option<&mut TrackedRows>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    assert_eq!(off.len() + 1, n);
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(off);
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::ConvergenceFailure("tridiagonal QL".into()));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(zz) = z.as_deref_mut() {
                        zz.rotate_cols(i, c, s);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    d.copy_from_slice(&sorted);
    if let Some(zz) = z {
        zz.permute_cols(&order);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_eigenvalues() {
        let n = 50;
        let mut d = vec![2.0; n];
        let off = vec![-1.0; n - 1];
        let mut z = TrackedRows::identity(n);
        tql2(&mut d, &off, Some(&mut z)).unwrap();
        for k in 0..n {
            let exact = 2.0 - 2.0 * (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos();
            assert!((d[k] - exact).abs() < 1e-12);
        }
        // columns orthonormal
        for a in 0..n {
            for b in 0..n {
                let s: C64 = (0..n).map(|r| z.get(r, a) * z.get(r, b).conj()).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((s.re - want).abs() < 1e-12 && s.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tracked_row_equals_full_row() {
        let n = 30;
        let d0: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let off: Vec<f64> = (0..n - 1).map(|i| 0.3 + (i as f64).cos() * 0.1).collect();
        let mut d1 = d0.clone();
        let mut full = TrackedRows::identity(n);
        tql2(&mut d1, &off, Some(&mut full)).unwrap();
        let mut d2 = d0.clone();
        let mut one = TrackedRows::new(1, n);
        one.set(0, 3, C64::new(1.0, 0.0));
        tql2(&mut d2, &off, Some(&mut one)).unwrap();
        for j in 0..n {
            assert!((one.get(0, j) - full.get(3, j)).norm() < 1e-13);
        }
    }
}
