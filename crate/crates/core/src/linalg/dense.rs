use std::ops::{Index, IndexMut};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMatrix { rows, cols, data }
    }

    pub fn from_diag(d: &[C64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_real(rows: usize, cols: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), rows * cols);
        CMatrix { rows, cols, data: v.iter().map(|&x| C64::new(x, 0.0)).collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[C64]) {
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        CMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn norm_max(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Spectral norm via power iteration on A*A (small matrices only).
    pub fn norm_2(&self) -> f64 {
        let ata = self.adjoint().matmul(self);
        let n = ata.cols;
        if n == 0 {
            return 0.0;
        }
        let mut v: Vec<C64> = (0..n).map(|i| C64::new(1.0 + 0.1 * i as f64, 0.3)).collect();
        let mut lam = 0.0;
        for _ in 0..200 {
            let w = ata.matvec(&v);
            let nw = vec_norm(&w);
            if nw == 0.0 {
                return 0.0;
            }
            let prev = lam;
            lam = nw / vec_norm(&v);
            v = w.iter().map(|z| z / nw).collect();
            if (lam - prev).abs() <= 1e-14 * lam {
                break;
            }
        }
        lam.sqrt()
    }

    pub fn hermitian_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                d = d.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        d
    }

    pub fn lu(&self) -> DenseLu {
        DenseLu::factor(self)
    }

    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        let lu = self.lu();
        let x = lu.solve(b)?;
        let r = self.matvec(&x);
        let res: f64 = r.iter().zip(b).map(|(a, c)| (a - c).norm_sqr()).sum::<f64>().sqrt();
        let bn = vec_norm(b).max(f64::MIN_POSITIVE);
        if res / bn > 1e-10 {
            // one step of refinement before giving up on the bound
            let rr: Vec<C64> = b.iter().zip(&r).map(|(c, a)| c - a).collect();
            let dx = lu.solve(&rr)?;
            return Ok(x.iter().zip(&dx).map(|(a, d)| a + d).collect());
        }
        Ok(x)
    }

    pub fn log_det(&self) -> C64 {
        self.lu().log_det()
    }

    pub fn det(&self) -> C64 {
        self.log_det().exp()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian inner product, linear in the first slot.
pub fn dot(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a * b.conj()).sum()
}

/// Bilinear pairing (no conjugation).
pub fn dotu(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Dense LU with partial pivoting, PA = LU.
#[derive(Debug, Clone)]
pub struct DenseLu {
    lu: CMatrix,
    perm: Vec<usize>,
    swaps: usize,
    scale: f64,
}

impl DenseLu {
    pub fn factor(a: &CMatrix) -> Self {
        assert!(a.is_square());
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].norm();
            for i in k + 1..n {
                let v = lu[(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                swaps += 1;
            }
            let piv = lu[(k, k)];
            if piv == C64::new(0.0, 0.0) {
                continue;
            }
            for i in k + 1..n {
                let l = lu[(i, k)] / piv;
                lu[(i, k)] = l;
                if l == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= l * u;
                }
            }
        }
        DenseLu { lu, perm, swaps, scale: a.norm_max() }
    }

    pub fn check_pivots(&self) -> Result<()> {
        let n = self.lu.rows;
        for k in 0..n {
            let p = self.lu[(k, k)].norm();
            if p < 1e-14 * self.scale || p == 0.0 {
                return Err(Error::SingularMatrix { row: k, pivot: p });
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        self.check_pivots()?;
        let n = self.lu.rows;
        assert_eq!(b.len(), n);
        let mut x: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        Ok(x)
    }

    /// Principal log of det, accumulated from pivots; real part is -inf for an exact zero pivot.
    pub fn log_det(&self) -> C64 {
        let n = self.lu.rows;
        let mut acc = C64::new(0.0, std::f64::consts::PI * (self.swaps % 2) as f64);
        for k in 0..n {
            let p = self.lu[(k, k)];
            if p == C64::new(0.0, 0.0) {
                return C64::new(f64::NEG_INFINITY, 0.0);
            }
            acc += p.ln();
        }
        C64::new(acc.re, wrap_angle(acc.im))
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let mut r = a.rem_euclid(tau);
    if r > std::f64::consts::PI {
        r -= tau;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn solve_identity_and_diag() {
        let i3 = CMatrix::identity(3);
        let b = vec![c(1.0), C64::new(0.0, 2.0), c(-3.0)];
        assert_eq!(i3.solve(&b).unwrap(), b);
        let d = CMatrix::from_diag(&[c(2.0)]);
        assert!((d.solve(&[c(4.0)]).unwrap()[0] - c(2.0)).norm() < 1e-15);
    }

    #[test]
    fn singular_is_reported() {
        let a = CMatrix::from_real(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(a.solve(&[c(1.0), c(1.0)]), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn log_det_examples() {
        assert!(CMatrix::identity(5).log_det().norm() < 1e-15);
        let d = CMatrix::from_diag(&[c(2.0), c(3.0)]);
        assert!((d.log_det() - c(6f64.ln())).norm() < 1e-14);
        let big = CMatrix::from_diag(&vec![c(1e10); 30]);
        let ld = big.log_det();
        assert!((ld.re - 300.0 * 10f64.ln()).abs() < 1e-10);
        assert!(ld.im.abs() < 1e-12);
    }

    #[test]
    fn log_det_sign_from_swaps() {
        let a = CMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let d = a.det();
        assert!((d - c(-1.0)).norm() < 1e-14);
    }

    #[test]
    fn random_solve_residual() {
        use rand::{Rng, SeedableRng};
        let n = 40;
        let mut rng = rand::rngs::StdRng::seed_from_u64(12345);
        let mut rnd = || rng.gen::<f64>() - 0.5;
        let a = CMatrix::from_fn(n, n, |_, _| C64::new(rnd(), rnd()));
        let b: Vec<C64> = (0..n).map(|_| C64::new(rnd(), rnd())).collect();
        let x = a.solve(&b).unwrap();
        let r: Vec<C64> = a.matvec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(vec_norm(&r) / vec_norm(&b) < 1e-10);
        // det from log_det matches det of transpose
        let l1 = a.log_det();
        let l2 = a.transpose().log_det();
        assert!((l1.exp() / l2.exp() - c(1.0)).norm() < 1e-9);
    }
}
