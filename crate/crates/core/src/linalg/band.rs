use num_complex::Complex64 as C64;

use super::tridiag::{tql2, TrackedRows};
use crate::error::{Error, Result};

/// General complex band matrix, entry (i, j) stored at row i, offset j - i + kl.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<C64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandMatrix { n, kl, ku, data: vec![C64::new(0.0, 0.0); n * (kl + ku + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kl(&self) -> usize {
        self.kl
    }

    pub fn ku(&self) -> usize {
        self.ku
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        if self.in_band(i, j) {
            self.data[i * self.width() + j + self.kl - i]
        } else {
            C64::new(0.0, 0.0)
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        assert!(self.in_band(i, j), "({i},{j}) outside band");
        let w = self.width();
        self.data[i * w + j + self.kl - i] = v;
    }

    pub fn add_to(&mut self, i: usize, j: usize, v: C64) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row_range(i).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn matvec_transpose(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![C64::new(0.0, 0.0); self.n];
        for i in 0..self.n {
            for j in self.row_range(i) {
                y[j] += self.get(i, j) * x[i];
            }
        }
        y
    }

    pub fn shifted(&self, z: C64) -> Self {
        let mut m = self.clone();
        for i in 0..self.n {
            m.add_to(i, i, -z);
        }
        m
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        BandMatrix { n: self.n, kl: self.kl, ku: self.ku, data: self.data.iter().map(|&z| f(z)).collect() }
    }

    pub fn norm_max(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn lu(&self) -> BandLu {
        BandLu::factor(self)
    }
}

/// Banded LU with partial pivoting (row interchanges within kl).
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<C64>,
    piv: Vec<usize>,
    scale: f64,
}

impl BandLu {
    fn w(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.w() + j + self.kl - i
    }

    pub fn factor(a: &BandMatrix) -> Self {
        let (n, kl, ku) = (a.n, a.kl, a.ku);
        let mut lu = BandLu { n, kl, ku, data: vec![C64::new(0.0, 0.0); n * (2 * kl + ku + 1)], piv: vec![0; n], scale: a.norm_max() };
        for i in 0..n {
            for j in a.row_range(i) {
                let k = lu.idx(i, j);
                lu.data[k] = a.get(i, j);
            }
        }
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.data[lu.idx(k, k)].norm();
            for i in k + 1..=last {
                let v = lu.data[lu.idx(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            lu.piv[k] = p;
            let jmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (a1, a2) = (lu.idx(k, j), lu.idx(p, j));
                    lu.data.swap(a1, a2);
                }
            }
            let pivot = lu.data[lu.idx(k, k)];
            if pivot == C64::new(0.0, 0.0) {
                continue;
            }
            let inv = 1.0 / pivot;
            for i in k + 1..=last {
                let ik = lu.idx(i, k);
                let l = lu.data[ik] * inv;
                lu.data[ik] = l;
                if l == C64::new(0.0, 0.0) {
                    continue;
                }
                let rk = lu.idx(k, k);
                let ri = lu.idx(i, k);
                for t in 1..=(jmax - k) {
                    let u = lu.data[rk + t];
                    lu.data[ri + t] -= l * u;
                }
            }
        }
        lu
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn min_pivot(&self) -> (usize, f64) {
        (0..self.n)
            .map(|k| (k, self.data[self.idx(k, k)].norm()))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
    }

    pub fn check(&self) -> Result<()> {
        let (row, pivot) = self.min_pivot();
        if pivot == 0.0 || pivot < 1e-14 * self.scale {
            return Err(Error::SingularMatrix { row, pivot });
        }
        Ok(())
    }

    /// Solve in place; the caller is expected to have called `check` once.
    pub fn solve_in_place(&self, b: &mut [C64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk == C64::new(0.0, 0.0) {
                continue;
            }
            for i in k + 1..=(k + kl).min(n - 1) {
                b[i] -= self.data[self.idx(i, k)] * bk;
            }
        }
        for i in (0..n).rev() {
            let base = self.idx(i, i);
            let mut s = b[i];
            for t in 1..=((kl + ku).min(n - 1 - i)) {
                s -= self.data[base + t] * b[i + t];
            }
            b[i] = s / self.data[base];
        }
    }

    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        self.check()?;
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    pub fn log_det(&self) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        let mut swaps = 0;
        for k in 0..self.n {
            if self.piv[k] != k {
                swaps += 1;
            }
            let p = self.data[self.idx(k, k)];
            if p == C64::new(0.0, 0.0) {
                return C64::new(f64::NEG_INFINITY, 0.0);
            }
            acc += p.ln();
        }
        acc.im += std::f64::consts::PI * (swaps % 2) as f64;
        C64::new(acc.re, super::dense::wrap_angle(acc.im))
    }
}

/// Solve with one LU and `steps` rounds of iterative refinement against `a`.
pub fn solve_refined(a: &BandMatrix, lu: &BandLu, b: &[C64], steps: usize) -> Vec<C64> {
    let mut x = b.to_vec();
    lu.solve_in_place(&mut x);
    for _ in 0..steps {
        let ax = a.matvec(&x);
        let mut r: Vec<C64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        lu.solve_in_place(&mut r);
        for (xi, ri) in x.iter_mut().zip(&r) {
            *xi += ri;
        }
    }
    x
}

/// Hermitian band matrix reduced to tridiagonal form by complex Givens rotations.
struct HermBand {
    n: usize,
    w: usize,
    data: Vec<C64>,
}

impl HermBand {
    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * (2 * self.w + 1) + j + self.w - i
    }

    fn get(&self, i: usize, j: usize) -> C64 {
        self.data[self.at(i, j)]
    }

    /// A <- G A G* with G = [[c, s], [-conj(s), c]] acting on (p, p+1).
    fn rotate(&mut self, p: usize, c: f64, s: C64, tracked: &mut [Vec<C64>]) {
        let q = p + 1;
        let lo = q.saturating_sub(self.w);
        let hi = (p + self.w).min(self.n - 1);
        for j in lo..=hi {
            let (ip, iq) = (self.at(p, j), self.at(q, j));
            let (x, y) = (self.data[ip], self.data[iq]);
            self.data[ip] = x * c + s * y;
            self.data[iq] = -s.conj() * x + y * c;
        }
        for i in lo..=hi {
            let (ip, iq) = (self.at(i, p), self.at(i, q));
            let (x, y) = (self.data[ip], self.data[iq]);
            self.data[ip] = x * c + y * s.conj();
            self.data[iq] = -x * s + y * c;
        }
        for t in tracked.iter_mut() {
            let (x, y) = (t[p], t[q]);
            t[p] = x * c + s * y;
            t[q] = -s.conj() * x + y * c;
        }
    }

    /// Rotate (r-1, r) so that entry (r, col) vanishes.
    fn annihilate(&mut self, r: usize, col: usize, tracked: &mut [Vec<C64>]) -> bool {
        let y = self.get(r, col);
        if y == C64::new(0.0, 0.0) {
            return false;
        }
        let x = self.get(r - 1, col);
        let (c, s) = givens(x, y);
        self.rotate(r - 1, c, s, tracked);
        let k = self.at(r, col);
        self.data[k] = C64::new(0.0, 0.0);
        let k = self.at(col, r);
        self.data[k] = C64::new(0.0, 0.0);
        true
    }
}

fn givens(x: C64, y: C64) -> (f64, C64) {
    let ax = x.norm();
    let r = ax.hypot(y.norm());
    if ax == 0.0 {
        return (0.0, y.conj() / y.norm());
    }
    (ax / r, (x / ax) * y.conj() / r)
}

/// Eigenvalues of a Hermitian band matrix together with the projections
/// `<y, psi_n>` of each tracked vector `y` on the normalized eigenvectors.
///
/// Returns (eigenvalues ascending, projections[vector][eigen index]).
pub fn hermitian_band_spectrum(a: &BandMatrix, tracked: &[Vec<C64>]) -> Result<(Vec<f64>, Vec<Vec<C64>>)> {
    let n = a.n;
    let b = a.kl.max(a.ku);
    let w = b + 1;
    let mut s = HermBand { n, w, data: vec![C64::new(0.0, 0.0); n * (2 * w + 1)] };
    for i in 0..n {
        for j in i.saturating_sub(b)..(i + b + 1).min(n) {
            let k = s.at(i, j);
            s.data[k] = a.get(i, j);
        }
    }
    let mut y: Vec<Vec<C64>> = tracked.to_vec();
    for bw in (2..=b).rev() {
        for k in 0..n {
            let i = k + bw;
            if i >= n {
                break;
            }
            if !s.annihilate(i, k, &mut y) {
                continue;
            }
            let (mut p, mut q) = (i - 1, i);
            while q + bw < n {
                let r = q + bw;
                if !s.annihilate(r, p, &mut y) {
                    break;
                }
                p = r - 1;
                q = r;
            }
        }
    }
    let mut d: Vec<f64> = (0..n).map(|i| s.get(i, i).re).collect();
    let mut off = Vec::with_capacity(n.saturating_sub(1));
    let mut ph = vec![C64::new(1.0, 0.0); n];
    for k in 0..n.saturating_sub(1) {
        let e = s.get(k + 1, k);
        let r = e.norm();
        off.push(r);
        ph[k + 1] = if r > 0.0 { ph[k] * e / r } else { ph[k] };
    }
    let mut z = TrackedRows::new(y.len(), n);
    for (r, v) in y.iter().enumerate() {
        for (j, &x) in v.iter().enumerate() {
            z.set(r, j, x * ph[j].conj());
        }
    }
    tql2(&mut d, &off, Some(&mut z))?;
    let proj = (0..y.len()).map(|r| (0..n).map(|j| z.get(r, j)).collect()).collect();
    Ok((d, proj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense::{vec_norm, CMatrix};
    use crate::linalg::hermitian::eig_hermitian;
    use rand::{Rng, SeedableRng};

    fn random_band(n: usize, kl: usize, ku: usize, rng: &mut impl Rng) -> BandMatrix {
        let mut a = BandMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in a.row_range(i) {
                a.set(i, j, C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
            }
        }
        a
    }

    fn to_dense(a: &BandMatrix) -> CMatrix {
        CMatrix::from_fn(a.n(), a.n(), |i, j| a.get(i, j))
    }

    #[test]
    fn band_lu_matches_dense() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let a = random_band(60, 3, 2, &mut rng);
        let b: Vec<C64> = (0..60).map(|_| C64::new(rng.gen(), rng.gen())).collect();
        let x = a.lu().solve(&b).unwrap();
        let r: Vec<C64> = a.matvec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(vec_norm(&r) / vec_norm(&b) < 1e-12);
        let d = to_dense(&a);
        let l1 = a.lu().log_det();
        let l2 = d.log_det();
        assert!((l1.re - l2.re).abs() < 1e-10);
        assert!(((l1 - l2).im / std::f64::consts::PI - ((l1 - l2).im / std::f64::consts::PI).round()).abs() < 1e-10);
        assert!(((l1 - l2).exp() - C64::new(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn pivoting_needed() {
        let mut a = BandMatrix::zeros(3, 1, 1);
        a.set(0, 1, C64::new(1.0, 0.0));
        a.set(1, 0, C64::new(1.0, 0.0));
        a.set(1, 2, C64::new(2.0, 0.0));
        a.set(2, 1, C64::new(2.0, 0.0));
        a.set(2, 2, C64::new(1.0, 0.0));
        let b = vec![C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(3.0, 0.0)];
        let x = a.lu().solve(&b).unwrap();
        let r: Vec<C64> = a.matvec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(vec_norm(&r) < 1e-14);
        let det = a.lu().log_det().exp();
        assert!((det - C64::new(-1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn complex_hermitian_band_spectrum() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        let n = 35;
        let b = 3;
        let mut a = BandMatrix::zeros(n, b, b);
        for i in 0..n {
            a.set(i, i, C64::new(rng.gen::<f64>(), 0.0));
            for j in i + 1..(i + b + 1).min(n) {
                let v = C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                a.set(i, j, v);
                a.set(j, i, v.conj());
            }
        }
        let phi: Vec<C64> = (0..n).map(|_| C64::new(rng.gen::<f64>(), rng.gen::<f64>())).collect();
        let (vals, proj) = hermitian_band_spectrum(&a, std::slice::from_ref(&phi)).unwrap();
        let e = eig_hermitian(&to_dense(&a)).unwrap();
        for k in 0..n {
            assert!((vals[k] - e.values[k].re).abs() < 1e-12);
            let c: C64 = (0..n).map(|i| phi[i] * e.vectors[(i, k)].conj()).sum();
            assert!((proj[0][k].norm() - c.norm()).abs() < 1e-11);
        }
        let total: f64 = proj[0].iter().map(|z| z.norm_sqr()).sum();
        let pn: f64 = phi.iter().map(|z| z.norm_sqr()).sum();
        assert!((total - pn).abs() < 1e-11 * pn);
    }

    #[test]
    fn band_tridiagonalization_spectrum() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let n = 40;
        for b in [1usize, 2, 3] {
            let mut a = BandMatrix::zeros(n, b, b);
            for i in 0..n {
                for j in i..(i + b + 1).min(n) {
                    let v = C64::new(rng.gen::<f64>() - 0.5, 0.0);
                    a.set(i, j, v);
                    a.set(j, i, v);
                }
            }
            let phi: Vec<C64> = (0..n).map(|_| C64::new(rng.gen::<f64>(), 0.0)).collect();
            let (vals, proj) = hermitian_band_spectrum(&a, std::slice::from_ref(&phi)).unwrap();
            let e = eig_hermitian(&to_dense(&a)).unwrap();
            for k in 0..n {
                assert!((vals[k] - e.values[k].re).abs() < 1e-12);
                let c: C64 = (0..n).map(|i| phi[i] * e.vectors[(i, k)].conj()).sum();
                assert!((proj[0][k].norm() - c.norm()).abs() < 1e-11);
            }
        }
    }
}
