//! Well states, resonances (direct and Feshbach), effective matrices.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::discretize::{assemble_distorted_on, assemble_filled_well_on, assemble_schrodinger, build_grid, Grid, OperatorMatrix};
use crate::error::{Error, Result};
use crate::linalg::dense::wrap_angle;
use crate::linalg::krylov::arnoldi;
use crate::linalg::tridiag::tql2;
use crate::linalg::{dot, dotu, vec_norm, CMatrix};
use crate::model::{DistortionSpec, ModelConfig};

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WellState {
    pub index: usize,
    pub lambda: f64,
    /// Normalized with the dx-weighted inner product.
    pub u: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WellBasis {
    pub states: Vec<WellState>,
    pub a: f64,
    /// Minimal pairwise gap; infinite for a single state.
    pub a_tilde: f64,
    pub window: (f64, f64),
    pub dx: f64,
    /// P1 eigenvalue nearest to the window from outside.
    pub nearest_outside: f64,
}

impl WellBasis {
    pub fn m(&self) -> usize {
        self.states.len()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.lambda).collect()
    }

    /// φ_j = (u_j, 0) in the unweighted l2 normalization, block ordering.
    pub fn phi_l2(&self, j: usize) -> Vec<C64> {
        let u = &self.states[j].u;
        let n = u.len();
        let s = self.dx.sqrt();
        let mut v = vec![c(0.0); 2 * n];
        for i in 0..n {
            v[i] = c(u[i] * s);
        }
        v
    }

    pub fn u_l2(&self, j: usize) -> Vec<C64> {
        let s = self.dx.sqrt();
        self.states[j].u.iter().map(|&x| c(x * s)).collect()
    }

    pub fn lambda_matrix(&self) -> CMatrix {
        CMatrix::from_diag(&self.lambdas().iter().map(|&l| c(l)).collect::<Vec<_>>())
    }

    /// Disc radius used for residues, min(ã/2, a/2).
    pub fn disc_radius(&self) -> f64 {
        (0.5 * self.a_tilde).min(0.5 * self.a)
    }

    pub fn energy_scale(&self) -> f64 {
        self.window.0.abs().max(self.window.1.abs()).max(self.a)
    }
}

/// Ω(h) = (I + [-a, a]) + i[-ε1, 0].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Omega {
    pub re: (f64, f64),
    pub depth: f64,
}

impl Omega {
    pub fn new(basis: &WellBasis, depth_over_a: f64) -> Self {
        Omega { re: (basis.window.0 - basis.a, basis.window.1 + basis.a), depth: depth_over_a * basis.a }
    }

    pub fn contains(&self, z: C64) -> bool {
        z.re >= self.re.0 && z.re <= self.re.1 && z.im >= -self.depth && z.im <= 1e-10
    }
}

fn inverse_iteration_real(op: &OperatorMatrix, lambda: f64) -> (f64, Vec<f64>, f64) {
    let n = op.dim();
    let sigma = c(lambda + 4.0 * f64::EPSILON * (1.0 + lambda.abs()));
    let lu = op.shifted_lu(sigma);
    let mut v: Vec<C64> = (0..n).map(|i| c(1.0 + 0.5 * (0.7 * i as f64).sin())).collect();
    for _ in 0..4 {
        let w = lu.solve_unchecked(&v);
        let nw = vec_norm(&w);
        v = w.iter().map(|z| z / nw).collect();
    }
    let hv = op.matvec(&v);
    let lam = dot(&hv, &v).re;
    let res = vec_norm(&hv.iter().zip(&v).map(|(a, b)| a - lam * b).collect::<Vec<_>>());
    let mut u: Vec<f64> = v.iter().map(|z| z.re).collect();
    let big = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = u.iter().find(|x| x.abs() > 1e-3 * big) {
        if *first < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
        }
    }
    (lam, u, res)
}

pub fn well_states_on(cfg: &ModelConfig, grid: &Grid) -> Result<WellBasis> {
    let p1 = assemble_schrodinger(grid, &cfg.v1, cfg.h)?;
    let n = p1.dim();
    let mut d: Vec<f64> = (0..n).map(|i| p1.get(i, i).re).collect();
    let off: Vec<f64> = (0..n - 1).map(|i| p1.get(i + 1, i).re).collect();
    tql2(&mut d, &off, None)?;
    let (lo, hi) = cfg.window();
    let inside: Vec<f64> = d.iter().copied().filter(|&l| l >= lo && l <= hi).collect();
    if inside.is_empty() {
        return Err(Error::EmptyWindow { lo, hi });
    }
    let dist = |l: f64| if l < lo { lo - l } else { l - hi };
    let nearest_outside = d
        .iter()
        .copied()
        .filter(|&l| l < lo || l > hi)
        .min_by(|a, b| dist(*a).total_cmp(&dist(*b)))
        .unwrap_or(f64::INFINITY);
    let a = match cfg.cutoff.fixed_margin(cfg.h) {
        Some(a) => {
            if dist(nearest_outside) < 3.0 * a * (1.0 - 1e-12) {
                return Err(Error::GapViolation { eigenvalue: nearest_outside });
            }
            a
        }
        None => dist(nearest_outside) / 3.0,
    };
    let sdx = grid.dx.sqrt();
    let mut states = Vec::new();
    for (index, &l) in inside.iter().enumerate() {
        let (lam, u, res) = inverse_iteration_real(&p1, l);
        states.push(WellState { index, lambda: lam, u: u.iter().map(|x| x / sdx).collect(), residual: res });
    }
    let a_tilde = inside.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    Ok(WellBasis { states, a, a_tilde, window: (lo, hi), dx: grid.dx, nearest_outside })
}

pub fn well_states(cfg: &ModelConfig) -> Result<WellBasis> {
    well_states_on(cfg, &build_grid(cfg)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    Feshbach,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Resonance {
    pub rho: C64,
    pub paired_lambda: f64,
    pub index: usize,
    pub method: Method,
    pub theta_drift: f64,
    pub residual: f64,
}

/// JSON record {rho_re, rho_im, lambda, method, drift}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonanceRecord {
    pub rho_re: f64,
    pub rho_im: f64,
    pub lambda: f64,
    pub method: Method,
    pub drift: f64,
}

impl From<&Resonance> for ResonanceRecord {
    fn from(r: &Resonance) -> Self {
        ResonanceRecord { rho_re: r.rho.re, rho_im: r.rho.im, lambda: r.paired_lambda, method: r.method, drift: r.theta_drift }
    }
}

/// Number of eigenvalues inside a rectangle from the winding of arg det(A - z).
pub fn count_eigenvalues_in_box(op: &OperatorMatrix, re: (f64, f64), im: (f64, f64)) -> Result<usize> {
    let corners = [C64::new(re.0, im.0), C64::new(re.1, im.0), C64::new(re.1, im.1), C64::new(re.0, im.1)];
    let arg = |z: C64| op.shifted_lu(z).log_det().im;
    let mut total = 0.0;
    fn walk(za: C64, aa: f64, zb: C64, ab: f64, depth: u32, arg: &dyn Fn(C64) -> f64, total: &mut f64) {
        let d = wrap_angle(ab - aa);
        if d.abs() > PI / 2.0 && depth < 40 {
            let zm = 0.5 * (za + zb);
            let am = arg(zm);
            walk(za, aa, zm, am, depth + 1, arg, total);
            walk(zm, am, zb, ab, depth + 1, arg, total);
        } else {
            *total += d;
        }
    }
    for e in 0..4 {
        let (z0, z1) = (corners[e], corners[(e + 1) % 4]);
        let segs = 24;
        let mut za = z0;
        let mut aa = arg(za);
        for k in 1..=segs {
            let zb = z0 + (z1 - z0) * (k as f64 / segs as f64);
            let ab = arg(zb);
            walk(za, aa, zb, ab, 0, &arg, &mut total);
            za = zb;
            aa = ab;
        }
    }
    let w = total / (2.0 * PI);
    if (w - w.round()).abs() > 0.1 || w.round() < 0.0 {
        return Err(Error::ConvergenceFailure(format!("winding number {w}")));
    }
    Ok(w.round() as usize)
}

/// Shifted inverse iteration with shift updates; returns (eigenvalue, vector, residual).
pub fn polish_eigenpair(op: &OperatorMatrix, guess: C64, start: &[C64]) -> (C64, Vec<C64>, f64) {
    let mut sigma = guess;
    let mut v: Vec<C64> = start.to_vec();
    let nv = vec_norm(&v);
    v.iter_mut().for_each(|z| *z /= nv);
    let mut lam = guess;
    for _ in 0..10 {
        let lu = op.shifted_lu(sigma);
        let w = lu.solve_unchecked(&v);
        let t = dot(&w, &v);
        let nw = vec_norm(&w);
        if !nw.is_finite() || t.norm() == 0.0 {
            break;
        }
        lam = sigma + 1.0 / t;
        v = w.iter().map(|z| z / nw).collect();
        if (lam - sigma).norm() < 1e-13 * lam.norm().max(1.0) {
            break;
        }
        sigma = lam;
    }
    let hv = op.matvec(&v);
    let res = vec_norm(&hv.iter().zip(&v).map(|(a, b)| a - lam * b).collect::<Vec<_>>());
    (lam, v, res)
}

fn pair_to_lambdas(rhos: &[(C64, f64)], basis: &WellBasis, method: Method) -> Vec<Resonance> {
    let lams = basis.lambdas();
    let mut out: Vec<Resonance> = rhos
        .iter()
        .map(|&(rho, residual)| {
            let index = (0..lams.len())
                .min_by(|&i, &j| (rho - lams[i]).norm().total_cmp(&(rho - lams[j]).norm()))
                .unwrap_or(0);
            Resonance { rho, paired_lambda: lams[index], index, method, theta_drift: 0.0, residual }
        })
        .collect();
    out.sort_by_key(|r| r.index);
    out
}

/// Eigenvalues of H_θ in Ω without drift; used by `resonances_direct`.
pub fn eigenvalues_in_omega(cfg: &ModelConfig, grid: &Grid, basis: &WellBasis, theta: f64) -> Result<Vec<(C64, f64)>> {
    let op = assemble_distorted_on(cfg, grid, theta)?.h;
    let omega = Omega::new(basis, cfg.omega_depth);
    let expected = count_eigenvalues_in_box(&op, omega.re, (-omega.depth, 0.25 * basis.a))?;
    let sigma = C64::new(0.5 * (omega.re.0 + omega.re.1), -0.5 * omega.depth);
    let lu = op.shifted_lu(sigma);
    lu.solve(&vec![c(1.0); op.dim()])?;
    let n = op.dim();
    let half = 0.5 * (omega.re.1 - omega.re.0);
    let reach = half.hypot(omega.depth) * 2.0 + basis.a;
    let mut found: Vec<(C64, f64)> = Vec::new();
    for (attempt, k) in [40usize, 80, 140].iter().enumerate() {
        let mut start = vec![c(0.0); n];
        for j in 0..basis.m() {
            for (s, p) in start.iter_mut().zip(basis.phi_l2(j)) {
                *s += p;
            }
        }
        for (i, s) in start.iter_mut().enumerate() {
            *s += C64::new(1e-3 * (0.37 * i as f64 + attempt as f64).sin(), 1e-3 * (0.11 * i as f64).cos());
        }
        let ar = arnoldi(n, *k, &start, |v| lu.solve_unchecked(v))?;
        found.clear();
        for (mu, vec) in ar.ritz_values.iter().zip(&ar.ritz_vectors) {
            if mu.norm() == 0.0 {
                continue;
            }
            let lam = sigma + 1.0 / mu;
            if (lam - sigma).norm() > reach {
                continue;
            }
            let (rho, _, res) = polish_eigenpair(&op, lam, vec);
            if !omega.contains(rho) {
                continue;
            }
            if found.iter().any(|(r, _)| (r - rho).norm() < 1e-8 * basis.energy_scale()) {
                continue;
            }
            if res > 1e-8 * op.norm_max() {
                continue;
            }
            found.push((rho, res));
        }
        if found.len() == expected {
            break;
        }
    }
    if found.len() != expected {
        return Err(Error::CountMismatch { found: found.len(), expected });
    }
    found.sort_by(|a, b| a.0.re.total_cmp(&b.0.re));
    Ok(found)
}

fn match_drift(a: &[Resonance], b: &[(C64, f64)]) -> f64 {
    a.iter()
        .map(|r| b.iter().map(|(z, _)| (z - r.rho).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

pub fn resonances_direct_on(cfg: &ModelConfig, grid: &Grid, basis: &WellBasis, theta: f64) -> Result<Vec<Resonance>> {
    let found = eigenvalues_in_omega(cfg, grid, basis, theta)?;
    if found.len() != basis.m() {
        return Err(Error::CountMismatch { found: found.len(), expected: basis.m() });
    }
    let mut res = pair_to_lambdas(&found, basis, Method::Direct);
    let mut idx: Vec<usize> = res.iter().map(|r| r.index).collect();
    idx.dedup();
    if idx.len() != res.len() {
        return Err(Error::CountMismatch { found: idx.len(), expected: basis.m() });
    }
    let again = eigenvalues_in_omega(cfg, grid, basis, 1.5 * theta)?;
    let drift = match_drift(&res, &again);
    if drift > 1e-5 * basis.energy_scale() {
        return Err(Error::StabilityFailure { drift });
    }
    res.iter_mut().for_each(|r| r.theta_drift = drift);
    Ok(res)
}

pub fn resonances_direct(cfg: &ModelConfig, theta: f64) -> Result<Vec<Resonance>> {
    let grid = build_grid(cfg)?;
    let basis = well_states_on(cfg, &grid)?;
    resonances_direct_on(cfg, &grid, &basis, theta)
}

/// Max displacement of the resonances when the ramp is moved.
pub fn ramp_shift_drift(cfg: &ModelConfig, grid: &Grid, basis: &WellBasis, theta: f64, ramp: DistortionSpec) -> Result<f64> {
    let base = eigenvalues_in_omega(cfg, grid, basis, theta)?;
    let mut moved = cfg.clone();
    moved.distortion = ramp;
    let other = eigenvalues_in_omega(&moved, grid, basis, theta)?;
    let as_res = pair_to_lambdas(&base, basis, Method::Direct);
    Ok(match_drift(&as_res, &other))
}

/// Exact Grushin/Feshbach reduction of H_θ onto span{φ_j}.
pub struct Feshbach {
    pub op: OperatorMatrix,
    pub h: f64,
    phi: Vec<Vec<C64>>,
    hphi: Vec<Vec<C64>>,
    htphi: Vec<Vec<C64>>,
    qhphi: Vec<Vec<C64>>,
    lam: Vec<f64>,
    lam_theta: CMatrix,
}

impl Feshbach {
    pub fn new(cfg: &ModelConfig, grid: &Grid, basis: &WellBasis, theta: f64) -> Result<Self> {
        let op = assemble_distorted_on(cfg, grid, theta)?.h;
        let m = basis.m();
        let phi: Vec<Vec<C64>> = (0..m).map(|j| basis.phi_l2(j)).collect();
        let hphi: Vec<Vec<C64>> = phi.iter().map(|p| op.matvec(p)).collect();
        let htphi: Vec<Vec<C64>> = phi.iter().map(|p| op.matvec_transpose(p)).collect();
        let lam_theta = CMatrix::from_fn(m, m, |j, k| dotu(&phi[j], &hphi[k]));
        let qhphi = hphi
            .iter()
            .enumerate()
            .map(|(k, hp)| {
                let mut r = hp.clone();
                for (j, p) in phi.iter().enumerate() {
                    let cjk = lam_theta[(j, k)];
                    for (ri, pi) in r.iter_mut().zip(p) {
                        *ri -= cjk * pi;
                    }
                }
                r
            })
            .collect();
        Ok(Feshbach { op, h: cfg.h, phi, hphi, htphi, qhphi, lam: basis.lambdas(), lam_theta })
    }

    pub fn m(&self) -> usize {
        self.phi.len()
    }

    /// Solves the bordered system [[H-z, Φ], [Φᵀ, 0]] [v; μ] = [rhs; 0] by block
    /// elimination with two refinement sweeps.
    fn bordered_solve(&self, lu: &crate::discretize::ShiftedLu, z: C64, rhs: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        let m = self.m();
        let vcols: Vec<Vec<C64>> = self.phi.iter().map(|p| lu.solve_near(p, 1)).collect();
        let s = CMatrix::from_fn(m, m, |i, j| dotu(&self.phi[i], &vcols[j]));
        let s_lu = s.lu();
        let elim = |r: &[C64]| -> Result<(Vec<C64>, Vec<C64>)> {
            let y = lu.solve_near(r, 1);
            let t: Vec<C64> = self.phi.iter().map(|p| dotu(p, &y)).collect();
            let mu = s_lu.solve(&t)?;
            let mut v = y;
            for (j, col) in vcols.iter().enumerate() {
                for (vi, ci) in v.iter_mut().zip(col) {
                    *vi -= mu[j] * ci;
                }
            }
            Ok((v, mu))
        };
        let mut out = Vec::with_capacity(rhs.len());
        for r in rhs {
            let (mut v, mut mu) = elim(r)?;
            for _ in 0..2 {
                let hv = self.op.matvec(&v);
                let mut r1: Vec<C64> = r.iter().zip(&hv).zip(&v).map(|((b, a), x)| b - a + z * x).collect();
                for (j, p) in self.phi.iter().enumerate() {
                    for (ri, pi) in r1.iter_mut().zip(p) {
                        *ri -= mu[j] * pi;
                    }
                }
                let r2: Vec<C64> = self.phi.iter().map(|p| -dotu(p, &v)).collect();
                // correction: same elimination with the second block right-hand side
                let y = lu.solve_near(&r1, 0);
                let t: Vec<C64> = self.phi.iter().zip(&r2).map(|(p, b)| dotu(p, &y) - b).collect();
                let dmu = s_lu.solve(&t)?;
                let mut dv = y;
                for (j, col) in vcols.iter().enumerate() {
                    for (vi, ci) in dv.iter_mut().zip(col) {
                        *vi -= dmu[j] * ci;
                    }
                }
                for (a, b) in v.iter_mut().zip(&dv) {
                    *a += b;
                }
                for (a, b) in mu.iter_mut().zip(&dmu) {
                    *a += b;
                }
            }
            out.push(v);
        }
        Ok(out)
    }

    /// h²F(z) as an m×m matrix.
    pub fn h2f(&self, z: C64) -> Result<CMatrix> {
        let m = self.m();
        let lu = self.op.shifted_lu(z);
        let v = self.bordered_solve(&lu, z, &self.qhphi)?;
        Ok(CMatrix::from_fn(m, m, |j, k| {
            let d = if j == k { c(self.lam[j]) } else { c(0.0) };
            d - self.lam_theta[(j, k)] + dotu(&self.htphi[j], &v[k])
        }))
    }

    pub fn f(&self, z: C64) -> Result<CMatrix> {
        Ok(self.h2f(z)?.scale(c(1.0 / (self.h * self.h))))
    }

    /// E_{-+}(z) = z - Λ + h²F(z).
    pub fn e_minus_plus(&self, z: C64) -> Result<CMatrix> {
        let mut e = self.h2f(z)?;
        for j in 0..self.m() {
            e[(j, j)] += z - self.lam[j];
        }
        Ok(e)
    }

    pub fn det(&self, z: C64) -> Result<C64> {
        Ok(self.e_minus_plus(z)?.log_det().exp())
    }

    #[allow(dead_code)]
    fn hphi(&self) -> &[Vec<C64>] {
        &self.hphi
    }
}

pub fn f_matrix(cfg: &ModelConfig, z: C64, theta: f64, basis: &WellBasis) -> Result<CMatrix> {
    let grid = build_grid(cfg)?;
    Feshbach::new(cfg, &grid, basis, theta)?.f(z)
}

/// Newton on det E(z), with the step taken from the log-derivative of det.
/// Close to a root the bordered solve loses accuracy, so once steps are below
/// 1e-7 a step that grows again is discarded and the last iterate returned.
pub fn newton_root(fe: &Feshbach, seed: C64, a: f64) -> Result<C64> {
    let step = (1e-3 * a).max(1e-8);
    let log_det = |z: C64| -> Result<C64> { Ok(fe.e_minus_plus(z)?.log_det()) };
    let mut z = seed;
    let mut last = f64::INFINITY;
    for _ in 0..50 {
        let l0 = log_det(z)?;
        if l0.re == f64::NEG_INFINITY {
            return Ok(z);
        }
        let (lp, lm) = (log_det(z + step)?, log_det(z - step)?);
        // D'/D from centered differences of D, rescaled by D(z) to avoid overflow
        let dp = ((lp - l0).exp() - (lm - l0).exp()) / (2.0 * step);
        let dz = -1.0 / dp;
        if !dz.re.is_finite() || !dz.im.is_finite() {
            break;
        }
        let scale = z.norm().max(1.0);
        if last < 1e-7 * scale && dz.norm() > last {
            return Ok(z);
        }
        z += dz;
        if dz.norm() < 1e-12 * scale {
            return Ok(z);
        }
        last = dz.norm();
    }
    Err(Error::NewtonDivergence { seed })
}

pub fn resonances_feshbach_on(cfg: &ModelConfig, grid: &Grid, basis: &WellBasis, theta: f64) -> Result<Vec<Resonance>> {
    let fe = Feshbach::new(cfg, grid, basis, theta)?;
    let mut roots = Vec::new();
    for s in &basis.states {
        let z = newton_root(&fe, c(s.lambda), basis.a)?;
        if z.im > 1e-10 {
            return Err(Error::NewtonDivergence { seed: c(s.lambda) });
        }
        if basis.a_tilde.is_finite() && roots.iter().any(|(r, _): &(C64, f64)| (r - z).norm() < 1e-9 * basis.energy_scale()) {
            return Err(Error::RootCollision(z));
        }
        roots.push((z, 0.0));
    }
    let mut out = pair_to_lambdas(&roots, basis, Method::Feshbach);
    for (r, s) in out.iter_mut().zip(&basis.states) {
        r.index = s.index;
        r.paired_lambda = s.lambda;
    }
    Ok(out)
}

pub fn resonances_feshbach(cfg: &ModelConfig, theta: f64, basis: &WellBasis) -> Result<Vec<Resonance>> {
    let grid = build_grid(cfg)?;
    resonances_feshbach_on(cfg, &grid, basis, theta)
}

/// λ_j - h²F_jj(λ_j).
pub fn first_order_resonance_with(fe: &Feshbach, basis: &WellBasis, j: usize) -> Result<C64> {
    let l = c(basis.states[j].lambda);
    Ok(l - fe.h2f(l)?[(j, j)])
}

pub fn first_order_resonance(cfg: &ModelConfig, basis: &WellBasis, j: usize) -> Result<C64> {
    let grid = build_grid(cfg)?;
    let fe = Feshbach::new(cfg, &grid, basis, cfg.distortion.theta)?;
    first_order_resonance_with(&fe, basis, j)
}

/// h² uⱼᵀ W_θ (P₂^θ - z)^{-1} W_θ* u_k (bilinear pairing, undistorted u).
pub fn m0_matrix_on(cfg: &ModelConfig, grid: &Grid, z: C64, theta: f64, basis: &WellBasis) -> Result<CMatrix> {
    let d = assemble_distorted_on(cfg, grid, theta)?;
    m0_from_blocks(&d.p2, &d.w, &d.wstar, z, basis, cfg.h)
}

fn m0_from_blocks(p2: &OperatorMatrix, w: &OperatorMatrix, wstar: &OperatorMatrix, z: C64, basis: &WellBasis, h: f64) -> Result<CMatrix> {
    let m = basis.m();
    let lu = p2.shifted_lu(z);
    lu.check()?;
    let us: Vec<Vec<C64>> = (0..m).map(|j| basis.u_l2(j)).collect();
    let wt_u: Vec<Vec<C64>> = us.iter().map(|u| w.matvec_transpose(u)).collect();
    let mut out = CMatrix::zeros(m, m);
    for k in 0..m {
        let x = lu.solve_refined(&wstar.matvec(&us[k]), 1)?;
        for j in 0..m {
            out[(j, k)] = dotu(&wt_u[j], &x) * (h * h);
        }
    }
    Ok(out)
}

pub fn m0_matrix(cfg: &ModelConfig, z: C64, theta: f64, basis: &WellBasis) -> Result<CMatrix> {
    m0_matrix_on(cfg, &build_grid(cfg)?, z, theta, basis)
}

/// M̃₀ built on the filled-well P̃₂ (undistorted, selfadjoint).
pub fn m0_filled_well_on(cfg: &ModelConfig, grid: &Grid, z: C64, basis: &WellBasis, delta: f64, floor: f64) -> Result<CMatrix> {
    let full = assemble_filled_well_on(cfg, grid, delta, floor)?;
    let n = grid.n();
    // channel-2 block of the filled-well operator
    let d = assemble_distorted_on(cfg, grid, 0.0)?;
    let mut p2 = d.p2.clone();
    let diag: Vec<C64> = (0..n).map(|i| full.get(n + i, n + i)).collect();
    p2 = set_diag(&p2, &diag);
    m0_from_blocks(&p2, &d.w, &d.wstar, z, basis, cfg.h)
}

fn set_diag(op: &OperatorMatrix, diag: &[C64]) -> OperatorMatrix {
    let mut b = op.band().clone();
    for (i, &v) in diag.iter().enumerate() {
        b.set(i, i, v);
    }
    let mut out = op.map_entries(|z| z);
    out.replace_band(b);
    out
}

/// Operator-norm estimate of the reduced resolvent of P₁^θ on span{u_j}^⊥.
pub fn reduced_resolvent_norm_on(cfg: &ModelConfig, grid: &Grid, z: C64, theta: f64, basis: &WellBasis) -> Result<f64> {
    let p1 = assemble_distorted_on(cfg, grid, theta)?.p1;
    let us: Vec<Vec<C64>> = (0..basis.m()).map(|j| basis.u_l2(j)).collect();
    let lu = p1.shifted_lu(z);
    let n = p1.dim();
    let m = us.len();
    let vcols: Vec<Vec<C64>> = us.iter().map(|u| lu.solve_near(u, 1)).collect();
    let s = CMatrix::from_fn(m, m, |i, j| dotu(&us[i], &vcols[j]));
    let s_lu = s.lu();
    let project = |v: &mut Vec<C64>| {
        for u in &us {
            let cf = dotu(u, v);
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= cf * ui;
            }
        }
    };
    // X r = (Π(P₁-z)Π)^{-1} r on range Π via the bordered system
    let apply = |r: &[C64]| -> Result<Vec<C64>> {
        let mut r = r.to_vec();
        project(&mut r);
        let y = lu.solve_near(&r, 1);
        let t: Vec<C64> = us.iter().map(|u| dotu(u, &y)).collect();
        let mu = s_lu.solve(&t)?;
        let mut v = y;
        for (j, col) in vcols.iter().enumerate() {
            for (vi, ci) in v.iter_mut().zip(col) {
                *vi -= mu[j] * ci;
            }
        }
        project(&mut v);
        Ok(v)
    };
    let mut v: Vec<C64> = (0..n).map(|i| C64::new((0.013 * i as f64).sin() + 0.3, (0.029 * i as f64).cos())).collect();
    project(&mut v);
    let mut est = 0.0;
    for _ in 0..20 {
        let nv = vec_norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let xv = apply(&v)?;
        // X is complex symmetric, so X* w = conj(X conj(w))
        let conj_xv: Vec<C64> = xv.iter().map(|x| x.conj()).collect();
        let xhxv: Vec<C64> = apply(&conj_xv)?.iter().map(|x| x.conj()).collect();
        est = vec_norm(&xhxv).sqrt();
        v = xhxv;
    }
    Ok(est)
}

pub fn reduced_resolvent_norm(cfg: &ModelConfig, z: C64, theta: f64) -> Result<f64> {
    let grid = build_grid(cfg)?;
    let basis = well_states_on(cfg, &grid)?;
    reduced_resolvent_norm_on(cfg, &grid, z, theta, &basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::assemble_schrodinger;
    use crate::model::{Channel, PotentialKind, PotentialSpec};

    fn preset(h: f64) -> (ModelConfig, Grid, WellBasis) {
        let cfg = ModelConfig::preset().with_h(h);
        let grid = build_grid(&cfg).unwrap();
        let basis = well_states_on(&cfg, &grid).unwrap();
        (cfg, grid, basis)
    }

    #[test]
    fn harmonic_well_states() {
        let (_, _, b) = preset(0.3);
        assert_eq!(b.m(), 1);
        assert!((b.states[0].lambda - 0.3).abs() < 1e-4);
        let norm: f64 = b.states[0].u.iter().map(|x| x * x).sum::<f64>() * b.dx;
        assert!((norm - 1.0).abs() < 1e-12);
        assert!((b.a - 0.6 * 0.3).abs() < 1e-3);
        assert!(b.states[0].residual < 1e-9);
    }

    #[test]
    fn winding_counts_harmonic_levels() {
        let cfg = ModelConfig::preset().with_h(0.3);
        let grid = build_grid(&cfg).unwrap();
        let v = PotentialSpec { kind: PotentialKind::HarmonicWell, params: vec![1.0], denominator: vec![], role: Channel::V1 };
        let p = assemble_schrodinger(&grid, &v, 0.3).unwrap();
        assert_eq!(count_eigenvalues_in_box(&p, (0.1, 1.0), (-0.05, 0.05)).unwrap(), 2);
        assert_eq!(count_eigenvalues_in_box(&p, (0.4, 0.8), (-0.05, 0.05)).unwrap(), 0);
    }

    #[test]
    fn direct_and_feshbach_agree() {
        let (cfg, grid, b) = preset(0.3);
        let d = resonances_direct_on(&cfg, &grid, &b, cfg.distortion.theta).unwrap();
        let f = resonances_feshbach_on(&cfg, &grid, &b, cfg.distortion.theta).unwrap();
        assert_eq!(d.len(), 1);
        assert!(d[0].rho.im < 0.0);
        assert!((d[0].rho - f[0].rho).norm() < 1e-9, "{:?} {:?}", d[0].rho, f[0].rho);
        assert!(d[0].theta_drift < 1e-6);
    }

    #[test]
    fn decoupled_resonance_is_the_well_eigenvalue() {
        let cfg = ModelConfig::preset_by_name("decoupled_1d").unwrap().with_h(0.3);
        let grid = build_grid(&cfg).unwrap();
        let b = well_states_on(&cfg, &grid).unwrap();
        let d = resonances_direct_on(&cfg, &grid, &b, cfg.distortion.theta).unwrap();
        assert!((d[0].rho - b.states[0].lambda).norm() < 1e-9);
    }

    #[test]
    fn f_is_independent_of_theta() {
        let (cfg, grid, b) = preset(0.3);
        let z = C64::new(b.states[0].lambda, 0.0);
        let f1 = Feshbach::new(&cfg, &grid, &b, 0.15).unwrap().f(z).unwrap();
        let f2 = Feshbach::new(&cfg, &grid, &b, 0.25).unwrap().f(z).unwrap();
        assert!((f1[(0, 0)] - f2[(0, 0)]).norm() < 1e-5 * f1[(0, 0)].norm(), "{} {}", f1[(0, 0)], f2[(0, 0)]);
        let m0 = m0_matrix_on(&cfg, &grid, z, 0.15, &b).unwrap();
        assert!(m0[(0, 0)].im > 0.0);
    }

    #[test]
    fn reduced_resolvent_sees_neighbouring_levels() {
        let (cfg, grid, b) = preset(0.3);
        let z = C64::new(b.states[0].lambda, 0.0);
        let r = reduced_resolvent_norm_on(&cfg, &grid, z, cfg.distortion.theta, &b).unwrap();
        assert!((r * 0.6 - 1.0).abs() < 0.05, "{r}");
    }
}
