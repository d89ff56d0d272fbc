//! Survival amplitudes, residues and the resonance expansion.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::{assemble_cap_on, assemble_distorted_on, assemble_full_on, build_grid, Grid, OperatorMatrix};
use crate::error::{Error, Result};
use crate::linalg::{contour_quadrature, dot, vec_norm};
use crate::model::ModelConfig;
use crate::resonance::{well_states_on, Feshbach, Resonance, WellBasis};

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn binom(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Coefficients (ascending) of the degree-(2ν+1) smoothstep.
pub fn smoothstep_coefficients(nu: u32) -> Vec<f64> {
    let n = nu as u64;
    let mut c = vec![0.0; (2 * n + 2) as usize];
    for k in 0..=n {
        let s = if k % 2 == 0 { 1.0 } else { -1.0 };
        c[(n + 1 + k) as usize] = s * binom(n + k, k) * binom(2 * n + 1, n - k);
    }
    c
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

fn poly_deriv(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(i, &k)| i as f64 * k).collect()
}

/// Energy cutoff: 1 on I+[-a,a], 0 outside I+[-2a,2a].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cutoff {
    pub lo: f64,
    pub hi: f64,
    pub a: f64,
    pub nu: u32,
    /// g ≡ 1 everywhere.
    pub identity: bool,
    coeffs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutoffReport {
    pub nu: u32,
    /// sup|g^(k)|·a^k for k = 0..=ν, sampled.
    pub scaled_derivative_bounds: Vec<f64>,
}

impl Cutoff {
    pub fn identity() -> Self {
        Cutoff { lo: f64::NEG_INFINITY, hi: f64::INFINITY, a: 1.0, nu: 0, identity: true, coeffs: vec![] }
    }

    fn step(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else if s >= 1.0 {
            1.0
        } else if self.nu == 0 {
            if s >= 0.5 {
                1.0
            } else {
                0.0
            }
        } else {
            poly_eval(&self.coeffs, s)
        }
    }

    pub fn g(&self, e: f64) -> f64 {
        if self.identity {
            return 1.0;
        }
        if e < self.lo - self.a {
            self.step((e - (self.lo - 2.0 * self.a)) / self.a)
        } else if e > self.hi + self.a {
            self.step((self.hi + 2.0 * self.a - e) / self.a)
        } else {
            1.0
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo - 2.0 * self.a, self.hi + 2.0 * self.a)
    }
}

pub fn build_cutoff(window: (f64, f64), a: f64, nu: u32) -> Result<(Cutoff, CutoffReport)> {
    if !(a > 0.0) {
        return Err(Error::InvalidConfig(format!("cutoff margin must be positive, got {a}")));
    }
    let coeffs = smoothstep_coefficients(nu);
    let mut bounds = Vec::new();
    let mut p = coeffs.clone();
    for _ in 0..=nu {
        let sup = if nu == 0 { 1.0 } else { (0..=20000).map(|i| poly_eval(&p, i as f64 / 20000.0).abs()).fold(0.0, f64::max) };
        bounds.push(sup);
        p = poly_deriv(&p);
    }
    let g = Cutoff { lo: window.0, hi: window.1, a, nu, identity: false, coeffs };
    Ok((g, CutoffReport { nu, scaled_derivative_bounds: bounds }))
}

pub fn cutoff_for(basis: &WellBasis, nu: u32) -> Cutoff {
    build_cutoff(basis.window, basis.a, nu).expect("basis margin is positive").0
}

/// Initial state in the first channel, l2-normalized with the dx weight folded in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateVector {
    pub components: Vec<C64>,
    pub norm: f64,
}

impl StateVector {
    pub fn from_alpha(basis: &WellBasis, alpha: &[C64]) -> Self {
        assert_eq!(alpha.len(), basis.m());
        let n = basis.states[0].u.len();
        let mut v = vec![c(0.0); 2 * n];
        for (j, &aj) in alpha.iter().enumerate() {
            for (vi, p) in v.iter_mut().zip(basis.phi_l2(j)) {
                *vi += aj * p;
            }
        }
        let norm = vec_norm(&v);
        StateVector { components: v, norm }
    }

    pub fn well_state(basis: &WellBasis, j: usize) -> Self {
        let mut alpha = vec![c(0.0); basis.m()];
        alpha[j] = c(1.0);
        Self::from_alpha(basis, &alpha)
    }

    pub fn norm2(&self) -> f64 {
        self.norm * self.norm
    }
}

/// α_j = <φ, φ_j>.
pub fn alpha_projection(phi: &StateVector, basis: &WellBasis) -> Vec<C64> {
    (0..basis.m()).map(|j| dot(&phi.components, &basis.phi_l2(j))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    BoxSpectral,
    CapCn,
    Model,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurvivalSeries {
    pub times: Vec<f64>,
    pub amplitudes: Vec<C64>,
    pub backend: Backend,
    pub cutoff_applied: bool,
    /// Recurrence horizon (box backend only).
    pub t_rec: Option<f64>,
    /// False for times beyond the recurrence horizon.
    pub trusted: Vec<bool>,
    pub phi_norm2: f64,
    pub config_hash: String,
}

impl SurvivalSeries {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,re,im\n");
        for (t, a) in self.times.iter().zip(&self.amplitudes) {
            s.push_str(&format!("{t:.17e},{:.17e},{:.17e}\n", a.re, a.im));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("series serializes")
    }

    pub fn abs(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm()).collect()
    }
}

/// Spectral measure of φ for the selfadjoint discretized H.
#[derive(Debug, Clone)]
pub struct SpectralMeasure {
    pub energies: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SpectralMeasure {
    pub fn of(op: &OperatorMatrix, phi: &StateVector) -> Result<Self> {
        let (energies, proj) = op.spectral_projections(std::slice::from_ref(&phi.components))?;
        let weights = proj[0].iter().map(|p| p.norm_sqr()).collect();
        Ok(SpectralMeasure { energies, weights })
    }

    pub fn amplitude(&self, g: &Cutoff, t: f64) -> C64 {
        self.energies
            .iter()
            .zip(&self.weights)
            .map(|(&e, &w)| C64::from_polar(g.g(e) * w, -t * e))
            .sum()
    }

    /// <(1-g(H))φ, φ>.
    pub fn leakage(&self, g: &Cutoff) -> f64 {
        self.energies.iter().zip(&self.weights).map(|(&e, &w)| (1.0 - g.g(e)) * w).sum()
    }
}

/// T_rec = 2L / (2·sqrt(E_max + Γ)) with E_max the top of supp g.
pub fn recurrence_time(cfg: &ModelConfig, grid: &Grid, e_max: f64) -> f64 {
    let r = cfg.v2.rational();
    let depth = grid.interior().iter().map(|&x| -r.eval_real(x)).fold(0.0f64, f64::max);
    let v_max = 2.0 * (e_max + depth).max(1e-12).sqrt();
    2.0 * grid.half_length() / v_max
}

pub fn survival_box_from(measure: &SpectralMeasure, g: &Cutoff, times: &[f64], t_rec: f64, phi: &StateVector, hash: &str) -> SurvivalSeries {
    let amplitudes: Vec<C64> = times.par_iter().map(|&t| measure.amplitude(g, t)).collect();
    SurvivalSeries {
        times: times.to_vec(),
        amplitudes,
        backend: Backend::BoxSpectral,
        cutoff_applied: !g.identity,
        t_rec: Some(t_rec),
        trusted: times.iter().map(|&t| t <= t_rec).collect(),
        phi_norm2: phi.norm2(),
        config_hash: hash.to_string(),
    }
}

fn e_max_for(basis: &WellBasis) -> f64 {
    basis.window.1 + 2.0 * basis.a
}

pub fn survival_box_on(cfg: &ModelConfig, grid: &Grid, basis: &WellBasis, phi: &StateVector, g: &Cutoff, times: &[f64]) -> Result<SurvivalSeries> {
    let op = assemble_full_on(cfg, grid)?;
    let m = SpectralMeasure::of(&op, phi)?;
    let t_rec = recurrence_time(cfg, grid, e_max_for(basis));
    Ok(survival_box_from(&m, g, times, t_rec, phi, &cfg.hash()))
}

pub fn survival_box(cfg: &ModelConfig, phi: &StateVector, g: &Cutoff, times: &[f64]) -> Result<SurvivalSeries> {
    let grid = build_grid(cfg)?;
    let basis = well_states_on(cfg, &grid)?;
    survival_box_on(cfg, &grid, &basis, phi, g, times)
}

/// g(H)φ from inverse-iteration eigenvectors of H on supp g.
pub fn apply_cutoff(op: &OperatorMatrix, phi: &StateVector, g: &Cutoff) -> Result<(Vec<C64>, Vec<f64>)> {
    let (energies, proj) = op.spectral_projections(std::slice::from_ref(&phi.components))?;
    if g.identity {
        return Ok((phi.components.clone(), energies));
    }
    let (lo, hi) = g.support();
    let mut out = vec![c(0.0); phi.components.len()];
    let mut found: Vec<(f64, Vec<C64>)> = Vec::new();
    let mut used = Vec::new();
    let scale = op.norm_max();
    for (n, &e) in energies.iter().enumerate() {
        let ge = g.g(e);
        if e < lo || e > hi || ge == 0.0 || proj[0][n].norm_sqr() < 1e-32 {
            continue;
        }
        let lu = op.shifted_lu(c(e + 1e-14 * scale));
        let mut v = phi.components.clone();
        for _ in 0..3 {
            for (_, q) in found.iter().filter(|(f, _)| (f - e).abs() < 1e-6 * scale) {
                let cq = dot(&v, q);
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= cq * qi);
            }
            v = lu.solve_unchecked(&v);
            let nv = vec_norm(&v);
            v.iter_mut().for_each(|x| *x /= nv);
        }
        let cf = dot(&phi.components, &v);
        for (o, vi) in out.iter_mut().zip(&v) {
            *o += ge * cf.conj() * vi;
        }
        found.push((e, v));
        used.push(e);
    }
    Ok((out, used))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapRun {
    pub series: SurvivalSeries,
    pub steps: usize,
    /// Largest per-step relative norm change.
    pub max_norm_change: f64,
    pub final_norm: f64,
}

/// Crank–Nicolson propagation of g(H)φ under H - iηW_cap, frame shifted by e_c.
#[allow(clippy::too_many_arguments)]
pub fn survival_cap_on(cfg: &ModelConfig, grid: &Grid, phi: &StateVector, g: &Cutoff, times: &[f64], eta: f64, dt: f64, e_c: f64) -> Result<CapRun> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidConfig("times must be ascending and non-negative".into()));
    }
    let full = assemble_full_on(cfg, grid)?;
    let (psi0, support) = apply_cutoff(&full, phi, g)?;
    let spread = if g.identity {
        full.norm_max() * 4.0
    } else {
        support.iter().map(|e| (e - e_c).abs()).fold(0.0, f64::max)
    };
    if dt * spread > 0.5 {
        return Err(Error::InvalidConfig(format!("dt·spread = {} exceeds 0.5", dt * spread)));
    }
    let hc = assemble_cap_on(cfg, grid, eta)?;
    let mut psi = psi0;
    let mut amps = Vec::with_capacity(times.len());
    let mut t_prev = 0.0;
    let mut steps = 0;
    let mut max_change: f64 = 0.0;
    let mut cache: Option<(f64, crate::discretize::ShiftedLu)> = None;
    for &t in times {
        let span = t - t_prev;
        if span > 0.0 {
            let k = (span / dt - 1e-9).ceil().max(1.0) as usize;
            let tau = 0.5 * span / k as f64;
            if cache.as_ref().is_none_or(|(s, _)| (s - tau).abs() > 1e-15 * tau) {
                // (1 + iτ(H_c - e_c)) x = iτ (H_c - e_c - i/τ) x
                cache = Some((tau, hc.shifted_lu(C64::new(e_c, 1.0 / tau))));
            }
            let lu = &cache.as_ref().unwrap().1;
            let itau = C64::new(0.0, tau);
            for _ in 0..k {
                let n0 = vec_norm(&psi);
                let hpsi = hc.matvec(&psi);
                let rhs: Vec<C64> = psi.iter().zip(&hpsi).map(|(p, hp)| (p - itau * (hp - e_c * p)) / itau).collect();
                psi = lu.solve_unchecked(&rhs);
                let n1 = vec_norm(&psi);
                let change = (n1 - n0) / n0.max(1e-300);
                max_change = max_change.max(change.abs());
                if eta > 0.0 && change > 1e-8 {
                    return Err(Error::StepInstability(change));
                }
                if eta == 0.0 && change.abs() > 1e-12 {
                    return Err(Error::StepInstability(change));
                }
                steps += 1;
            }
        }
        t_prev = t;
        amps.push(C64::from_polar(1.0, -e_c * t) * dot(&psi, &phi.components));
    }
    let final_norm = vec_norm(&psi);
    Ok(CapRun {
        series: SurvivalSeries {
            times: times.to_vec(),
            amplitudes: amps,
            backend: Backend::CapCn,
            cutoff_applied: !g.identity,
            t_rec: None,
            trusted: vec![true; times.len()],
            phi_norm2: phi.norm2(),
            config_hash: cfg.hash(),
        },
        steps,
        max_norm_change: max_change,
        final_norm,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidueSet {
    pub b: Vec<C64>,
    pub quadrature_nodes_used: usize,
    pub richardson_error: f64,
    pub radius: f64,
}

/// b_j from the m×m effective resolvent on circles of radius min(ã/2, a/2) about ρ_j.
pub fn residues_with(fe: &Feshbach, basis: &WellBasis, resonances: &[Resonance], alpha: &[C64], radius_factor: f64) -> Result<ResidueSet> {
    let r = basis.disc_radius() * radius_factor;
    for (i, ri) in resonances.iter().enumerate() {
        for rj in &resonances[i + 1..] {
            if (ri.rho - rj.rho).norm() < 2.0 * r {
                return Err(Error::DiscOverlap);
            }
        }
    }
    let norm2: f64 = alpha.iter().map(|a| a.norm_sqr()).sum();
    let integrand = |z: C64| -> Result<C64> {
        let e = fe.e_minus_plus(z)?;
        let x = e.solve(alpha)?;
        Ok(x.iter().zip(alpha).map(|(xi, ai)| xi * ai.conj()).sum())
    };
    let mut b = Vec::new();
    let mut rich: f64 = 0.0;
    for res in resonances {
        let q = |n: usize| -> Result<C64> {
            let rule = contour_quadrature(res.rho, r, n);
            let vals: Vec<C64> = rule.nodes.par_iter().map(|&z| integrand(z)).collect::<Result<_>>()?;
            Ok(vals.iter().zip(&rule.weights).map(|(v, w)| v * w).sum::<C64>() / C64::new(0.0, 2.0 * PI))
        };
        let b64 = q(64)?;
        let b128 = q(128)?;
        rich = rich.max((b128 - b64).norm());
        b.push(b128);
    }
    if rich > 1e-8 * norm2.max(1e-300) {
        return Err(Error::QuadratureNotConverged(rich));
    }
    Ok(ResidueSet { b, quadrature_nodes_used: 128, richardson_error: rich, radius: r })
}

pub fn residues(cfg: &ModelConfig, resonances: &[Resonance], basis: &WellBasis, alpha: &[C64], theta: f64) -> Result<ResidueSet> {
    let grid = build_grid(cfg)?;
    let fe = Feshbach::new(cfg, &grid, basis, theta)?;
    residues_with(&fe, basis, resonances, alpha, 1.0)
}

pub fn expansion(rhos: &[C64], b: &[C64], times: &[f64]) -> SurvivalSeries {
    assert_eq!(rhos.len(), b.len());
    let amplitudes = times.iter().map(|&t| rhos.iter().zip(b).map(|(r, bj)| (C64::new(0.0, -t) * r).exp() * bj).sum()).collect();
    SurvivalSeries {
        times: times.to_vec(),
        amplitudes,
        backend: Backend::Model,
        cutoff_applied: false,
        t_rec: None,
        trusted: vec![true; times.len()],
        phi_norm2: b.iter().sum::<C64>().norm(),
        config_hash: String::new(),
    }
}

pub fn remainder(series: &SurvivalSeries, model: &SurvivalSeries) -> Result<Vec<f64>> {
    if series.times.len() != model.times.len() || series.times.iter().zip(&model.times).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0)) {
        return Err(Error::GridMismatch);
    }
    Ok(series.amplitudes.iter().zip(&model.amplitudes).map(|(a, b)| (a - b).norm()).collect())
}

/// Supremum over times t ≤ limit.
pub fn sup_until(times: &[f64], values: &[f64], limit: f64) -> f64 {
    times.iter().zip(values).filter(|(t, _)| **t <= limit).map(|(_, v)| *v).fold(0.0, f64::max)
}

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn segment(z0: C64, z1: C64, n: usize) -> Vec<(C64, C64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (z1 - z0);
    x.iter().zip(&w).map(|(&xi, &wi)| (z0 + half * (xi + 1.0), half * wi)).collect()
}

fn coupling_sources(cfg: &ModelConfig, grid: &Grid, basis: &WellBasis) -> Result<Vec<Vec<C64>>> {
    let d = assemble_distorted_on(cfg, grid, 0.0)?;
    Ok((0..basis.m()).map(|j| d.wstar.matvec(&basis.u_l2(j))).collect())
}

/// Leading remainder r₀(t) as the ε→0 limit, with the spectral density of P₂
/// taken from the complex-scaled resolvents at ±θ. The energy integral leaves
/// the real axis where g ≡ 1 and dips to Im z = -a/2.
pub fn r0_contour_on(cfg: &ModelConfig, grid: &Grid, basis: &WellBasis, alpha: &[C64], g: &Cutoff, times: &[f64]) -> Result<Vec<C64>> {
    let theta = cfg.distortion.theta;
    let p2p = assemble_distorted_on(cfg, grid, theta)?.p2;
    let p2m = assemble_distorted_on(cfg, grid, -theta)?.p2;
    let f = coupling_sources(cfg, grid, basis)?;
    let (lo, hi, a) = (basis.window.0, basis.window.1, basis.a);
    let lam = basis.lambdas();
    let h2 = cfg.h * cfg.h;
    let t_max = times.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let per = |len: f64| 32 + (4.0 * len * t_max.max(1.0)).ceil() as usize;
    let mut nodes: Vec<(C64, C64, f64)> = Vec::new();
    for (p, q) in [(lo - 2.0 * a, lo - 1.5 * a), (lo - 1.5 * a, lo - a), (hi + a, hi + 1.5 * a), (hi + 1.5 * a, hi + 2.0 * a)] {
        for (z, w) in segment(c(p), c(q), per(q - p)) {
            nodes.push((z, w, g.g(z.re)));
        }
    }
    let d = 0.5 * a;
    let corners = [c(lo - a), C64::new(lo - a, -d), C64::new(hi + a, -d), c(hi + a)];
    for i in 0..3 {
        let len = (corners[i + 1] - corners[i]).norm();
        for (z, w) in segment(corners[i], corners[i + 1], per(len).max(64)) {
            nodes.push((z, w, 1.0));
        }
    }
    let m = basis.m();
    let contributions: Vec<Vec<C64>> = nodes
        .par_iter()
        .map(|&(z, w, gz)| -> Result<Vec<C64>> {
            if gz == 0.0 {
                return Ok(vec![c(0.0); times.len()]);
            }
            let lp = p2p.shifted_lu(z);
            let lm = p2m.shifted_lu(z);
            let mut coef = c(0.0);
            for j in 0..m {
                let yp = lp.solve(&f[j])?;
                let ym = lm.solve(&f[j])?;
                for k in 0..m {
                    let fk = &f[k];
                    let rho: C64 = fk.iter().zip(yp.iter().zip(&ym)).map(|(a, (p, q))| a * (p - q)).sum::<C64>() / C64::new(0.0, 2.0 * PI);
                    coef += h2 * alpha[j] * alpha[k].conj() * rho / ((z - lam[j]) * (z - lam[k]));
                }
            }
            let cw = coef * w * gz;
            Ok(times.iter().map(|&t| cw * (C64::new(0.0, -t) * z).exp()).collect())
        })
        .collect::<Result<_>>()?;
    let mut out = vec![c(0.0); times.len()];
    for cvec in contributions {
        for (o, v) in out.iter_mut().zip(cvec) {
            *o += v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct R0BoxRecord {
    pub half_length: f64,
    pub eps: (f64, f64),
    pub level_spacing: f64,
    pub sup_abs: f64,
    /// sup_t |r₀^box(t) - r₀(t)|
    pub sup_diff_from_limit: f64,
}

/// Finite-box ε-regularized r₀ from the P₂ eigenbasis.
pub fn r0_box_on(cfg: &ModelConfig, grid: &Grid, basis: &WellBasis, alpha: &[C64], g: &Cutoff, times: &[f64], eps_pair: Option<(f64, f64)>) -> Result<(Vec<C64>, (f64, f64), f64)> {
    let p2 = assemble_distorted_on(cfg, grid, 0.0)?.p2;
    let f = coupling_sources(cfg, grid, basis)?;
    let (energies, proj) = p2.spectral_projections(&f)?;
    let (slo, shi) = g.support();
    let inside: Vec<usize> = (0..energies.len()).filter(|&n| energies[n] >= slo && energies[n] <= shi).collect();
    let spacing = if inside.len() >= 2 { (energies[inside[inside.len() - 1]] - energies[inside[0]]) / (inside.len() - 1) as f64 } else { f64::INFINITY };
    let eps = eps_pair.unwrap_or((3.0 * spacing, 3.0 * spacing));
    if eps.0.min(eps.1) < spacing {
        return Err(Error::EpsilonTooSmall { eps: eps.0.min(eps.1), spacing });
    }
    let lam = basis.lambdas();
    let h2 = cfg.h * cfg.h;
    let m = basis.m();
    let mut terms: Vec<(f64, C64)> = Vec::new();
    for &n in &inside {
        let e = energies[n];
        let mut coef = c(0.0);
        for j in 0..m {
            for k in 0..m {
                let num = proj[j][n] * proj[k][n].conj();
                coef += h2 * alpha[j] * alpha[k].conj() * num / ((e - C64::new(lam[j], eps.0)) * (e - C64::new(lam[k], eps.1)));
            }
        }
        terms.push((e, coef * g.g(e)));
    }
    let vals = times.iter().map(|&t| terms.iter().map(|(e, cf)| cf * C64::from_polar(1.0, -t * e)).sum()).collect();
    Ok((vals, eps, spacing))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct R0Series {
    pub times: Vec<f64>,
    pub values: Vec<C64>,
    pub boxes: Vec<R0BoxRecord>,
}

/// r₀ at the configured grid plus the box diagnostic at L and 1.5L.
pub fn r0_series(cfg: &ModelConfig, alpha: &[C64], nu: u32, times: &[f64], eps_pair: Option<(f64, f64)>) -> Result<R0Series> {
    let grid = build_grid(cfg)?;
    let basis = well_states_on(cfg, &grid)?;
    let g = cutoff_for(&basis, nu);
    let values = r0_contour_on(cfg, &grid, &basis, alpha, &g, times)?;
    let mut boxes = Vec::new();
    for factor in [1.0, 1.5] {
        let mut c2 = cfg.clone();
        c2.grid.half_length = cfg.grid.half_length * factor;
        let n = ((2.0 * c2.grid.half_length / grid.dx).round() as usize) | 1;
        c2.grid.points = Some(n + 1 - (n + 1) % 2);
        let g2 = build_grid(&c2)?;
        let b2 = well_states_on(&c2, &g2)?;
        let (vals, eps, spacing) = r0_box_on(&c2, &g2, &b2, alpha, &g, times, eps_pair)?;
        let sup_abs = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let sup_diff = vals.iter().zip(&values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        boxes.push(R0BoxRecord { half_length: c2.grid.half_length, eps, level_spacing: spacing, sup_abs, sup_diff_from_limit: sup_diff });
    }
    Ok(R0Series { times: times.to_vec(), values, boxes })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoCutoffComparison {
    pub series: SurvivalSeries,
    /// sup over trusted times of |<e^{-itH}φ,φ> - Σ e^{-itρ_j} b_j|
    pub sup_difference: f64,
    /// <(1-g(H))φ, φ> for the configured g.
    pub leakage: f64,
}

pub fn survival_nocutoff_on(cfg: &ModelConfig, grid: &Grid, basis: &WellBasis, phi: &StateVector, model: &SurvivalSeries, g: &Cutoff) -> Result<NoCutoffComparison> {
    let op = assemble_full_on(cfg, grid)?;
    let m = SpectralMeasure::of(&op, phi)?;
    let t_rec = recurrence_time(cfg, grid, e_max_for(basis));
    let series = survival_box_from(&m, &Cutoff::identity(), &model.times, t_rec, phi, &cfg.hash());
    let diff = remainder(&series, model)?;
    let sup = sup_until(&series.times, &diff, t_rec);
    Ok(NoCutoffComparison { series, sup_difference: sup, leakage: m.leakage(g) })
}

/// Linear grid on [0, 1/a] followed by log spacing up to t_max.
pub fn default_times(a: f64, t_max: f64, n: usize) -> Vec<f64> {
    let n = n.max(4);
    let t_a = (1.0 / a).min(t_max);
    let n_lin = n / 2;
    let mut t: Vec<f64> = (0..n_lin).map(|i| t_a * i as f64 / n_lin as f64).collect();
    let n_log = n - n_lin;
    let (l0, l1) = (t_a.ln(), t_max.ln());
    for i in 0..n_log {
        t.push((l0 + (l1 - l0) * i as f64 / (n_log - 1).max(1) as f64).exp());
    }
    t
}

pub fn linear_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![t0];
    }
    (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resonance::{resonances_direct_on, Method};

    #[test]
    fn smoothstep_shapes() {
        assert_eq!(smoothstep_coefficients(2), vec![0.0, 0.0, 0.0, 10.0, -15.0, 6.0]);
        let (g, rep) = build_cutoff((0.2, 0.3), 0.1, 2).unwrap();
        assert!((g.g(0.3 + 0.15) - 0.5).abs() < 1e-14);
        assert!((g.g(0.0 + 0.05) - 0.5).abs() < 1e-14);
        assert_eq!(g.g(0.25), 1.0);
        assert_eq!(g.g(0.51), 0.0);
        assert!(rep.scaled_derivative_bounds[2] > 5.5 && rep.scaled_derivative_bounds[2] < 6.5);
        let (g0, _) = build_cutoff((0.2, 0.3), 0.1, 0).unwrap();
        assert_eq!(g0.g(0.44), 1.0);
        assert_eq!(g0.g(0.46), 0.0);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn expansion_single_decay() {
        let s = expansion(&[C64::new(0.0, -0.01)], &[c(1.0)], &[0.0, 10.0]);
        assert!((s.amplitudes[1] - c((-0.1f64).exp())).norm() < 1e-15);
        assert_eq!(s.amplitudes[0], c(1.0));
    }

    #[test]
    fn remainder_rejects_mismatched_grids() {
        let a = expansion(&[c(0.1)], &[c(1.0)], &[0.0, 1.0]);
        let b = expansion(&[c(0.1)], &[c(1.0)], &[0.0, 2.0]);
        assert_eq!(remainder(&a, &b), Err(Error::GridMismatch));
    }

    #[test]
    fn decoupled_survival_is_stationary() {
        let cfg = ModelConfig::preset_by_name("decoupled_1d").unwrap().with_h(0.3);
        let grid = build_grid(&cfg).unwrap();
        let basis = well_states_on(&cfg, &grid).unwrap();
        let phi = StateVector::well_state(&basis, 0);
        let times = [0.0, 1.0, 5.0];
        let s = survival_box_on(&cfg, &grid, &basis, &phi, &Cutoff::identity(), &times).unwrap();
        let l = basis.states[0].lambda;
        for (t, a) in times.iter().zip(&s.amplitudes) {
            assert!((a - C64::from_polar(1.0, -t * l)).norm() < 1e-9, "{a}");
        }
        let res = resonances_direct_on(&cfg, &grid, &basis, cfg.distortion.theta).unwrap();
        assert_eq!(res[0].method, Method::Direct);
        let fe = Feshbach::new(&cfg, &grid, &basis, cfg.distortion.theta).unwrap();
        let b = residues_with(&fe, &basis, &res, &[c(1.0)], 1.0).unwrap();
        assert!((b.b[0] - 1.0).norm() < 1e-9);
    }

    #[test]
    fn cayley_steps_preserve_norm() {
        let cfg = ModelConfig::preset().with_h(0.35);
        let grid = build_grid(&cfg).unwrap();
        let basis = well_states_on(&cfg, &grid).unwrap();
        let phi = StateVector::well_state(&basis, 0);
        let g = cutoff_for(&basis, 2);
        let times = linear_times(0.0, 2.0, 3);
        let run = survival_cap_on(&cfg, &grid, &phi, &g, &times, 0.0, 0.01, basis.states[0].lambda).unwrap();
        assert_eq!(run.steps, 200);
        assert!(run.max_norm_change < 1e-12);
        let boxed = survival_box_on(&cfg, &grid, &basis, &phi, &g, &times).unwrap();
        for (a, b) in run.series.amplitudes.iter().zip(&boxed.amplitudes) {
            assert!((a - b).norm() < 1e-3 * b.norm(), "{a} {b}");
        }
    }

    #[test]
    fn time_grid_shapes() {
        let t = default_times(0.5, 100.0, 200);
        assert_eq!(t.len(), 200);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert!((t[199] - 100.0).abs() < 1e-9);
    }
}
