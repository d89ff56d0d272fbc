//! Finite-difference operators on a uniform Dirichlet grid.
//!
//! Two-channel operators are stored banded with the channels interleaved
//! (unknown i of channel c at row 2i + c); every public accessor and vector
//! uses the block ordering [channel 1; channel 2].

use std::io::Write;
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::band::{hermitian_band_spectrum, solve_refined};
use crate::linalg::{BandLu, BandMatrix, CMatrix};
use crate::model::{CouplingSpec, DistortionSpec, ModelConfig, PotentialKind, PotentialSpec, Rational};

fn c0() -> C64 {
    C64::new(0.0, 0.0)
}

/// Uniform grid; the two endpoints carry the Dirichlet condition, unknowns live
/// on the `n_points - 2` interior nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub dx: f64,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Self {
        assert!(n_points >= 3 && x_max > x_min);
        Grid { x_min, x_max, n_points, dx: (x_max - x_min) / (n_points - 1) as f64 }
    }

    pub fn symmetric(half_length: f64, n_points: usize) -> Self {
        Self::new(-half_length, half_length, n_points)
    }

    pub fn x(&self, i: usize) -> f64 {
        if 2 * i + 1 == self.n_points {
            return 0.5 * (self.x_min + self.x_max);
        }
        self.x_min + i as f64 * self.dx
    }

    /// Number of unknowns.
    pub fn n(&self) -> usize {
        self.n_points - 2
    }

    pub fn interior(&self) -> Vec<f64> {
        (1..self.n_points - 1).map(|i| self.x(i)).collect()
    }

    pub fn half_length(&self) -> f64 {
        0.5 * (self.x_max - self.x_min)
    }
}

fn min_potential(cfg: &ModelConfig) -> f64 {
    let l = cfg.grid.half_length;
    let (v1, v2) = (cfg.v1.rational(), cfg.v2.rational());
    (0..=4000)
        .map(|k| -l + 2.0 * l * k as f64 / 4000.0)
        .map(|x| v1.eval_real(x).min(v2.eval_real(x)))
        .fold(f64::INFINITY, f64::min)
}

/// Largest admissible spacing h/(10 p_max).
pub fn max_spacing(cfg: &ModelConfig) -> f64 {
    let e_max = cfg.window().1 + 1.0;
    let p_max = (e_max - min_potential(cfg)).max(1.0).sqrt();
    cfg.h / (10.0 * p_max)
}

pub fn build_grid(cfg: &ModelConfig) -> Result<Grid> {
    let l = cfg.grid.half_length;
    let dx_max = max_spacing(cfg);
    let cells = (2.0 * l / dx_max).ceil() as usize;
    let required = cells + 1;
    match cfg.grid.points {
        Some(n) => {
            let dx = 2.0 * l / (n - 1) as f64;
            if dx > dx_max * (1.0 + 1e-12) {
                return Err(Error::ResolutionError { requested: n, required });
            }
            Ok(Grid::symmetric(l, n))
        }
        None => {
            let n = if required.is_multiple_of(2) { required + 1 } else { required };
            Ok(Grid::symmetric(l, n))
        }
    }
}

fn smoothstep5(t: f64) -> (f64, f64) {
    let t = t.clamp(0.0, 1.0);
    let s = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
    let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t);
    (s, ds)
}

/// f(x) = x·S((|x|-R)/w) and its exact derivative.
pub fn ramp(x: f64, d: &DistortionSpec) -> (f64, f64) {
    let ax = x.abs();
    let (s, ds) = smoothstep5((ax - d.ramp_start) / d.ramp_width);
    (x * s, s + ax * ds / d.ramp_width)
}

pub fn distortion_profile(grid: &Grid, d: &DistortionSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let end = d.ramp_start + d.ramp_width;
    if end >= grid.x_max || -end <= grid.x_min {
        return Err(Error::RampOutOfDomain { ramp_end: end, x_max: grid.x_max });
    }
    let (f, fp) = grid.interior().iter().map(|&x| ramp(x, d)).unzip();
    Ok((f, fp))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockLayout {
    Scalar,
    TwoChannel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub what: String,
    pub h: f64,
    pub theta: f64,
    pub eta: f64,
    pub v1: PotentialKind,
    pub v2: PotentialKind,
}

#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    band: BandMatrix,
    pub layout: BlockLayout,
    pub hermitian: bool,
    pub grid: Grid,
    pub provenance: Provenance,
}

/// Factorization of (A - z) in block ordering.
pub struct ShiftedLu {
    a: BandMatrix,
    lu: BandLu,
    layout: BlockLayout,
    n: usize,
}

impl ShiftedLu {
    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        self.lu.check()?;
        let bi = to_internal(self.layout, self.n, b);
        Ok(from_internal(self.layout, self.n, &solve_refined(&self.a, &self.lu, &bi, 1)))
    }

    /// Same as `solve` with extra refinement steps.
    pub fn solve_refined(&self, b: &[C64], steps: usize) -> Result<Vec<C64>> {
        self.lu.check()?;
        let bi = to_internal(self.layout, self.n, b);
        Ok(from_internal(self.layout, self.n, &solve_refined(&self.a, &self.lu, &bi, steps)))
    }

    pub fn check(&self) -> Result<()> {
        self.lu.check()
    }

    /// `solve_refined` without the singularity check, for shifts near the spectrum.
    pub fn solve_near(&self, b: &[C64], steps: usize) -> Vec<C64> {
        let bi = to_internal(self.layout, self.n, b);
        from_internal(self.layout, self.n, &solve_refined(&self.a, &self.lu, &bi, steps))
    }

    /// Solve without the singularity check (inverse iteration at a shift on the spectrum).
    pub fn solve_unchecked(&self, b: &[C64]) -> Vec<C64> {
        let mut x = to_internal(self.layout, self.n, b);
        self.lu.solve_in_place(&mut x);
        from_internal(self.layout, self.n, &x)
    }

    pub fn log_det(&self) -> C64 {
        // interleaving is a permutation with sign (-1)^{n(n-1)/2}
        let mut l = self.lu.log_det();
        if self.layout == BlockLayout::TwoChannel && (self.n * (self.n - 1) / 2) % 2 == 1 {
            l.im += std::f64::consts::PI;
            l.im = crate::linalg::dense::wrap_angle(l.im);
        }
        l
    }
}

fn internal_index(layout: BlockLayout, n: usize, k: usize) -> usize {
    match layout {
        BlockLayout::Scalar => k,
        BlockLayout::TwoChannel => {
            if k < n {
                2 * k
            } else {
                2 * (k - n) + 1
            }
        }
    }
}

fn to_internal(layout: BlockLayout, n: usize, v: &[C64]) -> Vec<C64> {
    let mut out = vec![c0(); v.len()];
    for (k, &x) in v.iter().enumerate() {
        out[internal_index(layout, n, k)] = x;
    }
    out
}

fn from_internal(layout: BlockLayout, n: usize, v: &[C64]) -> Vec<C64> {
    (0..v.len()).map(|k| v[internal_index(layout, n, k)]).collect()
}

impl OperatorMatrix {
    /// Unknowns per channel.
    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn dim(&self) -> usize {
        self.band.n()
    }

    pub fn band(&self) -> &BandMatrix {
        &self.band
    }

    fn idx(&self, k: usize) -> usize {
        internal_index(self.layout, self.n(), k)
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.band.get(self.idx(i), self.idx(j))
    }

    pub fn to_dense(&self) -> CMatrix {
        CMatrix::from_fn(self.dim(), self.dim(), |i, j| self.get(i, j))
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let xi = to_internal(self.layout, self.n(), x);
        from_internal(self.layout, self.n(), &self.band.matvec(&xi))
    }

    pub fn matvec_transpose(&self, x: &[C64]) -> Vec<C64> {
        let xi = to_internal(self.layout, self.n(), x);
        from_internal(self.layout, self.n(), &self.band.matvec_transpose(&xi))
    }

    pub fn norm_max(&self) -> f64 {
        self.band.norm_max()
    }

    pub fn hermitian_defect(&self) -> f64 {
        let b = &self.band;
        let mut d: f64 = 0.0;
        for i in 0..b.n() {
            for j in b.row_range(i) {
                d = d.max((b.get(i, j) - b.get(j, i).conj()).norm());
            }
        }
        d
    }

    pub fn symmetric_defect(&self) -> f64 {
        let b = &self.band;
        let mut d: f64 = 0.0;
        for i in 0..b.n() {
            for j in b.row_range(i) {
                d = d.max((b.get(i, j) - b.get(j, i)).norm());
            }
        }
        d
    }

    pub fn shifted_lu(&self, z: C64) -> ShiftedLu {
        let a = self.band.shifted(z);
        let lu = a.lu();
        ShiftedLu { a, lu, layout: self.layout, n: self.n() }
    }

    /// Entries of the selfadjoint operator's spectral measure: eigenvalues and
    /// `<y, psi_n>` for each tracked block-ordered vector.
    pub fn spectral_projections(&self, tracked: &[Vec<C64>]) -> Result<(Vec<f64>, Vec<Vec<C64>>)> {
        assert!(self.hermitian, "spectral_projections needs a Hermitian operator");
        let t: Vec<Vec<C64>> = tracked.iter().map(|v| to_internal(self.layout, self.n(), v)).collect();
        hermitian_band_spectrum(&self.band, &t)
    }

    pub fn eigenvalues_selfadjoint(&self) -> Result<Vec<f64>> {
        self.spectral_projections(&[]).map(|(v, _)| v)
    }

    pub fn replace_band(&mut self, band: BandMatrix) {
        assert_eq!(band.n(), self.band.n());
        self.band = band;
    }

    pub fn map_entries(&self, f: impl Fn(C64) -> C64) -> Self {
        OperatorMatrix { band: self.band.map(f), ..self.clone() }
    }

    /// Row-major "re,im" dump of the block-ordered matrix.
    pub fn export_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim()).map(|j| {
                let z = self.get(i, j);
                format!("{},{}", z.re, z.im)
            }).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    }
}

/// Distorted kinetic coefficients and contour points on the interior grid.
#[derive(Debug, Clone)]
pub struct Kinetic {
    pub diag: Vec<C64>,
    pub off: Vec<C64>,
    /// x + iθf(x)
    pub z: Vec<C64>,
    /// J^{-1/2}
    pub js: Vec<C64>,
}

/// -h² J^{-1/2} D J^{-1} D J^{-1/2} with J = 1 + iθf', staggered differences.
pub fn kinetic(grid: &Grid, h: f64, theta: f64, d: &DistortionSpec) -> Result<Kinetic> {
    let xs = grid.interior();
    let n = xs.len();
    let (f, fp) = if theta == 0.0 { (vec![0.0; n], vec![0.0; n]) } else { distortion_profile(grid, d)? };
    let j: Vec<C64> = fp.iter().map(|&p| C64::new(1.0, theta * p)).collect();
    let js: Vec<C64> = j.iter().map(|z| 1.0 / z.sqrt()).collect();
    // J at half points; the outer halves touch the Dirichlet nodes
    let jm: Vec<C64> = (0..=n)
        .map(|k| {
            let xm = grid.x_min + (k as f64 + 0.5) * grid.dx;
            let p = if theta == 0.0 { 0.0 } else { ramp(xm, d).1 };
            C64::new(1.0, theta * p)
        })
        .collect();
    let c = h * h / (grid.dx * grid.dx);
    let diag = (0..n).map(|i| (1.0 / jm[i] + 1.0 / jm[i + 1]) * js[i] * js[i] * c).collect();
    let off = (0..n.saturating_sub(1)).map(|i| -(1.0 / jm[i + 1]) * js[i] * js[i + 1] * c).collect();
    let z = xs.iter().zip(&f).map(|(&x, &fx)| C64::new(x, theta * fx)).collect();
    Ok(Kinetic { diag, off, z, js })
}

fn eval_all(r: &Rational, z: &[C64]) -> Result<Vec<C64>> {
    z.iter().map(|&p| r.eval(p)).collect()
}

fn provenance(cfg: &ModelConfig, what: &str, theta: f64, eta: f64) -> Provenance {
    Provenance { what: what.into(), h: cfg.h, theta, eta, v1: cfg.v1.kind, v2: cfg.v2.kind }
}

fn scalar_op(grid: &Grid, kin: &Kinetic, v: &[C64], prov: Provenance, hermitian: bool) -> OperatorMatrix {
    let n = grid.n();
    let mut b = BandMatrix::zeros(n, 1, 1);
    for i in 0..n {
        b.set(i, i, kin.diag[i] + v[i]);
        if i + 1 < n {
            b.set(i, i + 1, kin.off[i]);
            b.set(i + 1, i, kin.off[i]);
        }
    }
    OperatorMatrix { band: b, layout: BlockLayout::Scalar, hermitian, grid: grid.clone(), provenance: prov }
}

pub fn assemble_schrodinger(grid: &Grid, v: &PotentialSpec, h: f64) -> Result<OperatorMatrix> {
    let d = DistortionSpec { theta: 0.0, ramp_start: 0.0, ramp_width: 1.0, profile: Default::default() };
    let kin = kinetic(grid, h, 0.0, &d)?;
    let vals = eval_all(&v.rational(), &kin.z)?;
    let prov = Provenance { what: "schrodinger".into(), h, theta: 0.0, eta: 0.0, v1: v.kind, v2: v.kind };
    Ok(scalar_op(grid, &kin, &vals, prov, true))
}

/// Coupling blocks as N×N band matrices (upper-right W, lower-left W*).
struct CouplingBlocks {
    upper: BandMatrix,
    lower: BandMatrix,
}

fn coupling_blocks(grid: &Grid, c: &CouplingSpec, h: f64, kin: &Kinetic) -> Result<CouplingBlocks> {
    let n = grid.n();
    let a = eval_all(&c.a.rational(), &kin.z)?;
    let b = eval_all(&c.b.rational(), &kin.z)?;
    let has_b = !c.b.is_zero();
    let w = if has_b { 1 } else { 0 };
    let mut upper = BandMatrix::zeros(n, w, w);
    let mut lower = BandMatrix::zeros(n, w, w);
    for i in 0..n {
        upper.set(i, i, a[i]);
        lower.set(i, i, a[i]);
    }
    if has_b {
        // b(F)·(-ih) J^{-1/2} D J^{-1/2} and its formal adjoint (-ih) J^{-1/2} D J^{-1/2} b(F)
        let k = C64::new(0.0, -h) / (2.0 * grid.dx);
        for i in 0..n {
            if i + 1 < n {
                upper.add_to(i, i + 1, b[i] * k * kin.js[i] * kin.js[i + 1]);
                lower.add_to(i, i + 1, k * kin.js[i] * kin.js[i + 1] * b[i + 1]);
            }
            if i > 0 {
                upper.add_to(i, i - 1, -b[i] * k * kin.js[i] * kin.js[i - 1]);
                lower.add_to(i, i - 1, -k * kin.js[i] * kin.js[i - 1] * b[i - 1]);
            }
        }
    }
    Ok(CouplingBlocks { upper, lower })
}

pub fn assemble_coupling(grid: &Grid, c: &CouplingSpec, h: f64) -> Result<(OperatorMatrix, OperatorMatrix)> {
    let d = DistortionSpec { theta: 0.0, ramp_start: 0.0, ramp_width: 1.0, profile: Default::default() };
    let kin = kinetic(grid, h, 0.0, &d)?;
    let cb = coupling_blocks(grid, c, h, &kin)?;
    let prov = |what: &str| Provenance { what: what.into(), h, theta: 0.0, eta: 0.0, v1: c.a.kind, v2: c.b.kind };
    let mk = |band: BandMatrix, what: &str| OperatorMatrix { band, layout: BlockLayout::Scalar, hermitian: false, grid: grid.clone(), provenance: prov(what) };
    Ok((mk(cb.upper, "coupling"), mk(cb.lower, "coupling_adjoint")))
}

fn two_channel(grid: &Grid, kin: &Kinetic, v1: &[C64], v2: &[C64], cb: &CouplingBlocks, h: f64, prov: Provenance, hermitian: bool) -> OperatorMatrix {
    let n = grid.n();
    let bw = if cb.upper.kl() > 0 { 3 } else { 2 };
    let mut m = BandMatrix::zeros(2 * n, bw, bw);
    for i in 0..n {
        m.set(2 * i, 2 * i, kin.diag[i] + v1[i]);
        m.set(2 * i + 1, 2 * i + 1, kin.diag[i] + v2[i]);
        if i + 1 < n {
            for ch in 0..2 {
                m.set(2 * i + ch, 2 * (i + 1) + ch, kin.off[i]);
                m.set(2 * (i + 1) + ch, 2 * i + ch, kin.off[i]);
            }
        }
        for j in cb.upper.row_range(i) {
            let u = cb.upper.get(i, j);
            if u != c0() {
                m.add_to(2 * i, 2 * j + 1, u * h);
            }
            let l = cb.lower.get(i, j);
            if l != c0() {
                m.add_to(2 * i + 1, 2 * j, l * h);
            }
        }
    }
    OperatorMatrix { band: m, layout: BlockLayout::TwoChannel, hermitian, grid: grid.clone(), provenance: prov }
}

/// All pieces of the distorted operator.
#[derive(Debug, Clone)]
pub struct Distorted {
    pub h: OperatorMatrix,
    pub p1: OperatorMatrix,
    pub p2: OperatorMatrix,
    pub w: OperatorMatrix,
    pub wstar: OperatorMatrix,
    pub kinetic: Kinetic,
}

pub fn assemble_distorted_on(cfg: &ModelConfig, grid: &Grid, theta: f64) -> Result<Distorted> {
    let kin = kinetic(grid, cfg.h, theta, &cfg.distortion)?;
    let v1 = eval_all(&cfg.v1.rational(), &kin.z)?;
    let v2 = eval_all(&cfg.v2.rational(), &kin.z)?;
    let cb = coupling_blocks(grid, &cfg.coupling, cfg.h, &kin)?;
    let herm = theta == 0.0;
    let what = if herm { "full" } else { "distorted" };
    let h = two_channel(grid, &kin, &v1, &v2, &cb, cfg.h, provenance(cfg, what, theta, 0.0), herm);
    let p1 = scalar_op(grid, &kin, &v1, provenance(cfg, "p1", theta, 0.0), herm);
    let p2 = scalar_op(grid, &kin, &v2, provenance(cfg, "p2", theta, 0.0), herm);
    let mk = |band: BandMatrix, what: &str| OperatorMatrix { band, layout: BlockLayout::Scalar, hermitian: false, grid: grid.clone(), provenance: provenance(cfg, what, theta, 0.0) };
    let w = mk(cb.upper, "coupling");
    let wstar = mk(cb.lower, "coupling_adjoint");
    Ok(Distorted { h, p1, p2, w, wstar, kinetic: kin })
}

pub fn assemble_distorted(cfg: &ModelConfig, theta: f64) -> Result<Distorted> {
    let grid = build_grid(cfg)?;
    assemble_distorted_on(cfg, &grid, theta)
}

pub fn assemble_full_on(cfg: &ModelConfig, grid: &Grid) -> Result<OperatorMatrix> {
    let op = assemble_distorted_on(cfg, grid, 0.0)?.h;
    debug_assert!(op.hermitian_defect() <= 1e-13 * op.norm_max());
    Ok(op)
}

pub fn assemble_full(cfg: &ModelConfig) -> Result<OperatorMatrix> {
    let grid = build_grid(cfg)?;
    assemble_full_on(cfg, &grid)
}

/// Ṽ2 = V2 on {V2 ≥ δ}; below δ a C¹ exponential lift staying above `floor`.
pub fn filled_well_potential(v2: f64, delta: f64, floor: f64) -> f64 {
    if v2 >= delta {
        v2
    } else {
        floor + (delta - floor) * ((v2 - delta) / (delta - floor)).exp()
    }
}

pub fn assemble_filled_well_on(cfg: &ModelConfig, grid: &Grid, delta: f64, floor: f64) -> Result<OperatorMatrix> {
    if !(delta > 0.0 && floor > 0.0 && floor <= delta) {
        return Err(Error::InvalidConfig("filled well needs 0 < floor <= delta".into()));
    }
    let mut op = assemble_full_on(cfg, grid)?;
    let r = cfg.v2.rational();
    let n = grid.n();
    let kin = kinetic(grid, cfg.h, 0.0, &cfg.distortion)?;
    for (i, x) in grid.interior().iter().enumerate() {
        let v = filled_well_potential(r.eval_real(*x), delta, floor);
        op.band.set(2 * i + 1, 2 * i + 1, kin.diag[i] + v);
    }
    debug_assert_eq!(op.n(), n);
    op.provenance.what = "filled_well".into();
    Ok(op)
}

pub fn assemble_filled_well(cfg: &ModelConfig, delta: f64, floor: f64) -> Result<OperatorMatrix> {
    let grid = build_grid(cfg)?;
    assemble_filled_well_on(cfg, &grid, delta, floor)
}

/// ((|x| - 0.8L)/(0.2L))⁴ beyond 0.8L.
pub fn cap_profile(x: f64, half_length: f64) -> f64 {
    let xc = 0.8 * half_length;
    if x.abs() <= xc {
        0.0
    } else {
        ((x.abs() - xc) / (half_length - xc)).powi(4)
    }
}

pub fn assemble_cap_on(cfg: &ModelConfig, grid: &Grid, eta: f64) -> Result<OperatorMatrix> {
    let mut op = assemble_full_on(cfg, grid)?;
    if eta == 0.0 {
        return Ok(op);
    }
    let l = grid.half_length();
    for (i, x) in grid.interior().iter().enumerate() {
        let w = C64::new(0.0, -eta * cap_profile(*x, l));
        for ch in 0..2 {
            op.band.add_to(2 * i + ch, 2 * i + ch, w);
        }
    }
    op.hermitian = false;
    op.provenance.what = "cap".into();
    op.provenance.eta = eta;
    Ok(op)
}

pub fn assemble_cap(cfg: &ModelConfig, eta: f64) -> Result<OperatorMatrix> {
    let grid = build_grid(cfg)?;
    assemble_cap_on(cfg, &grid, eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Channel, CouplingSpec};

    fn pot(kind: PotentialKind, p: Vec<f64>) -> PotentialSpec {
        PotentialSpec::new(kind, p, Channel::V1)
    }

    #[test]
    fn grid_examples() {
        let mut c = ModelConfig::preset();
        c.grid = crate::model::GridRequest { half_length: 12.0, points: Some(1601) };
        let g = build_grid(&c).unwrap();
        assert_eq!(g.dx, 24.0 / 1600.0);
        c.grid.points = Some(1600);
        let g = build_grid(&c).unwrap();
        assert!((g.dx - 0.015009).abs() < 1e-5);
        // p_max = sqrt(0.3 + 1 + 1) ≈ 1.517 here, within the ≲ 1.6 budget
        assert!(max_spacing(&c) * 10.0 / c.h > 1.0 / 1.6);
        c.h = 0.05;
        c.grid.points = Some(100);
        assert!(matches!(build_grid(&c), Err(Error::ResolutionError { .. })));
    }

    #[test]
    fn particle_in_box() {
        let g = Grid::new(0.0, std::f64::consts::PI, 801);
        let op = assemble_schrodinger(&g, &pot(PotentialKind::Zero, vec![]), 0.25).unwrap();
        let ev = op.eigenvalues_selfadjoint().unwrap();
        assert!((ev[0] - 0.0625).abs() < 0.0625 * g.dx * g.dx);
    }

    #[test]
    fn harmonic_ladder() {
        let g = Grid::symmetric(8.0, 3201);
        let op = assemble_schrodinger(&g, &pot(PotentialKind::HarmonicWell, vec![]), 0.25).unwrap();
        let ev = op.eigenvalues_selfadjoint().unwrap();
        assert!((ev[0] - 0.25).abs() < 1e-4);
        assert!((ev[3] - 1.75).abs() < 1e-3);
    }

    #[test]
    fn coupling_examples() {
        let g = Grid::symmetric(5.0, 101);
        let one = CouplingSpec { a: pot(PotentialKind::Constant, vec![1.0]), b: pot(PotentialKind::Zero, vec![]) };
        let (w, ws) = assemble_coupling(&g, &one, 0.3).unwrap();
        assert!(w.to_dense().sub(&CMatrix::identity(g.n())).norm_max() == 0.0);
        assert!(ws.to_dense().sub(&CMatrix::identity(g.n())).norm_max() == 0.0);
        let deriv = CouplingSpec { a: pot(PotentialKind::Zero, vec![]), b: pot(PotentialKind::Constant, vec![1.0]) };
        let (w, ws) = assemble_coupling(&g, &deriv, 0.3).unwrap();
        let u = vec![C64::new(1.0, 0.0); g.n()];
        let wu = w.matvec(&u);
        assert!(wu[1..g.n() - 1].iter().all(|z| z.norm() == 0.0));
        assert!(w.to_dense().adjoint().sub(&ws.to_dense()).norm_max() < 1e-15);
        let lor = CouplingSpec { a: pot(PotentialKind::Lorentzian, vec![1.0]), b: pot(PotentialKind::Zero, vec![]) };
        let (w, _) = assemble_coupling(&g, &lor, 0.3).unwrap();
        assert_eq!(w.norm_max(), 1.0);
    }

    #[test]
    fn full_operator_structure() {
        let mut c = ModelConfig::preset();
        c.grid.half_length = 8.0;
        let h = assemble_full(&c).unwrap();
        assert!(h.hermitian_defect() < 1e-13 * h.norm_max());
        let n = h.n();
        // doubling h doubles the coupling blocks exactly (same grid)
        let g = h.grid.clone();
        let mut c2 = c.clone();
        c2.h = 2.0 * c.h;
        let h2 = assemble_full_on(&c2, &g).unwrap();
        for i in 0..n {
            assert_eq!(h2.get(i, n + i), h.get(i, n + i) * 2.0);
            assert_eq!(h2.get(n + i, i), h.get(n + i, i) * 2.0);
        }
        // decoupled: spectrum is the union of the channel spectra
        c.coupling = CouplingSpec::zero();
        let h0 = assemble_full_on(&c, &g).unwrap();
        let d = assemble_distorted_on(&c, &g, 0.0).unwrap();
        let mut union: Vec<f64> = d.p1.eigenvalues_selfadjoint().unwrap();
        union.extend(d.p2.eigenvalues_selfadjoint().unwrap());
        union.sort_by(f64::total_cmp);
        let ev = h0.eigenvalues_selfadjoint().unwrap();
        for (a, b) in ev.iter().zip(&union) {
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn theta_zero_is_bitwise_full() {
        let c = ModelConfig::preset();
        let g = Grid::symmetric(8.0, 801);
        let a = assemble_full_on(&c, &g).unwrap();
        let b = assemble_distorted_on(&c, &g, 0.0).unwrap().h;
        assert_eq!(a.band(), b.band());
        let d = assemble_distorted_on(&c, &g, 0.15).unwrap();
        assert!(d.h.symmetric_defect() < 1e-14 * d.h.norm_max());
    }

    #[test]
    fn ramp_examples() {
        let d = DistortionSpec { theta: 0.15, ramp_start: 2.0, ramp_width: 2.0, profile: Default::default() };
        assert_eq!(ramp(1.0, &d), (0.0, 0.0));
        assert_eq!(ramp(6.0, &d), (6.0, 1.0));
        let (f, fp) = ramp(3.0, &d);
        assert!(f > 0.0 && f < 3.0);
        // quintic smoothstep ramp: f'(3) = 1/2 + 3·(15/8)/2
        assert!((fp - 3.3125).abs() < 1e-14 && fp > 0.0);
        for x0 in [2.0f64, 4.0] {
            let (a, b) = (ramp(x0 - 1e-13, &d).0, ramp(x0 + 1e-13, &d).0);
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(ramp(-3.0, &d).0, -ramp(3.0, &d).0);
        let g = Grid::symmetric(3.5, 101);
        assert!(matches!(distortion_profile(&g, &d), Err(Error::RampOutOfDomain { .. })));
    }

    #[test]
    fn filled_well_and_cap() {
        let mut c = ModelConfig::preset();
        c.grid.half_length = 8.0;
        let g = Grid::symmetric(8.0, 801);
        let full = assemble_full_on(&c, &g).unwrap();
        let fw = assemble_filled_well_on(&c, &g, 0.2, 0.1).unwrap();
        let n = g.n();
        let kin = kinetic(&g, c.h, 0.0, &c.distortion).unwrap();
        let r = c.v2.rational();
        for (i, x) in g.interior().iter().enumerate() {
            let v = fw.get(n + i, n + i) - kin.diag[i];
            assert!(v.re >= 0.1);
            if r.eval_real(*x) >= 0.2 {
                assert_eq!(fw.get(n + i, n + i), full.get(n + i, n + i));
            }
        }
        assert!(fw.hermitian_defect() == 0.0);
        let cap0 = assemble_cap_on(&c, &g, 0.0).unwrap();
        assert_eq!(cap0.band(), full.band());
        assert_eq!(cap_profile(0.0, 8.0), 0.0);
        assert_eq!(cap_profile(8.0, 8.0), 1.0);
    }
}
