//! Continuous problem description and the standing-assumption checks.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::discretize::{build_grid, Grid};
use crate::error::{Error, Result};

pub const CONFIG_SCHEMA: &str = "predissonance-config/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// s·x², params [s] (default s = 1)
    HarmonicWell,
    /// -Γ + α/(1+x²), params [Γ, α]
    LorentzSea,
    /// x² - c, params [c]
    ShiftedQuadratic,
    /// num(x)/den(x), params = numerator coefficients, `denominator` ascending
    CustomRational,
    /// A/(1+x²), params [A] (default 1)
    Lorentzian,
    /// params [c]
    Constant,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    V1,
    V2,
    #[default]
    Coupling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub denominator: Vec<f64>,
    #[serde(default)]
    pub role: Channel,
}

/// Polynomial ratio with ascending coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Rational {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

fn horner(c: &[f64], z: C64) -> C64 {
    c.iter().rev().fold(C64::new(0.0, 0.0), |acc, &k| acc * z + k)
}

fn horner_real(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

fn poly_deriv(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, &v)| k as f64 * v).collect()
}

fn degree(c: &[f64]) -> Option<usize> {
    c.iter().rposition(|&v| v != 0.0)
}

impl Rational {
    pub fn eval(&self, z: C64) -> Result<C64> {
        let d = horner(&self.den, z);
        let scale = self.den.iter().enumerate().map(|(k, c)| c.abs() * z.norm().powi(k as i32)).sum::<f64>().max(1.0);
        if d.norm() < 1e-14 * scale {
            return Err(Error::PoleAtPoint(z));
        }
        Ok(horner(&self.num, z) / d)
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        horner_real(&self.num, x) / horner_real(&self.den, x)
    }

    pub fn deriv_real(&self, x: f64) -> f64 {
        let (n, d) = (horner_real(&self.num, x), horner_real(&self.den, x));
        let (dn, dd) = (horner_real(&poly_deriv(&self.num), x), horner_real(&poly_deriv(&self.den), x));
        (dn * d - n * dd) / (d * d)
    }

    /// lim_{|x|→∞}, `None` when unbounded.
    pub fn limit_at_infinity(&self) -> Option<f64> {
        match (degree(&self.num), degree(&self.den)) {
            (None, _) => Some(0.0),
            (Some(a), Some(b)) if a < b => Some(0.0),
            (Some(a), Some(b)) if a == b => Some(self.num[a] / self.den[b]),
            _ => None,
        }
    }
}

impl PotentialSpec {
    pub fn new(kind: PotentialKind, params: Vec<f64>, role: Channel) -> Self {
        PotentialSpec { kind, params, denominator: Vec::new(), role }
    }

    fn param(&self, i: usize, default: f64) -> f64 {
        self.params.get(i).copied().unwrap_or(default)
    }

    pub fn rational(&self) -> Rational {
        use PotentialKind::*;
        let (num, den) = match self.kind {
            HarmonicWell => (vec![0.0, 0.0, self.param(0, 1.0)], vec![1.0]),
            LorentzSea => {
                let (g, a) = (self.param(0, 1.0), self.param(1, 2.0));
                (vec![a - g, 0.0, -g], vec![1.0, 0.0, 1.0])
            }
            ShiftedQuadratic => (vec![-self.param(0, 0.0), 0.0, 1.0], vec![1.0]),
            CustomRational => {
                let den = if self.denominator.is_empty() { vec![1.0] } else { self.denominator.clone() };
                (self.params.clone(), den)
            }
            Lorentzian => (vec![self.param(0, 1.0)], vec![1.0, 0.0, 1.0]),
            Constant => (vec![self.param(0, 0.0)], vec![1.0]),
            Zero => (vec![0.0], vec![1.0]),
        };
        Rational { num, den }
    }

    pub fn is_zero(&self) -> bool {
        self.rational().num.iter().all(|&c| c == 0.0)
    }
}

/// Exact analytic continuation of a rational preset.
pub fn eval_potential(spec: &PotentialSpec, z: C64) -> Result<C64> {
    spec.rational().eval(z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub a: PotentialSpec,
    pub b: PotentialSpec,
}

impl CouplingSpec {
    pub fn zero() -> Self {
        let z = PotentialSpec::new(PotentialKind::Zero, vec![], Channel::Coupling);
        CouplingSpec { a: z.clone(), b: z }
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RampProfile {
    /// f(x) = x·S((|x|-R)/w) with S the quintic smoothstep
    #[default]
    QuinticSmoothstep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub theta: f64,
    pub ramp_start: f64,
    pub ramp_width: f64,
    #[serde(default)]
    pub profile: RampProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub window_center: f64,
    pub window_half_width: f64,
    /// Margin a; `None` selects a = dist(I, nearest outside P1 eigenvalue)/3.
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default)]
    pub nu: u32,
    /// Window and margin given in units of h.
    #[serde(default)]
    pub scale_with_h: bool,
}

impl CutoffSpec {
    pub fn window(&self, h: f64) -> (f64, f64) {
        let s = if self.scale_with_h { h } else { 1.0 };
        (s * (self.window_center - self.window_half_width), s * (self.window_center + self.window_half_width))
    }

    pub fn fixed_margin(&self, h: f64) -> Option<f64> {
        let s = if self.scale_with_h { h } else { 1.0 };
        self.margin.map(|a| a * s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRequest {
    pub half_length: f64,
    /// `None` picks the smallest odd N meeting the resolution bound.
    #[serde(default)]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapSpec {
    pub eta: f64,
    pub dt: f64,
    /// Domain half-length used for the long-time CAP run.
    pub half_length: f64,
    pub h: f64,
}

/// Settings of the sweep and acceptance runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub hs: Vec<f64>,
    /// Second window (units of h) for the two-state checks.
    pub m2_window: (f64, f64),
    pub m2_omega_depth: f64,
    pub cap: CapSpec,
    pub cross_check_h: f64,
    pub time_points: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            hs: vec![0.35, 0.3, 0.25, 0.2],
            m2_window: (0.8, 3.2),
            m2_omega_depth: 1.0,
            cap: CapSpec { eta: 4.5, dt: 0.01, half_length: 30.0, h: 0.25 },
            cross_check_h: 0.25,
            time_points: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub schema: String,
    pub h: f64,
    pub v1: PotentialSpec,
    pub v2: PotentialSpec,
    pub coupling: CouplingSpec,
    pub distortion: DistortionSpec,
    pub cutoff: CutoffSpec,
    pub grid: GridRequest,
    /// Depth ε1 of Ω(h) in units of a(h).
    pub omega_depth: f64,
    #[serde(default)]
    pub experiment: ExperimentSpec,
}

impl ModelConfig {
    /// The 1D predissociation example: V1 = x², V2 = -1 + 2/(1+x²), a(x) = 1/(1+x²).
    pub fn preset() -> Self {
        ModelConfig {
            schema: CONFIG_SCHEMA.into(),
            h: 0.25,
            v1: PotentialSpec::new(PotentialKind::HarmonicWell, vec![1.0], Channel::V1),
            v2: PotentialSpec::new(PotentialKind::LorentzSea, vec![1.0, 2.0], Channel::V2),
            coupling: CouplingSpec {
                a: PotentialSpec::new(PotentialKind::Lorentzian, vec![1.0], Channel::Coupling),
                b: PotentialSpec::new(PotentialKind::Zero, vec![], Channel::Coupling),
            },
            distortion: DistortionSpec { theta: 0.15, ramp_start: 2.0, ramp_width: 2.0, profile: RampProfile::QuinticSmoothstep },
            cutoff: CutoffSpec { window_center: 1.0, window_half_width: 0.2, margin: None, nu: 0, scale_with_h: true },
            grid: GridRequest { half_length: 16.0, points: None },
            omega_depth: 0.5,
            experiment: ExperimentSpec::default(),
        }
    }

    pub fn preset_by_name(name: &str) -> Option<Self> {
        match name {
            "predissociation_1d" => Some(Self::preset()),
            "decoupled_1d" => {
                let mut c = Self::preset();
                c.coupling = CouplingSpec::zero();
                Some(c)
            }
            "predissociation_1d_two_states" => {
                let mut c = Self::preset();
                c.cutoff.window_center = 2.0;
                c.cutoff.window_half_width = 1.2;
                c.omega_depth = 1.0;
                Some(c)
            }
            _ => None,
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.schema != CONFIG_SCHEMA {
            return bad(&format!("schema must be \"{CONFIG_SCHEMA}\", got \"{}\"", self.schema));
        }
        if !(self.h > 0.0 && self.h < 1.0) {
            return bad("h must lie in (0, 1)");
        }
        if self.cutoff.window_half_width < 0.0 {
            return bad("window_half_width must be >= 0");
        }
        if self.cutoff.margin.is_some_and(|a| a <= 0.0) {
            return bad("margin must be > 0");
        }
        if self.distortion.theta.abs() > 0.3 {
            return bad("|theta| must be <= 0.3");
        }
        if self.distortion.ramp_start < 0.0 || self.distortion.ramp_width <= 0.0 {
            return bad("ramp_start >= 0 and ramp_width > 0 required");
        }
        if self.grid.half_length <= 0.0 {
            return bad("grid half_length must be > 0");
        }
        if self.grid.points.is_some_and(|n| n < 16) {
            return bad("grid needs at least 16 points");
        }
        if self.omega_depth <= 0.0 {
            return bad("omega_depth must be > 0");
        }
        Ok(())
    }

    pub fn window(&self) -> (f64, f64) {
        self.cutoff.window(self.h)
    }

    pub fn with_h(&self, h: f64) -> Self {
        let mut c = self.clone();
        c.h = h;
        c
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let d = Sha256::digest(canon.as_bytes());
        d.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Parses a config document. A `"preset"` key starts from that preset and
    /// overlays the remaining keys.
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Self::from_value(v, &[])
    }

    /// Like `from_json` with dotted `key=value` overrides applied; unknown keys are rejected.
    pub fn from_value(mut v: Value, overrides: &[(String, String)]) -> Result<Self> {
        if let Some(name) = v.get("preset").and_then(Value::as_str).map(str::to_owned) {
            let base = Self::preset_by_name(&name).ok_or_else(|| Error::InvalidConfig(format!("unknown preset \"{name}\"")))?;
            let mut merged = serde_json::to_value(base).expect("config serializes");
            if let Value::Object(map) = &mut v {
                map.remove("preset");
            }
            merge(&mut merged, v);
            v = merged;
        } else if let Value::Object(map) = &mut v {
            // fill defaults of optional sections so overrides can address them
            if !map.contains_key("experiment") {
                map.insert("experiment".into(), serde_json::to_value(ExperimentSpec::default()).expect("serializes"));
            }
        }
        for (k, val) in overrides {
            apply_override(&mut v, k, val)?;
        }
        let cfg: ModelConfig = serde_json::from_value(v).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Sets a dotted key; the key must already exist in the document.
pub fn apply_override(doc: &mut Value, key: &str, raw: &str) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for p in &parts {
        cur = match cur {
            Value::Object(m) => m.get_mut(*p),
            Value::Array(a) => p.parse::<usize>().ok().and_then(move |i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::InvalidConfig(format!("unknown override key \"{key}\"")))?;
    }
    *cur = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}

/// Numerical check of the standing assumptions on a 4x refined grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub u_bounded: bool,
    pub u_diameter: f64,
    pub u_margin: f64,
    pub liminf_v1: f64,
    pub v2_limit: f64,
    pub v2_positive_on_u: bool,
    pub v2_margin_on_u: f64,
    pub virial_margin: Option<f64>,
    pub virial_argmin: Option<f64>,
    pub gap_ok: Option<bool>,
    pub pass: bool,
}

fn refined_points(grid: &Grid) -> Vec<f64> {
    let n = (grid.n_points - 1) * 4 + 1;
    let dx = (grid.x_max - grid.x_min) / (n - 1) as f64;
    (0..n).map(|i| grid.x_min + i as f64 * dx).collect()
}

fn validation_grid(cfg: &ModelConfig) -> Grid {
    build_grid(cfg).unwrap_or_else(|_| {
        let n = cfg.grid.points.unwrap_or(1601);
        Grid::symmetric(cfg.grid.half_length, n)
    })
}

pub fn validate_assumptions(cfg: &ModelConfig) -> AssumptionReport {
    let grid = validation_grid(cfg);
    let xs = refined_points(&grid);
    let v1 = cfg.v1.rational();
    let v2 = cfg.v2.rational();
    let l = cfg.grid.half_length;

    let mut u: Vec<f64> = xs.iter().copied().filter(|&x| v1.eval_real(x) <= 0.0).collect();
    if u.is_empty() {
        let xm = xs.iter().copied().min_by(|a, b| v1.eval_real(*a).total_cmp(&v1.eval_real(*b))).unwrap_or(0.0);
        u.push(xm);
    }
    let umin = u.iter().copied().fold(f64::INFINITY, f64::min);
    let umax = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let reach = umin.abs().max(umax.abs());
    let inner = (0.8 * l).min(cfg.distortion.ramp_start);
    let u_margin = if reach > 0.0 || inner > 0.0 { inner - reach } else { -1.0 };
    let u_bounded = u_margin > 0.0 && umax - umin < 2.0 * l * 0.8;

    let liminf_v1 = xs.iter().filter(|x| x.abs() >= 0.8 * l).map(|&x| v1.eval_real(x)).fold(f64::INFINITY, f64::min);
    let v2_limit = v2.limit_at_infinity().unwrap_or_else(|| 0.5 * (v2.eval_real(l) + v2.eval_real(-l)));
    let v2_margin_on_u = u.iter().map(|&x| v2.eval_real(x)).fold(f64::INFINITY, f64::min);
    let v2_positive_on_u = v2_margin_on_u > 0.0;

    let (virial_margin, virial_argmin) = match virial_on(&v2, &xs) {
        Ok((m, x)) => (Some(m), Some(x)),
        Err(_) => (None, None),
    };
    let pass = u_bounded
        && liminf_v1 > 0.0
        && v2_limit < 0.0
        && v2_positive_on_u
        && virial_margin.is_some_and(|m| m > 0.0);
    AssumptionReport {
        u_bounded,
        u_diameter: umax - umin,
        u_margin,
        liminf_v1,
        v2_limit,
        v2_positive_on_u,
        v2_margin_on_u,
        virial_margin,
        virial_argmin,
        gap_ok: None,
        pass,
    }
}

pub fn virial_margin(cfg: &ModelConfig) -> Result<f64> {
    let grid = validation_grid(cfg);
    virial_on(&cfg.v2.rational(), &refined_points(&grid)).map(|(m, _)| m)
}

fn virial_fn(v2: &Rational, x: f64) -> f64 {
    -(2.0 * v2.eval_real(x) + x * v2.deriv_real(x))
}

fn bisect_root(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa0 = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) <= 0.0) == (fa0 <= 0.0) {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-15 * (1.0 + m.abs()) {
            break;
        }
    }
    0.5 * (a + b)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a < 1e-12 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (f(x), x)
}

/// min of -(2V2 + xV2') over the sea, with sea edges located by bisection
/// and the minimum polished by golden section.
fn virial_on(v2: &Rational, xs: &[f64]) -> Result<(f64, f64)> {
    let in_sea: Vec<bool> = xs.iter().map(|&x| v2.eval_real(x) <= 0.0).collect();
    if !in_sea.iter().any(|&s| s) {
        return Err(Error::EmptySea);
    }
    let mut best = (f64::INFINITY, 0.0);
    let consider = |m: f64, x: f64, best: &mut (f64, f64)| {
        if m < best.0 {
            *best = (m, x);
        }
    };
    let n = xs.len();
    let mut i = 0;
    while i < n {
        if !in_sea[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && in_sea[i] {
            i += 1;
        }
        let end = i - 1;
        let lo = if start > 0 { bisect_root(|x| v2.eval_real(x), xs[start - 1], xs[start]) } else { xs[0] };
        let hi = if end + 1 < n { bisect_root(|x| v2.eval_real(x), xs[end], xs[end + 1]) } else { xs[n - 1] };
        consider(virial_fn(v2, lo), lo, &mut best);
        consider(virial_fn(v2, hi), hi, &mut best);
        let mut k_best = start;
        for k in start..=end {
            if virial_fn(v2, xs[k]) < virial_fn(v2, xs[k_best]) {
                k_best = k;
            }
        }
        let a = if k_best > start { xs[k_best - 1] } else { lo };
        let b = if k_best < end { xs[k_best + 1] } else { hi };
        let (m, x) = golden_min(|x| virial_fn(v2, x), a.max(lo), b.min(hi));
        consider(m, x, &mut best);
        consider(virial_fn(v2, xs[k_best]), xs[k_best], &mut best);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sea(g: f64, a: f64) -> PotentialSpec {
        PotentialSpec::new(PotentialKind::LorentzSea, vec![g, a], Channel::V2)
    }

    #[test]
    fn eval_examples() {
        let v = eval_potential(&sea(1.0, 2.0), C64::new(0.0, 0.0)).unwrap();
        assert_eq!(v, C64::new(1.0, 0.0));
        let w = PotentialSpec::new(PotentialKind::HarmonicWell, vec![], Channel::V1);
        assert_eq!(eval_potential(&w, C64::new(0.0, 0.0)).unwrap(), C64::new(0.0, 0.0));
        let z = eval_potential(&sea(1.0, 2.0), C64::new(0.0, 0.3)).unwrap();
        assert!((z - C64::new(-1.0 + 2.0 / 0.91, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn real_axis_has_exact_zero_imaginary_part() {
        for spec in [sea(1.0, 2.0), PotentialSpec::new(PotentialKind::HarmonicWell, vec![], Channel::V1)] {
            let r = spec.rational();
            for k in -50..=50 {
                let x = k as f64 * 0.173;
                let z = eval_potential(&spec, C64::new(x, 0.0)).unwrap();
                assert_eq!(z.im, 0.0);
                assert!((z.re - r.eval_real(x)).abs() <= 1e-15 * (1.0 + z.re.abs()));
            }
        }
    }

    #[test]
    fn pole_detected() {
        let l = PotentialSpec::new(PotentialKind::Lorentzian, vec![1.0], Channel::Coupling);
        assert!(matches!(eval_potential(&l, C64::new(0.0, 1.0)), Err(Error::PoleAtPoint(_))));
    }

    #[test]
    fn preset_passes_with_unit_virial_margin() {
        let r = validate_assumptions(&ModelConfig::preset());
        assert!(r.pass, "{r:?}");
        assert!((r.virial_margin.unwrap() - 1.0).abs() < 1e-9);
        assert!((r.virial_argmin.unwrap().abs() - 1.0).abs() < 1e-6);
        assert!((r.v2_limit + 1.0).abs() < 1e-15);
    }

    #[test]
    fn shallow_sea_fails_positivity_on_well() {
        let mut c = ModelConfig::preset();
        c.v2 = sea(1.0, 0.5);
        let r = validate_assumptions(&c);
        assert!(!r.v2_positive_on_u);
        assert!((r.v2_margin_on_u + 0.5).abs() < 1e-12);
        assert!(!r.pass);
    }

    #[test]
    fn wide_well_on_small_domain_fails_boundedness() {
        let mut c = ModelConfig::preset();
        c.v1 = PotentialSpec::new(PotentialKind::ShiftedQuadratic, vec![5.0], Channel::V1);
        c.grid = GridRequest { half_length: 3.0, points: Some(601) };
        let r = validate_assumptions(&c);
        assert!(!r.u_bounded);
        assert!(!r.pass);
    }

    #[test]
    fn virial_examples() {
        let mut c = ModelConfig::preset();
        c.v2 = sea(1.0, 0.0);
        assert!((virial_margin(&c).unwrap() - 2.0).abs() < 1e-12);
        // -1 + 0.9/(1+(x-3)²): bump in the sea around x = 3
        c.v2 = PotentialSpec {
            kind: PotentialKind::CustomRational,
            params: vec![-10.0 + 0.9, 6.0, -1.0],
            denominator: vec![10.0, -6.0, 1.0],
            role: Channel::V2,
        };
        assert!(virial_margin(&c).unwrap() < 0.0);
        c.v2 = PotentialSpec::new(PotentialKind::Constant, vec![1.0], Channel::V2);
        assert_eq!(virial_margin(&c), Err(Error::EmptySea));
    }

    #[test]
    fn virial_margin_stable_under_refinement() {
        let mut c = ModelConfig::preset();
        c.grid.points = Some(3201);
        let m1 = virial_margin(&c).unwrap();
        c.grid.points = Some(6401);
        let m2 = virial_margin(&c).unwrap();
        assert!((m1 - m2).abs() < 1e-6);
    }

    #[test]
    fn json_roundtrip_and_overrides() {
        let c = ModelConfig::preset();
        let back = ModelConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, back);
        let v: Value = serde_json::from_str(r#"{"preset":"predissociation_1d"}"#).unwrap();
        let o = ModelConfig::from_value(v.clone(), &[("h".into(), "0.3".into())]).unwrap();
        assert_eq!(o.h, 0.3);
        let mut edited = c.clone();
        edited.h = 0.3;
        assert_eq!(o.hash(), edited.hash());
        assert!(ModelConfig::from_value(v, &[("hh".into(), "0.3".into())]).is_err());
    }
}
