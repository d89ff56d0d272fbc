use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Trapezoidal rule on a positively oriented circle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContourRule {
    pub center: C64,
    pub radius: f64,
    pub nodes: Vec<C64>,
    pub weights: Vec<C64>,
}

impl ContourRule {
    pub fn circle(center: C64, radius: f64, n: usize) -> Self {
        assert!(n >= 8 && n.is_multiple_of(2), "contour needs an even node count >= 8");
        assert!(radius > 0.0);
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for k in 0..n {
            let e = C64::from_polar(radius, 2.0 * PI * k as f64 / n as f64);
            nodes.push(center + e);
            weights.push(e * C64::new(0.0, 2.0 * PI / n as f64));
        }
        ContourRule { center, radius, nodes, weights }
    }

    /// Approximates the contour integral of f.
    pub fn integrate(&self, mut f: impl FnMut(C64) -> C64) -> C64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| f(z) * w).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

pub fn contour_quadrature(center: C64, radius: f64, n: usize) -> ContourRule {
    ContourRule::circle(center, radius, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactness_examples() {
        let c = C64::new(0.3, -0.2);
        let r = contour_quadrature(c, 0.5, 64);
        let two_pi_i = C64::new(0.0, 2.0 * PI);
        assert!((r.integrate(|z| 1.0 / (z - c)) - two_pi_i).norm() < 1e-12);
        assert!(r.integrate(|z| z - c).norm() < 1e-12);
        assert!(r.integrate(|z| 1.0 / ((z - c) * (z - c))).norm() < 1e-12);
        let s: C64 = r.weights.iter().zip(&r.nodes).map(|(w, z)| w / (z - c)).sum();
        assert!((s - two_pi_i).norm() < 1e-12);
    }

    #[test]
    fn geometric_convergence() {
        // pole outside the disc at distance 1.5 r from the centre
        let c = C64::new(0.0, 0.0);
        let p = C64::new(1.5, 0.0);
        let f = |z: C64| 1.0 / ((z - 0.1) * (z - p));
        let exact = C64::new(0.0, 2.0 * PI) / (C64::new(0.1, 0.0) - p);
        let e16 = (contour_quadrature(c, 1.0, 16).integrate(f) - exact).norm();
        let e32 = (contour_quadrature(c, 1.0, 32).integrate(f) - exact).norm();
        assert!(e32 * 10.0 < e16);
    }
}
