use num_complex::Complex64 as C64;
use predissonance::discretize::build_grid;
use predissonance::evolve::{
    alpha_projection, cutoff_for, residues_with, survival_box_on, survival_cap_on, linear_times, StateVector,
};
use predissonance::linalg::{BandMatrix, CMatrix};
use predissonance::resonance::{
    count_eigenvalues_in_box, resonances_feshbach_on, well_states_on, Feshbach, Resonance,
};
use predissonance::{Error, ModelConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> BandMatrix {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut a = BandMatrix::zeros(n, kl, ku);
    for i in 0..n {
        for j in a.row_range(i) {
            let v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            a.set(i, j, v);
        }
        // keep it comfortably nonsingular
        a.add_to(i, i, C64::new(4.0 + (kl + ku) as f64, 0.0));
    }
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn band_lu_matches_dense(n in 2usize..40, kl in 0usize..4, ku in 0usize..4, seed in any::<u64>()) {
        let a = random_band(n, kl, ku, seed);
        let dense = CMatrix::from_fn(n, n, |i, j| a.get(i, j));
        let b: Vec<C64> = (0..n).map(|i| C64::new(i as f64 * 0.3 - 1.0, 0.5)).collect();
        let xb = a.lu().solve(&b).unwrap();
        let xd = dense.solve(&b).unwrap();
        for (p, q) in xb.iter().zip(&xd) {
            prop_assert!((p - q).norm() < 1e-10);
        }
        let (lb, ld) = (a.lu().log_det(), dense.lu().log_det());
        prop_assert!((lb.re - ld.re).abs() < 1e-9);
        prop_assert!((lb - ld).im.sin().abs() < 1e-9);
    }
}

fn small() -> ModelConfig {
    let mut cfg = ModelConfig::preset();
    cfg.h = 0.35;
    cfg.grid.points = Some(1501);
    cfg
}

#[test]
fn box_survival_time_reversal() {
    let cfg = small();
    let grid = build_grid(&cfg).unwrap();
    let basis = well_states_on(&cfg, &grid).unwrap();
    let phi = StateVector::well_state(&basis, 0);
    let g = cutoff_for(&basis, 2);
    let ts = linear_times(0.0, 3.0, 7);
    let neg: Vec<f64> = ts.iter().map(|t| -t).collect();
    let fwd = survival_box_on(&cfg, &grid, &basis, &phi, &g, &ts).unwrap();
    let bwd = survival_box_on(&cfg, &grid, &basis, &phi, &g, &neg).unwrap();
    for (p, q) in fwd.amplitudes.iter().zip(&bwd.amplitudes) {
        assert!((p - q.conj()).norm() < 1e-12);
    }
    assert!(fwd.amplitudes.iter().all(|a| a.norm() <= 1.0 + 1e-12));
}

#[test]
fn decoupled_cap_is_pure_phase() {
    let mut cfg = small();
    cfg.coupling = predissonance::model::CouplingSpec::zero();
    let grid = build_grid(&cfg).unwrap();
    let basis = well_states_on(&cfg, &grid).unwrap();
    let phi = StateVector::well_state(&basis, 0);
    let g = cutoff_for(&basis, 0);
    let lam = basis.lambdas()[0];
    let ts = linear_times(0.0, 2.0, 5);
    let run = survival_cap_on(&cfg, &grid, &phi, &g, &ts, 0.5, 0.002, lam).unwrap();
    for (t, a) in run.series.times.iter().zip(&run.series.amplitudes) {
        let exact = C64::from_polar(1.0, -t * lam);
        assert!((a - exact).norm() < 1e-6, "t={t}: {a} vs {exact}");
    }
}

#[test]
fn residues_stable_under_radius_change() {
    let cfg = small();
    let grid = build_grid(&cfg).unwrap();
    let basis = well_states_on(&cfg, &grid).unwrap();
    let theta = cfg.distortion.theta;
    let res = resonances_feshbach_on(&cfg, &grid, &basis, theta).unwrap();
    let fe = Feshbach::new(&cfg, &grid, &basis, theta).unwrap();
    let phi = StateVector::well_state(&basis, 0);
    let alpha = alpha_projection(&phi, &basis);
    let full = residues_with(&fe, &basis, &res, &alpha, 1.0).unwrap();
    let half = residues_with(&fe, &basis, &res, &alpha, 0.5).unwrap();
    for (p, q) in full.b.iter().zip(&half.b) {
        assert!((p - q).norm() < 1e-8);
    }
    assert!((full.b[0] - 1.0).norm() < 0.3);
}

#[test]
fn coincident_resonances_overlap() {
    let cfg = small();
    let grid = build_grid(&cfg).unwrap();
    let basis = well_states_on(&cfg, &grid).unwrap();
    let theta = cfg.distortion.theta;
    let res = resonances_feshbach_on(&cfg, &grid, &basis, theta).unwrap();
    let fe = Feshbach::new(&cfg, &grid, &basis, theta).unwrap();
    let twin: Vec<Resonance> = vec![res[0].clone(), res[0].clone()];
    let alpha = vec![C64::new(1.0, 0.0); basis.m()];
    match residues_with(&fe, &basis, &twin, &alpha, 1.0) {
        Err(Error::DiscOverlap) => {}
        other => panic!("expected DiscOverlap, got {other:?}"),
    }
}

#[test]
fn winding_count_matches_feshbach_roots() {
    let cfg = small();
    let grid = build_grid(&cfg).unwrap();
    let basis = well_states_on(&cfg, &grid).unwrap();
    let op = predissonance::discretize::assemble_distorted_on(&cfg, &grid, cfg.distortion.theta).unwrap().h;
    let (lo, hi) = basis.window;
    let a = basis.a;
    let n = count_eigenvalues_in_box(&op, (lo - a, hi + a), (-a, a / 4.0)).unwrap();
    let res = resonances_feshbach_on(&cfg, &grid, &basis, cfg.distortion.theta).unwrap();
    assert_eq!(n, res.len());
    assert_eq!(n, basis.m());
}
