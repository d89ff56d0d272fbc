//! Shared fixtures for the kernel benchmarks.
use predissonance::discretize::{build_grid, Grid};
use predissonance::resonance::{well_states_on, WellBasis};
use predissonance::ModelConfig;

pub struct Fixture {
    pub cfg: ModelConfig,
    pub grid: Grid,
    pub basis: WellBasis,
}

/// Preset problem at the given h on the automatically chosen grid.
pub fn fixture(h: f64) -> Fixture {
    let cfg = ModelConfig::preset().with_h(h);
    let grid = build_grid(&cfg).expect("preset grid");
    let basis = well_states_on(&cfg, &grid).expect("preset well states");
    Fixture { cfg, grid, basis }
}
