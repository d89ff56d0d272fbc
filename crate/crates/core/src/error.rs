use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("potential has a pole at z = {0}")]
    PoleAtPoint(Complex64),
    #[error("sea {{V2 <= 0}} does not meet the grid")]
    EmptySea,
    #[error("grid too coarse: requested N = {requested}, need N >= {required}")]
    ResolutionError { requested: usize, required: usize },
    #[error("distortion ramp ends at {ramp_end} beyond x_max = {x_max}")]
    RampOutOfDomain { ramp_end: f64, x_max: f64 },
    #[error("{0} did not converge")]
    ConvergenceFailure(String),
    #[error("singular matrix (pivot {pivot:e} at row {row})")]
    SingularMatrix { row: usize, pivot: f64 },
    #[error("no P1 eigenvalue in the window [{lo}, {hi}]")]
    EmptyWindow { lo: f64, hi: f64 },
    #[error("P1 eigenvalue {eigenvalue} lies in the forbidden gap band")]
    GapViolation { eigenvalue: f64 },
    #[error("found {found} resonances in Omega, expected {expected}")]
    CountMismatch { found: usize, expected: usize },
    #[error("resonance unstable under distortion change: drift {drift:e}")]
    StabilityFailure { drift: f64 },
    #[error("deflation residual {0:e} too large")]
    DeflationFailure(f64),
    #[error("Newton iteration seeded at {seed} diverged")]
    NewtonDivergence { seed: Complex64 },
    #[error("two seeds converged to the same root {0}")]
    RootCollision(Complex64),
    #[error("residue discs overlap")]
    DiscOverlap,
    #[error("contour quadrature not converged (Richardson error {0:e})")]
    QuadratureNotConverged(f64),
    #[error("time grids differ")]
    GridMismatch,
    #[error("epsilon {eps:e} below level spacing {spacing:e}")]
    EpsilonTooSmall { eps: f64, spacing: f64 },
    #[error("Crank-Nicolson norm grew by {0:e} in one step")]
    StepInstability(f64),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
