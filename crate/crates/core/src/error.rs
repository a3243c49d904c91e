use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("divergent integral: ∫(1∧|e|²)dλ did not stabilize across refinement levels {values:?}")]
    DivergentIntegral { values: Vec<f64> },

    #[error("integrand decays too slowly near the origin (shell ratio {ratio:.3e} at radius {radius:.3e})")]
    SlowDecay { radius: f64, ratio: f64 },

    #[error("truncated measure has non-finite mass {mass}")]
    InfiniteMass { mass: f64 },

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("non-finite state on path {path} at step {step}")]
    NonFiniteState { path: usize, step: usize },

    #[error("path bundles are not comparable: {0}")]
    GridMismatch(String),

    #[error("singular regression at step {step} (condition number {condition:.3e})")]
    SingularRegression { step: usize, condition: f64 },

    #[error("implicit y fixed point did not converge at step {step} after {passes} passes")]
    NonConvergence { step: usize, passes: usize },

    #[error("Picard iteration stalled in window {window}: last deltas {last_deltas:?}")]
    ContractionStall { window: usize, last_deltas: [f64; 2] },

    #[error("finite-difference derivative ill conditioned at x = {x:?} (widths disagree: {d_h:.6e} vs {d_2h:.6e})")]
    IllConditionedDerivative { x: Vec<f64>, d_h: f64, d_2h: f64 },

    #[error("CFL bound violated: dt·(Λ + C_h) = {value:.4} ≥ 1")]
    CflViolation { value: f64 },

    #[error("tridiagonal system singular at row {row}")]
    TridiagonalSingular { row: usize },

    #[error("estimator unavailable: {0}")]
    EstimatorUnavailable(String),

    #[error("outer iteration did not converge; distance trace {trace:?}")]
    NoConvergence { trace: Vec<f64> },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("artifact format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
