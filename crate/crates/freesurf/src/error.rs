use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unsupported resolution {n_r}x{n_theta} (need n_r >= 9, n_theta >= 8 and even)")]
    InvalidResolution { n_r: usize, n_theta: usize },
    #[error("degenerate map: jacobian determinant {det:.3e} at node {node}")]
    DegenerateMap { node: usize, det: f64 },
    #[error("rank mismatch: expected {expected}, found {found}")]
    RankMismatch { expected: usize, found: usize },
    #[error("frame mismatch between operands")]
    FrameMismatch,
    #[error("sound speed parameter must be positive, got {0}")]
    NonpositiveKappa(f64),
    #[error("unsupported equation of state: {0}")]
    UnsupportedEos(String),
    #[error("elliptic solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("incompatible Neumann data: defect {defect:.3e}")]
    IncompatibleNeumann { defect: f64 },
    #[error("field does not vanish on the boundary (max {max:.3e})")]
    BoundaryNonzero { max: f64 },
    #[error("derived time fields up to order {needed} required, {available} available")]
    MissingDerivedFields { needed: usize, available: usize },
    #[error("degenerate equation of state: e'(h) = 0 cannot drive the wave recursion")]
    DegenerateEos,
    #[error("resolution insufficient: spectral tail of {field} is {tail:.3e} of its norm")]
    ResolutionInsufficient { field: String, tail: f64 },
    #[error("sign condition violated: min(-grad_N h) = {eps:.6e}")]
    SignConditionViolation { eps: f64 },
    #[error("missing field: {0}")]
    MissingField(String),
    #[error("no contraction at iteration {iteration} (ratio {ratio:.3e})")]
    NoContraction { iteration: usize, ratio: f64 },
    #[error("builder did not converge after {iterations} iterations (M* = {residual:.3e})")]
    BuilderNoConvergence { iterations: usize, residual: f64 },
    #[error("time step {dt:.3e} exceeds the stability limit {limit:.3e}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("need at least three snapshots for centered differences, got {0}")]
    InsufficientSnapshots(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
