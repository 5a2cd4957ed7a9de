use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("unsupported dimension {0} (supported: 1..={max})", max = crate::lattice::MAX_DIM)]
    UnsupportedDimension(usize),

    #[error("coordinate {0} out of the packed lattice range")]
    CoordinateOverflow(i64),

    #[error("enumeration budget exceeded: {required} path-steps required, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("graph on [{a},{b}] is not connected")]
    Disconnected { a: u32, b: u32 },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("lambda = {lambda} outside the contraction regime (need lambda <= 1/(9 beta) = {bound})")]
    NotContractive { lambda: f64, bound: f64 },

    #[error("iteration stopped contracting at sweep {sweep}: distance {previous:e} -> {current:e}")]
    NonContraction {
        sweep: usize,
        previous: f64,
        current: f64,
    },

    #[error("no convergence after {sweeps} sweeps (last distance {distance:e})")]
    NoConvergence { sweeps: usize, distance: f64 },

    #[error("outside the perturbative regime: {0}")]
    Perturbative(String),

    #[error("kernel violates |b_m| <= beta' m^(-2-eps) at m = {m}: |b_m| = {value:e}, bound {bound:e}")]
    KernelDecay { m: usize, value: f64, bound: f64 },

    #[error("infeasible variance target {target}: feasible window is [{low}, {high}]")]
    InfeasibleVariance { target: f64, low: f64, high: f64 },

    #[error("mass check failed at n = {n}: mass {mass} vs a_n {expected}")]
    MassMismatch { n: usize, mass: String, expected: String },

    #[error("gaussian tail did not converge below the radius cap {0}")]
    TailNotConverged(i64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot parse number {0:?}")]
    Parse(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
