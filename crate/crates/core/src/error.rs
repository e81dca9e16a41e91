use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("evaluator failed at point {point:?} (time {time}): {what}")]
    Evaluator { point: Vec<f64>, time: f64, what: String },

    #[error("potential is not quadratic at time {time}; a Gaussian representation needs a quadratic potential")]
    NonQuadratic { time: f64 },

    #[error("integrand is not finite at {point:?}")]
    NonFiniteIntegrand { point: Vec<f64> },

    #[error("quadrature box too small: boundary mass fraction {fraction:.3e} exceeds {threshold:.1e}")]
    DomainTooSmall { fraction: f64, threshold: f64 },

    #[error("{flagged} of {total} paths became non-finite (limit 0.1%)")]
    BlowUp { flagged: usize, total: usize },

    #[error("time step {dt:e} violates the CFL limit; need dt <= {required:e}")]
    Cfl { dt: f64, required: f64 },

    #[error("density leaked to the box boundary: boundary mass {mass:.3e} exceeds {threshold:.1e}")]
    BoundaryLeakage { mass: f64, threshold: f64 },

    #[error("positivity lost at time {time}: minimum value {min:e}")]
    PositivityLoss { time: f64, min: f64 },

    #[error("reference vanishes where the density has mass at cells {cells:?}")]
    SupportMismatch { cells: Vec<usize> },

    #[error("density vanishes at interior cells {cells:?}")]
    ZeroInterior { cells: Vec<usize> },

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("Riccati solution blew up at time {time}")]
    RiccatiBlowUp { time: f64 },

    #[error("certificate rejected: {0}")]
    Certificate(#[from] crate::entropy::CertificateViolation),

    #[error("no feasible (a, b, c) on the search grid; try rescaling xi, beta or L")]
    EmptyFeasibleSet,

    #[error("Bakry-Emery constant is not positive: kappa0 = {kappa0}")]
    NonConvex { kappa0: f64 },

    #[error("sampled initial state has zero density under the sampling law at {point:?}")]
    ZeroSamplingDensity { point: Vec<f64> },

    #[error("all importance weights underflowed")]
    DegenerateWeights,

    #[error("inequality violated: {0}")]
    InequalityViolated(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
