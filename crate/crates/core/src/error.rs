use thiserror::Error;

/// Errors produced by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid band structure: {0}")]
    InvalidBands(String),
    #[error("point {0} coincides with a branch point")]
    BranchPoint(f64),
    #[error("period matrix is numerically singular")]
    SingularSystem,
    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),
    #[error("integration path passes through a pole at {0}")]
    PathThroughPole(String),
    #[error("point outside the domain: {0}")]
    Domain(String),
    #[error("Dirichlet eigenvalue stalled at a gap edge: {0}")]
    FlowStall(String),
    #[error("ODE integration failed: {0}")]
    Ode(String),
    #[error("evaluation at a pole: {0}")]
    Pole(String),
    #[error("truncation error {0:e} exceeds tolerance")]
    Truncation(f64),
    #[error("Jost solutions belong to different spectral parameters")]
    Mismatch,
    #[error("spectral parameter {0} is too close to an eigenvalue")]
    EigenvalueProximity(String),
    #[error("{0} is too close to a band edge")]
    BandEdge(f64),
    #[error("window could not be certified: {0}")]
    Window(String),
    #[error("phase unwinding is ambiguous near {0}")]
    BranchTrack(f64),
    #[error("log-modulus is not integrable at edge {0}")]
    IntegrableSingularity(f64),
    #[error("requested derivative order exceeds the stencil accuracy: {0}")]
    StencilOrder(String),
    #[error("least-squares fit is ill-conditioned (condition number {0:e})")]
    IllConditionedFit(f64),
    #[error("KdV integration blew up at t = {0}")]
    Blowup(f64),
    #[error("spectral tail {0:e} exceeds the aliasing threshold")]
    Alias(f64),
    #[error("expression error: {0}")]
    Expression(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
