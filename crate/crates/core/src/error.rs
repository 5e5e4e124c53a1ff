use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain too small: band span {span} must exceed {required} and contain [{lo}, {hi}]")]
    DomainTooSmall {
        span: f64,
        required: f64,
        lo: f64,
        hi: f64,
    },
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("singular solve: {0}")]
    Singular(String),
    #[error("nonzero horizontal mean {value:.3e} exceeds tolerance {tol:.1e}")]
    NonZeroMean { value: f64, tol: f64 },
    #[error("divergence {value:.3e} exceeds tolerance {tol:.1e}")]
    Divergence { value: f64, tol: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("infeasible constraint system: {0}")]
    Infeasible(String),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("window too narrow: [{t1}, {t2}] spans less than one decade")]
    WindowTooNarrow { t1: f64, t2: f64 },
    #[error("analytic weight overflow: rho * |xi_max| = {0:.1} exceeds 700")]
    Overflow(f64),
    #[error("near-wall residual {residual:.3e} inside the physical domain exceeds tolerance {tol:.1e}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error("CFL violation: dt = {dt:.3e} exceeds the limit {limit:.3e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("non-finite value in the solver state at t = {0}")]
    NotFinite(f64),
    #[error("phantom budget exceeded: realized {realized:.3e} > eta = {eta:.1e}")]
    BudgetExceeded { realized: f64, eta: f64 },
    #[error("wall layer under-resolved: dy = {dy:.4} > sqrt(eps)/8 = {limit:.4}")]
    LayerUnderResolved { dy: f64, limit: f64 },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}
