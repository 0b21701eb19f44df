use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("ellipticity violated at grid point {index:?} (x = {coords:?}): a = {value}, declared bounds [{a0}, {a1}]")]
    Ellipticity {
        index: Vec<usize>,
        coords: Vec<f64>,
        value: f64,
        a0: f64,
        a1: f64,
    },

    #[error("operator is not positive definite: smallest Ritz value {0}")]
    NotPositive(f64),

    #[error("eigensolver failed to converge")]
    EigenNotConverged,

    #[error("requested {requested} modes but the grid only has {available} unknowns")]
    TooManyModes { requested: usize, available: usize },

    #[error("non-finite nonlinearity value at grid point {index} (x = {coords:?}, u = {u})")]
    NonFinite { index: usize, coords: Vec<f64>, u: f64 },

    #[error("invalid nonlinearity: {0}")]
    Nonlinearity(String),

    #[error("fixed-point iteration diverged after {halvings} step halvings at t = {t}")]
    FixedPoint { t: f64, halvings: usize },

    #[error("trajectory window [{start}, {end}] does not contain [{s}, {t}]")]
    Window { start: f64, end: f64, s: f64, t: f64 },

    #[error("frozen operator not positive definite at tau = {tau}: smallest eigenvalue {min_eig} (theta below threshold)")]
    FrozenNotPositive { tau: f64, min_eig: f64 },

    #[error("theta_rho verification failed after {doublings} doublings (last theta = {theta})")]
    ThetaRho { theta: f64, doublings: usize },

    #[error("no tabulated eta satisfies the smallness condition (smallest eta {eta_min}, lhs {lhs}, delta {delta})")]
    EtaRefused { eta_min: f64, lhs: f64, delta: f64 },

    #[error("decay certificate refused: {0}")]
    Certificate(String),

    #[error("regularity check failed: {0}")]
    Regularity(String),

    #[error("sample mismatch: {0}")]
    Mismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
