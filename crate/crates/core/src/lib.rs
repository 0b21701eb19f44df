//! Spectral-Galerkin simulation and verification harness for the semilinear damped
//! wave equation `ε u_tt + u_t + A u = f(x, u)` with Dirichlet conditions, and for its
//! parabolic limit `u_t + A u = f(x, u)`.

pub mod attractor;
pub mod error;
pub mod linearized;
pub mod nonlinearity;
pub mod operator;
pub mod pipeline;
pub mod regularity;
pub mod scenario;
pub mod semiflow;
pub mod stats;

pub use error::{Error, Result};

/// Order-preserving map, parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Send, U: Send>(items: Vec<T>, f: impl Fn(T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, U>(items: Vec<T>, f: impl Fn(T) -> U) -> Vec<U> {
    items.into_iter().map(f).collect()
}
