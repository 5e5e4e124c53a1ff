//! Numerical laboratory for flushing-based control of a 2D channel flow.
//!
//! The crate is organised bottom-up:
//!
//! * [`field`]: grids on the truncated band, tangentially spectral fields,
//!   SBP finite differences in the wall-normal direction, div-curl recovery,
//!   Leray projection and norms.
//! * [`baseflow`]: the moment-constrained flushing profile `h(t)` and the
//!   cutoff `β(t)`.
//! * [`blayer`]: the half-line heat profile `V(t, z)` driven by `h`, its
//!   moments, decay exponents and the radius-loss integrand.
//! * [`transport`]: the explicitly transported first-order profile, the
//!   killing force and its control/phantom split.
//! * [`analytic`]: tangential Fourier multipliers, dyadic blocks, the
//!   `B⁰₂,₁` norm, low-pass regularization and the radius ODE.
//! * [`ns`]: the ε-scaled Navier–Stokes solver, Ansatz assembly, remainder
//!   extraction and the full pipeline.

pub mod analytic;
pub mod baseflow;
pub mod blayer;
pub mod field;
pub mod linalg;
pub mod ns;
pub mod quad;
pub mod transport;

mod error;

pub use error::{Error, Result};
pub use field::{Field2D, Grid, NormReport};
