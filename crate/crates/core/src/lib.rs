//! Verification toolkit for critical polyharmonic equations
//! `(−Δ)^k u = |u|^{2♯−2} u`: exact bubble algebra, conformal maps, Green's
//! functions, bubble-tree geometry, weighted norms, Pohozaev identities and a
//! radial blow-up solver.

pub mod bubbles;
pub mod bubbletree;
pub mod cli;
pub mod conformal;
pub mod error;
pub mod greenfn;
pub mod jet;
pub mod ode;
pub mod pohozaev;
pub mod quad;
pub mod radialgebra;
pub mod radialsolver;
pub mod util;
pub mod weights;

pub use error::{Error, Result};
