//! Pseudospectral simulation of the two-dimensional Rosensweig ferrofluid
//! system with magnetization diffusion, together with Littlewood–Paley
//! diagnostics for the inequalities that govern it.

// Guards are written `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod lp;
pub mod magnetostatics;
pub mod random;
pub mod solver;
pub mod spectral;

pub use error::{FerroError, Result};
pub use spectral::{Axis, Grid, PhysicalField, SpectralField};
