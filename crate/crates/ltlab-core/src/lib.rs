//! Exact Lubin-Tate formal-group calculus over local fields.
//!
//! The crate provides exact p-adic arithmetic in small extension towers,
//! truncated power/Laurent series over formal-period coefficients, Lubin-Tate
//! formal groups with their operator calculus (phi, psi, Gamma-action,
//! invariant derivative), p-adic measures with the Amice and Mellin
//! transforms, local epsilon constants via Gauss sums, finite-dimensional
//! cohomology models, and verification suites for the scalar identities that
//! tie these together.

pub mod error;
pub mod padic;
pub mod series;
pub mod cosets;
pub mod sampling;
pub mod lubin_tate;
pub mod chareps;
pub mod phigamma;
pub mod dist;
pub mod cohmodel;
pub mod recip;
pub mod fields;
pub mod verify;

pub use error::{Error, Result};
