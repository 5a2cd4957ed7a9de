//! Lace expansion for the weakly self-avoiding walk on Z^d.
//!
//! The crate is organized bottom-up:
//!
//! - [`lattice`]: sparse signed measures, folding, lattice Gaussians.
//! - [`walks`]: exact enumeration of connectivities `C_n`.
//! - [`laces`]: graphs, laces, compatible edges, lace functions `Pi_m` and
//!   exact checks of the lace-expansion recursion.
//! - [`scalar_fp`]: the fixed-point iteration for the mass constants `a_n`
//!   and the constants `mu`, `alpha`.
//! - [`local_fp`]: the measure recursion for `A_n`, the diffusion constant
//!   and local CLT error tables, plus the end-to-end SAW pipeline.
//! - [`gauss_approx`]: numerical checks of the local CLT rate and of the
//!   Taylor remainders for folded and variance-shifted Gaussians.

pub mod error;
pub mod lattice;
pub mod scalar;
pub mod scalar_fp;
pub mod laces;
pub mod walks;
pub mod local_fp;
pub mod gauss_approx;

pub use error::{Error, Result};
pub use lattice::{convolve, Parity, Point, SignedMeasure};
pub use scalar::{Rational, Scalar};
