//! Immersed boundary projection method for two-dimensional incompressible
//! viscous flow.
//!
//! Bodies are clouds of Lagrangian points on a staggered, optionally
//! stretched Cartesian grid. Every time step solves the approximately
//! factorized saddle-point system
//!
//! ```text
//!   A q*            = r1
//!   Qᵀ Bᴺ Q λ       = Qᵀ q* − r2
//!   q(n+1)          = q* − Bᴺ (Q λ)
//! ```
//!
//! where `q` holds momentum fluxes on cell faces, `λ = (φ, f̃)` stacks the
//! pressure and the body forces, `Q = [G, Eᵀ]` and `Bᴺ` is an `N`-term
//! approximate inverse of the implicit momentum operator `A`.
//!
//! The crate is `no_std` and only needs an allocator. File formats, the
//! configuration language and the command-line driver live in the `ibpm`
//! crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod body;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod krylov;
pub mod math;
pub mod operators;
pub mod sparse;
pub mod stepper;

pub use error::{Error, Result};
