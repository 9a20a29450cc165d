//! Spectral simulation toolkit for the renormalized Anderson Hamiltonian
//! `H = Δ + ξ - ∞` on the 2-d and 3-d torus.
//!
//! The crate is organized in layers:
//!
//! * [`torus`] — truncated Fourier-lattice fields, FFT synthesis/analysis,
//!   dealiased products, Sobolev norms.
//! * [`dyadic`] — Littlewood-Paley blocks `Δ_j`, sharp frequency cutoffs
//!   `Δ_{>N}`, Besov norms, Bernstein diagnostics.
//! * [`paracalc`] — Bony paraproducts `≺`, `≻`, the resonant product `∘`,
//!   and the commutator/remainder operators built from them.
//! * [`noise`] — seeded white-noise realizations, mollification,
//!   renormalization constants, and the enhanced-noise data in 2-d and 3-d.
//! * [`anderson2d`] / [`anderson3d`] — the paracontrolled operator itself:
//!   the `Γ`-map, operator action, dense matrix assembly, resolvents,
//!   lower bounds and functional-inequality diagnostics.
//! * [`evolve`] — spectral propagators and cubic NLS / wave solvers with
//!   conservation and ε-convergence diagnostics.
//! * [`io`] — field snapshots, trace CSV, and manifest records.

pub mod anderson2d;
pub mod anderson3d;
pub mod dyadic;
pub mod linalg;
pub mod noise;
pub mod paracalc;
pub mod error;
pub mod torus;

pub use error::{CoreError, Result};
pub use torus::{FourierField, Grid, TorusSpec};
