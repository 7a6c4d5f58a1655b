//! Nystrom solver for the Carleman-Vekua equation
//! `dV/dzbar + A V + B conj(V) = F` with `A = A0/|z-a|`, `B = B0/|z-a|` on a disk,
//! together with the Riemann-Hilbert problem `Re[t^{-m} V(t)] = g(t)` on its boundary.

pub mod cli;
pub mod error;
pub mod expr;
pub mod fredholm;
pub mod linsolve;
pub mod mesh;
pub mod operators;
pub mod rh;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64;
