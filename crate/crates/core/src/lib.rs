//! Learning PSD kernels from relative-similarity triplets.
//!
//! A triplet `(a, b, c)` states that `a` is more similar to `b` than to `c`,
//! i.e. `d(a, b) < d(a, c)` under the kernel-induced distance
//! `d(i, j) = K_ii + K_jj - 2 K_ij`. The crate provides triplet-set
//! reasoning ([`triplets`]), kernel utilities ([`kernels`]), the STE and
//! GNMDS losses ([`losses`]), a projected gradient solver for plain,
//! multiple-kernel and auxiliary-kernel learning ([`solver`]) and the
//! synthetic benchmark ([`synthbench`]).

pub mod error;
pub mod kernels;
pub mod losses;
pub mod solver;
pub mod synthbench;
pub mod triplets;

pub use error::{Error, Result};
pub use kernels::{AuxKernelBank, KernelMatrix};
pub use losses::LossKind;
pub use solver::{fit, Mode, ModelState, SolverConfig};
pub use triplets::{Triplet, TripletSet};
