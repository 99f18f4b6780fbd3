//! Numerical verification of the exit-time perturbation bound
//!
//! ```text
//! E|T1 - T2| <= max_i sup_Q |dv_i/dy| * E|y1(T~) - y2(T~)|,   T~ = min(T1, T2)
//! ```
//!
//! for two homogeneous diffusions driven by a common Wiener process and
//! started at `a1`, `a2` in a bounded region Q. `v_i` is the mean exit time
//! from Q, the solution of `L_i v_i = -1`, `v_i = 0` on the boundary.
//!
//! The crate is organised along the pipeline:
//!
//! * [`geometry`]: regions Q and their membership / distance queries;
//! * [`expr`]: the coefficient expression language used in scenario files;
//! * [`pde`]: finite-difference mean exit time fields and their gradients;
//! * [`sde`]: coupled Euler–Maruyama simulation up to the first exits;
//! * [`bound`]: estimators for both sides of the inequality and the
//!   pathwise identities behind it;
//! * [`scenario`] and [`pipeline`]: the declarative runner behind the
//!   `exitbound` binary.

pub mod bound;
pub mod expr;
pub mod geometry;
pub mod output;
pub mod pde;
pub mod pipeline;
pub mod rng;
pub mod scenario;
pub mod sde;
pub mod stats;

pub use bound::{verify_bound, BoundReport};
pub use geometry::Region;
pub use pde::{DiffusionSpec, MeanExitField};
pub use sde::{CoupledPairOutcome, Coupling, PathConfig};
