//! Finite-difference solution of the mean exit time problem
//! `L v = -1` in Q, `v = 0` on the boundary, where
//! `L = sum_j f_j d/dy_j + (1/2) sum_jk b_jk d^2/dy_j dy_k` and `b = beta beta^T`.

mod assemble;
mod diffusion;
mod ellipticity;
mod field;
mod grid;
mod linsolve;

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

pub use assemble::{assemble, AssembleError, LinearSystem};
pub use diffusion::{DiffusionSpec, SpecError};
pub use ellipticity::{check_ellipticity, min_eigenvalue, EllipticityError, EllipticityReport};
pub use field::{solve_dirichlet, BoundarySample, FieldError, MeanExitField};
pub use grid::{Grid, GridError, NodeKind, MIN_RESOLUTION, NOT_INTERIOR};
pub use linsolve::{bicgstab, SolveError, SolveStats, SolverKind, SolverOptions};

use crate::geometry::Region;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Assemble(#[from] AssembleError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy)]
pub struct PdeOptions {
    pub solver: SolverOptions,
    /// Cap on the total number of grid nodes.
    pub max_nodes: usize,
}

impl Default for PdeOptions {
    fn default() -> Self {
        PdeOptions {
            solver: SolverOptions::default(),
            max_nodes: 4_000_000,
        }
    }
}

/// Grid, assemble and solve in one call.
pub fn solve_mean_exit(
    region: &Region,
    spec: &DiffusionSpec,
    resolution: usize,
    opts: &PdeOptions,
) -> Result<MeanExitField, PdeError> {
    let grid = Arc::new(Grid::build(region, resolution, opts.max_nodes)?);
    let system = assemble(grid, spec)?;
    Ok(solve_dirichlet(&system, &opts.solver)?)
}

/// Resolution of the next coarser nested grid (every other node).
pub fn coarser_resolution(resolution: usize) -> usize {
    (resolution - 1) / 2 + 1
}

/// Sup of |dv/dy| on the working grid and on the next coarser one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupReport {
    pub fine: f64,
    pub coarse: f64,
    pub h_fine: f64,
    pub h_coarse: f64,
}

pub fn sup_with_refinement(
    fine: &MeanExitField,
    spec: &DiffusionSpec,
    opts: &PdeOptions,
) -> Result<SupReport, PdeError> {
    let grid = fine.grid();
    let coarse_res = coarser_resolution(grid.resolution());
    let coarse = solve_mean_exit(grid.region(), spec, coarse_res, opts)?;
    Ok(SupReport {
        fine: fine.sup_grad_norm(),
        coarse: coarse.sup_grad_norm(),
        h_fine: grid.max_spacing(),
        h_coarse: coarse.grid().max_spacing(),
    })
}
