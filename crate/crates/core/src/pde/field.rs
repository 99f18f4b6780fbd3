use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use super::assemble::LinearSystem;
use super::grid::{Grid, NodeKind};
use super::linsolve::{self, SolveError, SolveStats, SolverOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("query point {0:?} lies outside the grid hull")]
    OutsideHull(Vec<f64>),
    #[error("query point has dimension {got}, field has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Gradient estimate at a point where an axis through an interior node
/// meets the boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundarySample {
    pub point: Vec<f64>,
    pub gradient: Vec<f64>,
    /// The boundary node the sample is attached to.
    pub node: usize,
    /// |n . e_axis| of the outward normal against the probing axis.
    pub alignment: f64,
}

/// Grid solution of the mean exit time problem together with its nodal
/// gradients.
#[derive(Debug, Clone)]
pub struct MeanExitField {
    grid: Arc<Grid>,
    values: Vec<f64>,
    gradients: Vec<f64>,
    boundary_samples: Vec<BoundarySample>,
    pub stats: SolveStats,
    pub upwind_switches: usize,
}

/// Solves the assembled system and derives nodal gradients.
pub fn solve_dirichlet(system: &LinearSystem, opts: &SolverOptions) -> Result<MeanExitField, SolveError> {
    let (solution, stats) = linsolve::solve(system, opts)?;
    let grid = system.grid.clone();
    let mut values = vec![0.0; grid.n_nodes()];
    for (row, &node) in grid.interior_nodes().iter().enumerate() {
        values[node] = solution[row];
    }
    let mut field = MeanExitField {
        grid,
        values,
        gradients: Vec::new(),
        boundary_samples: Vec::new(),
        stats,
        upwind_switches: system.upwind_switches,
    };
    field.compute_gradients();
    Ok(field)
}

impl MeanExitField {
    /// A field with prescribed interior values, for diagnostics and tests.
    pub fn from_values(grid: Arc<Grid>, interior_values: &[f64]) -> MeanExitField {
        let mut values = vec![0.0; grid.n_nodes()];
        for (row, &node) in grid.interior_nodes().iter().enumerate() {
            values[node] = interior_values[row];
        }
        let mut field = MeanExitField {
            grid,
            values,
            gradients: Vec::new(),
            boundary_samples: Vec::new(),
            stats: SolveStats {
                method: linsolve::SolverKind::BandedLu,
                iterations: 0,
                relative_residual: 0.0,
            },
            upwind_switches: 0,
        };
        field.compute_gradients();
        field
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Value at every grid node; zero off the interior.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn gradient(&self, node: usize) -> &[f64] {
        let n = self.grid.dim();
        &self.gradients[node * n..(node + 1) * n]
    }

    pub fn boundary_samples(&self) -> &[BoundarySample] {
        &self.boundary_samples
    }

    pub fn min_value(&self) -> f64 {
        self.grid
            .interior_nodes()
            .iter()
            .map(|&i| self.values[i])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    fn compute_gradients(&mut self) {
        let grid = self.grid.clone();
        let n = grid.dim();
        let region = grid.region();
        let mut gradients = vec![0.0; grid.n_nodes() * n];
        let mut samples: Vec<BoundarySample> = Vec::new();
        let value_or_zero = |node: usize| match grid.kind(node) {
            NodeKind::Interior => self.values[node],
            _ => 0.0,
        };
        let mut p = vec![0.0; n];
        for (row, &node) in grid.interior_nodes().iter().enumerate() {
            grid.coord_into(node, &mut p);
            let u0 = self.values[node];
            for axis in 0..n {
                let [hm, hp] = grid.arms(row, axis);
                let minus = grid.neighbor(node, axis, false).unwrap();
                let plus = grid.neighbor(node, axis, true).unwrap();
                let um = value_or_zero(minus);
                let up = value_or_zero(plus);
                // second-order three-point derivative on unequal arms
                gradients[node * n + axis] =
                    (hm * hm * up - hp * hp * um - (hm * hm - hp * hp) * u0) / (hm * hp * (hm + hp));

                for (nb, sign, arm, opp_arm, opp_value) in [(minus, -1.0, hm, hp, up), (plus, 1.0, hp, hm, um)] {
                    if grid.kind(nb) == NodeKind::Interior {
                        continue;
                    }
                    // one-sided quadratic through the boundary point (v = 0),
                    // this node and the opposite neighbour, differentiated at
                    // the boundary point along the inward direction
                    let x1 = arm;
                    let x2 = arm + opp_arm;
                    let inward = u0 * x2 / (x1 * (x2 - x1)) - opp_value * x1 / (x2 * (x2 - x1));
                    let axis_derivative = -sign * inward;
                    let mut q = p.clone();
                    q[axis] += sign * arm;
                    let normal = region.outward_normal(&q);
                    let alignment = normal[axis].abs();
                    if alignment * alignment * n as f64 + 1e-12 < 1.0 {
                        continue;
                    }
                    let normal_derivative = axis_derivative / normal[axis];
                    samples.push(BoundarySample {
                        gradient: normal.iter().map(|c| c * normal_derivative).collect(),
                        point: q,
                        node: nb,
                        alignment,
                    });
                }
            }
        }
        // boundary nodes take the best-aligned sample attached to them
        let mut best_alignment = vec![-1.0f64; grid.n_nodes()];
        for s in &samples {
            if s.alignment > best_alignment[s.node] {
                best_alignment[s.node] = s.alignment;
                gradients[s.node * n..(s.node + 1) * n].copy_from_slice(&s.gradient);
            }
        }
        self.gradients = gradients;
        self.boundary_samples = samples;
    }

    fn locate(&self, point: &[f64]) -> Result<(Vec<usize>, Vec<f64>), FieldError> {
        let grid = &self.grid;
        let n = grid.dim();
        if point.len() != n {
            return Err(FieldError::DimensionMismatch {
                expected: n,
                got: point.len(),
            });
        }
        let res = grid.resolution();
        let mut cell = Vec::with_capacity(n);
        let mut frac = Vec::with_capacity(n);
        for axis in 0..n {
            let h = grid.spacing()[axis];
            let s = (point[axis] - grid.lower()[axis]) / h;
            let tol = 1e-9;
            if !(s >= -tol && s <= (res - 1) as f64 + tol) {
                return Err(FieldError::OutsideHull(point.to_vec()));
            }
            let k = (s.floor().max(0.0) as usize).min(res - 2);
            cell.push(k);
            frac.push((s - k as f64).clamp(0.0, 1.0));
        }
        Ok((cell, frac))
    }

    fn multilinear<F: Fn(usize) -> f64>(&self, point: &[f64], nodal: F) -> Result<f64, FieldError> {
        let (cell, frac) = self.locate(point)?;
        let n = cell.len();
        let mut acc = 0.0;
        let mut multi = vec![0usize; n];
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            for axis in 0..n {
                let upper = (corner >> axis) & 1 == 1;
                multi[axis] = cell[axis] + upper as usize;
                w *= if upper { frac[axis] } else { 1.0 - frac[axis] };
            }
            if w != 0.0 {
                acc += w * nodal(self.grid.node_of(&multi));
            }
        }
        Ok(acc)
    }

    /// Multilinear interpolation of v. Nodes off the interior contribute 0.
    pub fn value_at(&self, point: &[f64]) -> Result<f64, FieldError> {
        self.multilinear(point, |node| match self.grid.kind(node) {
            NodeKind::Interior => self.values[node],
            _ => 0.0,
        })
    }

    /// Multilinear interpolation of the nodal gradient.
    pub fn gradient_at(&self, point: &[f64]) -> Result<Vec<f64>, FieldError> {
        let n = self.grid.dim();
        (0..n)
            .map(|axis| self.multilinear(point, |node| self.gradients[node * n + axis]))
            .collect()
    }

    /// Maximum Euclidean norm of the nodal gradient over interior and
    /// boundary nodes.
    pub fn sup_grad_norm(&self) -> f64 {
        let n = self.grid.dim();
        self.gradients
            .chunks_exact(n)
            .zip(self.grid.kinds())
            .filter(|(_, k)| **k != NodeKind::Exterior)
            .map(|(g, _)| g.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Region;
    use crate::pde::{assemble, DiffusionSpec};

    fn solve_bm(region: Region, res: usize) -> MeanExitField {
        let n = region.dim();
        let drift = vec!["0"; n];
        let diff: Vec<Vec<&str>> = (0..n)
            .map(|j| (0..n).map(|k| if j == k { "1" } else { "0" }).collect())
            .collect();
        let spec = DiffusionSpec::parse("bm", &drift, &diff).unwrap();
        let grid = Arc::new(Grid::build(&region, res, 1 << 24).unwrap());
        let sys = assemble(grid, &spec).unwrap();
        solve_dirichlet(&sys, &SolverOptions::default()).unwrap()
    }

    #[test]
    fn quadratic_solution_in_1d() {
        let f = solve_bm(Region::interval(0.0, 1.0).unwrap(), 1001);
        let g = f.grid().clone();
        let mut max_err = 0.0f64;
        for node in 0..g.n_nodes() {
            let y = g.coord(node)[0];
            max_err = max_err.max((f.values()[node] - y * (1.0 - y)).abs());
        }
        assert!(max_err < 1e-9, "{max_err}");
        assert_eq!(f.values()[0], 0.0);
        assert_eq!(f.values()[1000], 0.0);
        assert!((f.value_at(&[0.5]).unwrap() - 0.25).abs() < 1e-9);
        assert!((f.sup_grad_norm() - 1.0).abs() < 1e-6);
        // nodal gradient reproduces 1 - 2y
        for node in [1usize, 300, 999] {
            let y = g.coord(node)[0];
            assert!((f.gradient(node)[0] - (1.0 - 2.0 * y)).abs() < 1e-6);
        }
        assert!((f.gradient(0)[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_field_has_zero_sup() {
        let g = Arc::new(Grid::build(&Region::interval(0.0, 1.0).unwrap(), 11, 100).unwrap());
        let f = MeanExitField::from_values(g, &[0.0; 9]);
        assert_eq!(f.sup_grad_norm(), 0.0);
    }

    #[test]
    fn disk_solution_and_gradient() {
        let f = solve_bm(Region::ball(vec![0.0, 0.0], 1.0).unwrap(), 41);
        assert!((f.value_at(&[0.0, 0.0]).unwrap() - 0.5).abs() < 1e-8);
        let sup = f.sup_grad_norm();
        assert!((sup - 1.0).abs() < 0.05, "{sup}");
        assert!(f.min_value() >= -1e-9);
    }

    #[test]
    fn queries_outside_hull_fail() {
        let f = solve_bm(Region::interval(0.0, 1.0).unwrap(), 11);
        assert!(matches!(f.value_at(&[1.5]), Err(FieldError::OutsideHull(_))));
        assert!(matches!(
            f.value_at(&[0.5, 0.5]),
            Err(FieldError::DimensionMismatch { .. })
        ));
    }
}
