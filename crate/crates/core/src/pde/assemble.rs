use std::sync::Arc;

use thiserror::Error;

use super::diffusion::{outer_gram, DiffusionSpec};
use super::grid::{Grid, NodeKind};
use crate::expr::EvalError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssembleError {
    #[error("grid has dimension {grid}, process has dimension {spec}")]
    DimensionMismatch { grid: usize, spec: usize },
    #[error("coefficient evaluation failed at node {point:?}: {source}")]
    Coefficient {
        point: Vec<f64>,
        #[source]
        source: EvalError,
    },
}

/// Sparse system `A v = rhs` in CSR form, one row per interior node.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub grid: Arc<Grid>,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Number of (node, axis) pairs where the drift was upwinded.
    pub upwind_switches: usize,
}

impl LinearSystem {
    pub fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.n_rows()];
        self.matvec(x, &mut ax);
        let num: f64 = ax
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = self.rhs.iter().map(|b| b * b).sum::<f64>().sqrt();
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows())
            .map(|r| self.row(r).find(|(c, _)| *c == r).map_or(0.0, |(_, v)| v))
            .collect()
    }
}

/// Discretizes `L v = -1` with `L = f . grad + (1/2) b : Hess`, `v = 0` on
/// the boundary.
///
/// Second derivatives use three-point stencils with Shortley–Weller arms.
/// First derivatives are central unless the cell Péclet test
/// `|f_j| h_j > b_jj` fires, in which case they are upwinded along that axis
/// at that node. Cross derivatives use the four-point stencil; corner
/// values outside the interior are taken as zero.
pub fn assemble(grid: Arc<Grid>, spec: &DiffusionSpec) -> Result<LinearSystem, AssembleError> {
    let n = grid.dim();
    if spec.n() != n {
        return Err(AssembleError::DimensionMismatch {
            grid: n,
            spec: spec.n(),
        });
    }
    let d = spec.d();
    let rows = grid.n_interior();
    let mut row_ptr = Vec::with_capacity(rows + 1);
    let mut cols = Vec::with_capacity(rows * (2 * n + 1));
    let mut vals = Vec::with_capacity(rows * (2 * n + 1));
    row_ptr.push(0);

    let mut p = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut beta = vec![0.0; n * d];
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(4 * n * n + 1);
    let mut upwind_switches = 0;
    let h = grid.spacing().to_vec();

    for (row, &node) in grid.interior_nodes().iter().enumerate() {
        grid.coord_into(node, &mut p);
        let wrap = |source| AssembleError::Coefficient {
            point: p.clone(),
            source,
        };
        spec.drift_into(&p, &mut f).map_err(wrap)?;
        spec.diffusion_into(&p, &mut beta).map_err(wrap)?;
        let b = outer_gram(&beta, n, d);

        entries.clear();
        let mut center = 0.0;
        for axis in 0..n {
            let [hm, hp] = grid.arms(row, axis);
            let bjj = b[axis * n + axis];
            let fj = f[axis];
            let mut w_minus = bjj / (hm * (hm + hp));
            let mut w_plus = bjj / (hp * (hm + hp));
            center -= w_minus + w_plus;
            if fj.abs() * h[axis] > bjj {
                upwind_switches += 1;
                if fj > 0.0 {
                    w_plus += fj / hp;
                    center -= fj / hp;
                } else {
                    w_minus -= fj / hm;
                    center += fj / hm;
                }
            } else {
                w_plus += fj * hm / (hp * (hm + hp));
                w_minus -= fj * hp / (hm * (hm + hp));
                center += fj * (hp - hm) / (hm * hp);
            }
            for (plus, w) in [(false, w_minus), (true, w_plus)] {
                let nb = grid.neighbor(node, axis, plus).expect("interior node on grid edge");
                if grid.kind(nb) == NodeKind::Interior {
                    entries.push((grid.row_of(nb), w));
                }
            }
        }
        for j in 0..n {
            for k in (j + 1)..n {
                let bjk = b[j * n + k];
                if bjk == 0.0 {
                    continue;
                }
                let w = bjk / (4.0 * h[j] * h[k]);
                for (sj, sk, sign) in [(1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)] {
                    if let Some(nb) = grid.offset(node, &[(j, sj), (k, sk)]) {
                        if grid.kind(nb) == NodeKind::Interior {
                            entries.push((grid.row_of(nb), sign * w));
                        }
                    }
                }
            }
        }
        entries.push((row, center));
        entries.sort_by_key(|e| e.0);
        let mut last = usize::MAX;
        for &(c, v) in entries.iter() {
            if c == last {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                last = c;
            }
        }
        row_ptr.push(cols.len());
    }

    Ok(LinearSystem {
        grid,
        row_ptr,
        cols,
        vals,
        rhs: vec![-1.0; rows],
        upwind_switches,
    })
}
