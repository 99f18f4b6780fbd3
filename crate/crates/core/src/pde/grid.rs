use thiserror::Error;

use crate::geometry::Region;

pub const MIN_RESOLUTION: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("resolution {0} is below the minimum of {MIN_RESOLUTION} nodes per axis")]
    ResolutionTooSmall(usize),
    #[error("grid would have {nodes} nodes, above the cap of {cap}")]
    TooManyNodes { nodes: usize, cap: usize },
    #[error("region has no interior grid nodes")]
    NoInterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    /// Carries the Dirichlet value 0.
    Boundary,
    Exterior,
}

/// Uniform tensor grid over the bounding box of a region.
///
/// Interior nodes are numbered in lexicographic order (axis 0 fastest) and
/// that numbering is the row order of the assembled system. For each
/// interior node the grid stores the arm length towards each axis
/// neighbour: the spacing `h` when the neighbour is interior, otherwise the
/// distance to the boundary along that axis (Shortley–Weller arms).
#[derive(Debug, Clone)]
pub struct Grid {
    region: Region,
    resolution: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    h: Vec<f64>,
    strides: Vec<usize>,
    kinds: Vec<NodeKind>,
    row_of: Vec<usize>,
    interior: Vec<usize>,
    arms: Vec<f64>,
}

pub const NOT_INTERIOR: usize = usize::MAX;

impl Grid {
    pub fn build(region: &Region, resolution: usize, max_nodes: usize) -> Result<Grid, GridError> {
        if resolution < MIN_RESOLUTION {
            return Err(GridError::ResolutionTooSmall(resolution));
        }
        let n = region.dim();
        let total = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(resolution));
        let total = match total {
            Some(t) if t <= max_nodes => t,
            other => {
                return Err(GridError::TooManyNodes {
                    nodes: other.unwrap_or(usize::MAX),
                    cap: max_nodes,
                })
            }
        };
        let (lo, hi) = region.bounding_box();
        let h: Vec<f64> = (0..n).map(|j| (hi[j] - lo[j]) / (resolution - 1) as f64).collect();
        let mut strides = vec![1usize; n];
        for j in 1..n {
            strides[j] = strides[j - 1] * resolution;
        }
        let mut grid = Grid {
            region: region.clone(),
            resolution,
            lo,
            hi,
            h,
            strides,
            kinds: vec![NodeKind::Exterior; total],
            row_of: vec![NOT_INTERIOR; total],
            interior: Vec::new(),
            arms: Vec::new(),
        };

        let mut p = vec![0.0; n];
        for node in 0..total {
            grid.coord_into(node, &mut p);
            if region.contains_unchecked(&p) {
                grid.kinds[node] = NodeKind::Interior;
                grid.row_of[node] = grid.interior.len();
                grid.interior.push(node);
            }
        }
        if grid.interior.is_empty() {
            return Err(GridError::NoInterior);
        }

        let curved = matches!(region, Region::Ball { .. });
        if !curved {
            // every non-interior node of a box-aligned grid lies on a face
            for k in grid.kinds.iter_mut() {
                if *k == NodeKind::Exterior {
                    *k = NodeKind::Boundary;
                }
            }
        }

        let mut arms = vec![0.0; grid.interior.len() * n * 2];
        for row in 0..grid.interior.len() {
            let node = grid.interior[row];
            grid.coord_into(node, &mut p);
            for axis in 0..n {
                for (side, sign) in [(0usize, -1.0f64), (1, 1.0)] {
                    // interior nodes never sit on the outer grid layer
                    let nb = grid.neighbor(node, axis, sign > 0.0).unwrap();
                    let arm = if grid.kinds[nb] == NodeKind::Interior || !curved {
                        grid.h[axis]
                    } else {
                        grid.kinds[nb] = NodeKind::Boundary;
                        region.ray_exit_distance(&p, axis, sign).min(grid.h[axis])
                    };
                    arms[(row * n + axis) * 2 + side] = arm;
                }
            }
        }
        grid.arms = arms;
        Ok(grid)
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn max_spacing(&self) -> f64 {
        self.h.iter().copied().fold(0.0, f64::max)
    }

    pub fn lower(&self) -> &[f64] {
        &self.lo
    }

    pub fn upper(&self) -> &[f64] {
        &self.hi
    }

    pub fn n_nodes(&self) -> usize {
        self.kinds.len()
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.kinds[node]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    /// Equation row of an interior node, `NOT_INTERIOR` otherwise.
    pub fn row_of(&self, node: usize) -> usize {
        self.row_of[node]
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Arm lengths `[minus, plus]` of interior row `row` along `axis`.
    pub fn arms(&self, row: usize, axis: usize) -> [f64; 2] {
        let i = (row * self.dim() + axis) * 2;
        [self.arms[i], self.arms[i + 1]]
    }

    pub fn index_along(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.resolution
    }

    pub fn node_of(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(k, s)| k * s).sum()
    }

    pub fn coord_into(&self, node: usize, out: &mut [f64]) {
        for (axis, o) in out.iter_mut().enumerate() {
            let k = self.index_along(node, axis);
            *o = if k + 1 == self.resolution {
                self.hi[axis]
            } else {
                self.lo[axis] + k as f64 * self.h[axis]
            };
        }
    }

    pub fn coord(&self, node: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.coord_into(node, &mut p);
        p
    }

    /// Axis neighbour, or `None` past the edge of the grid.
    pub fn neighbor(&self, node: usize, axis: usize, plus: bool) -> Option<usize> {
        let k = self.index_along(node, axis);
        if plus {
            (k + 1 < self.resolution).then(|| node + self.strides[axis])
        } else {
            (k > 0).then(|| node - self.strides[axis])
        }
    }

    /// Node displaced by `offsets[axis]` steps along each axis.
    pub fn offset(&self, node: usize, offsets: &[(usize, isize)]) -> Option<usize> {
        let mut out = node;
        for &(axis, step) in offsets {
            let k = self.index_along(node, axis) as isize + step;
            if k < 0 || k >= self.resolution as isize {
                return None;
            }
            out = (out as isize + step * self.strides[axis] as isize) as usize;
        }
        Some(out)
    }
}
