//! Bounded regions: open intervals, axis-aligned boxes and balls.
//!
//! Regions are open. A point on the boundary is *not* contained, so a path
//! that reaches the boundary has exited.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: region has dimension {expected}, point has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid region: {0}")]
    Invalid(String),
}

/// A bounded open region of R^n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Region {
    Interval { lo: f64, hi: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Region {
    pub fn interval(lo: f64, hi: f64) -> Result<Self, GeometryError> {
        let r = Region::Interval { lo, hi };
        r.validate()?;
        Ok(r)
    }

    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GeometryError> {
        let r = Region::Box { lo, hi };
        r.validate()?;
        Ok(r)
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self, GeometryError> {
        let r = Region::Ball { center, radius };
        r.validate()?;
        Ok(r)
    }

    /// Checks the construction invariants. Deserialized regions must be
    /// validated before use.
    pub fn validate(&self) -> Result<(), GeometryError> {
        match self {
            Region::Interval { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(GeometryError::Invalid(format!(
                        "interval needs finite lo < hi, got ({lo}, {hi})"
                    )));
                }
            }
            Region::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(GeometryError::Invalid(format!(
                        "box corners must be nonempty and of equal length, got {} and {}",
                        lo.len(),
                        hi.len()
                    )));
                }
                for (j, (l, h)) in lo.iter().zip(hi).enumerate() {
                    if !(l.is_finite() && h.is_finite() && l < h) {
                        return Err(GeometryError::Invalid(format!(
                            "box axis {j} needs finite lo < hi, got ({l}, {h})"
                        )));
                    }
                }
            }
            Region::Ball { center, radius } => {
                if center.len() < 2 {
                    return Err(GeometryError::Invalid(
                        "ball requires dimension >= 2; use an interval in 1D".into(),
                    ));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(GeometryError::Invalid(format!(
                        "ball radius must be positive, got {radius}"
                    )));
                }
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(GeometryError::Invalid("ball center must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Interval { .. } => 1,
            Region::Box { lo, .. } => lo.len(),
            Region::Ball { center, .. } => center.len(),
        }
    }

    fn check_dim(&self, point: &[f64]) -> Result<(), GeometryError> {
        if point.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        Ok(())
    }

    /// Strict interior membership.
    pub fn contains(&self, point: &[f64]) -> Result<bool, GeometryError> {
        self.check_dim(point)?;
        Ok(self.contains_unchecked(point))
    }

    /// Membership test without the dimension check, for hot loops that
    /// have already validated their state vectors.
    #[inline]
    pub fn contains_unchecked(&self, point: &[f64]) -> bool {
        match self {
            Region::Interval { lo, hi } => point[0] > *lo && point[0] < *hi,
            Region::Box { lo, hi } => point.iter().zip(lo.iter().zip(hi)).all(|(p, (l, h))| p > l && p < h),
            Region::Ball { center, radius } => sq_dist(point, center) < radius * radius,
        }
    }

    /// Membership in the closure.
    pub fn contains_closed(&self, point: &[f64]) -> Result<bool, GeometryError> {
        self.check_dim(point)?;
        Ok(match self {
            Region::Interval { lo, hi } => point[0] >= *lo && point[0] <= *hi,
            Region::Box { lo, hi } => point.iter().zip(lo.iter().zip(hi)).all(|(p, (l, h))| p >= l && p <= h),
            Region::Ball { center, radius } => sq_dist(point, center) <= radius * radius,
        })
    }

    /// Euclidean distance from `point` to the boundary, for points on
    /// either side of it.
    pub fn boundary_distance(&self, point: &[f64]) -> Result<f64, GeometryError> {
        self.check_dim(point)?;
        Ok(match self {
            Region::Interval { lo, hi } => {
                let p = point[0];
                if p <= *lo {
                    lo - p
                } else if p >= *hi {
                    p - hi
                } else {
                    (p - lo).min(hi - p)
                }
            }
            Region::Box { lo, hi } => box_boundary_distance(point, lo, hi),
            Region::Ball { center, radius } => (sq_dist(point, center).sqrt() - radius).abs(),
        })
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Region::Interval { lo, hi } => (vec![*lo], vec![*hi]),
            Region::Box { lo, hi } => (lo.clone(), hi.clone()),
            Region::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    /// Distance travelled from an interior `point` along `sign * e_axis`
    /// before hitting the boundary.
    pub fn ray_exit_distance(&self, point: &[f64], axis: usize, sign: f64) -> f64 {
        match self {
            Region::Interval { lo, hi } => {
                if sign > 0.0 {
                    hi - point[0]
                } else {
                    point[0] - lo
                }
            }
            Region::Box { lo, hi } => {
                if sign > 0.0 {
                    hi[axis] - point[axis]
                } else {
                    point[axis] - lo[axis]
                }
            }
            Region::Ball { center, radius } => {
                // |q + s*sign*e|^2 = R^2 with q = point - center, s > 0
                let q_axis = point[axis] - center[axis];
                let q2 = sq_dist(point, center);
                let disc = (q_axis * q_axis - q2 + radius * radius).max(0.0);
                -sign * q_axis + disc.sqrt()
            }
        }
    }

    /// Fraction `theta` in (0, 1] at which the segment from the interior
    /// point `from` to the non-interior point `to` first meets the boundary.
    pub fn segment_crossing(&self, from: &[f64], to: &[f64]) -> f64 {
        let theta = match self {
            Region::Interval { lo, hi } => {
                let (a, b) = (from[0], to[0]);
                if b >= *hi {
                    (hi - a) / (b - a)
                } else {
                    (lo - a) / (b - a)
                }
            }
            Region::Box { lo, hi } => {
                let mut theta = 1.0f64;
                for j in 0..from.len() {
                    let (a, b) = (from[j], to[j]);
                    if b >= hi[j] {
                        theta = theta.min((hi[j] - a) / (b - a));
                    }
                    if b <= lo[j] {
                        theta = theta.min((lo[j] - a) / (b - a));
                    }
                }
                theta
            }
            Region::Ball { center, radius } => {
                // |q + t*w|^2 = R^2, q inside => unique root in (0, 1]
                let mut qw = 0.0;
                let mut ww = 0.0;
                let mut qq = 0.0;
                for j in 0..from.len() {
                    let q = from[j] - center[j];
                    let w = to[j] - from[j];
                    qw += q * w;
                    ww += w * w;
                    qq += q * q;
                }
                if ww == 0.0 {
                    1.0
                } else {
                    let c = qq - radius * radius;
                    let disc = (qw * qw - ww * c).max(0.0);
                    // numerically stable positive root of ww t^2 + 2 qw t + c = 0
                    if qw >= 0.0 {
                        -c / (qw + disc.sqrt())
                    } else {
                        (-qw + disc.sqrt()) / ww
                    }
                }
            }
        };
        if theta.is_finite() {
            theta.clamp(0.0, 1.0)
        } else {
            1.0
        }
    }

    /// Moves a point lying on or very near the boundary onto it, guaranteeing
    /// that the result is not strictly interior.
    pub fn snap_to_boundary(&self, point: &mut [f64]) {
        match self {
            Region::Interval { lo, hi } => {
                point[0] = if (point[0] - lo).abs() <= (hi - point[0]).abs() {
                    *lo
                } else {
                    *hi
                };
            }
            Region::Box { lo, hi } => {
                if !self.contains_unchecked(point) {
                    return;
                }
                // closest face
                let mut best = (f64::INFINITY, 0usize, 0.0);
                for j in 0..point.len() {
                    let dl = point[j] - lo[j];
                    let dh = hi[j] - point[j];
                    if dl < best.0 {
                        best = (dl, j, lo[j]);
                    }
                    if dh < best.0 {
                        best = (dh, j, hi[j]);
                    }
                }
                point[best.1] = best.2;
            }
            Region::Ball { center, radius } => {
                let norm = sq_dist(point, center).sqrt();
                if norm == 0.0 {
                    point.copy_from_slice(center);
                    point[0] += radius;
                    return;
                }
                let mut scale = radius / norm;
                loop {
                    for j in 0..point.len() {
                        point[j] = center[j] + (point[j] - center[j]) * scale;
                    }
                    if !self.contains_unchecked(point) {
                        break;
                    }
                    scale = 1.0 + 4.0 * f64::EPSILON;
                }
            }
        }
    }

    /// Outward unit normal at a boundary point. For boxes the normal of the
    /// nearest face is returned.
    pub fn outward_normal(&self, point: &[f64]) -> Vec<f64> {
        match self {
            Region::Interval { lo, hi } => {
                if (point[0] - lo).abs() <= (hi - point[0]).abs() {
                    vec![-1.0]
                } else {
                    vec![1.0]
                }
            }
            Region::Box { lo, hi } => {
                let mut best = (f64::INFINITY, 0usize, 0.0);
                for j in 0..point.len() {
                    let dl = (point[j] - lo[j]).abs();
                    let dh = (hi[j] - point[j]).abs();
                    if dl < best.0 {
                        best = (dl, j, -1.0);
                    }
                    if dh < best.0 {
                        best = (dh, j, 1.0);
                    }
                }
                let mut n = vec![0.0; point.len()];
                n[best.1] = best.2;
                n
            }
            Region::Ball { center, .. } => {
                let norm = sq_dist(point, center).sqrt();
                point.iter().zip(center).map(|(p, c)| (p - c) / norm).collect()
            }
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn box_boundary_distance(p: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let inside = p.iter().zip(lo.iter().zip(hi)).all(|(x, (l, h))| x > l && x < h);
    if inside {
        p.iter()
            .zip(lo.iter().zip(hi))
            .map(|(x, (l, h))| (x - l).min(h - x))
            .fold(f64::INFINITY, f64::min)
    } else {
        // distance to the closed box from outside, zero on the boundary
        p.iter()
            .zip(lo.iter().zip(hi))
            .map(|(x, (l, h))| {
                let e = (l - x).max(0.0).max(x - h);
                e * e
            })
            .sum::<f64>()
            .sqrt()
    }
}
