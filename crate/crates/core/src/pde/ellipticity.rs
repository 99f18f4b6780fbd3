use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use super::diffusion::DiffusionSpec;
use crate::expr::EvalError;
use crate::geometry::Region;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EllipticityError {
    #[error("at least 100 samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("lambda_min must be positive, got {0}")]
    BadThreshold(f64),
    #[error("dimension mismatch: region {region}, process {spec}")]
    DimensionMismatch { region: usize, spec: usize },
    #[error("could not place {0} sample points inside the region")]
    Sampling(usize),
    #[error("coefficient evaluation failed at {point:?}: {source}")]
    Coefficient {
        point: Vec<f64>,
        #[source]
        source: EvalError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipticityReport {
    pub min_eigenvalue: f64,
    pub argmin: Vec<f64>,
    pub n_samples: usize,
    pub lambda_min: f64,
    pub pass: bool,
}

const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % b) as f64 * inv;
        i /= b;
        inv /= base as f64;
    }
    out
}

/// Smallest eigenvalue of a symmetric row-major n x n matrix.
pub fn min_eigenvalue(b: &[f64], n: usize) -> f64 {
    match n {
        1 => b[0],
        2 => {
            let (a, c, off) = (b[0], b[3], b[1]);
            let half_gap = (0.25 * (a - c) * (a - c) + off * off).sqrt();
            0.5 * (a + c) - half_gap
        }
        _ => {
            let m = DMatrix::from_row_slice(n, n, b);
            SymmetricEigen::new(m).eigenvalues.min()
        }
    }
}

/// Samples `b = beta beta^T` at quasi-random (Halton) interior points and
/// reports the smallest eigenvalue seen.
pub fn check_ellipticity(
    spec: &DiffusionSpec,
    region: &Region,
    n_samples: usize,
    lambda_min: f64,
) -> Result<EllipticityReport, EllipticityError> {
    if n_samples < 100 {
        return Err(EllipticityError::TooFewSamples(n_samples));
    }
    if !(lambda_min > 0.0) {
        return Err(EllipticityError::BadThreshold(lambda_min));
    }
    let n = region.dim();
    if spec.n() != n {
        return Err(EllipticityError::DimensionMismatch {
            region: n,
            spec: spec.n(),
        });
    }
    let (lo, hi) = region.bounding_box();
    let mut min = f64::INFINITY;
    let mut argmin = vec![0.0; n];
    let mut taken = 0;
    let mut p = vec![0.0; n];
    let mut index = 1u64;
    let max_attempts = 1000 * n_samples as u64;
    while taken < n_samples {
        if index > max_attempts {
            return Err(EllipticityError::Sampling(n_samples));
        }
        for j in 0..n {
            let u = radical_inverse(index, PRIMES[j % PRIMES.len()]);
            p[j] = lo[j] + u * (hi[j] - lo[j]);
        }
        index += 1;
        if !region.contains_unchecked(&p) {
            continue;
        }
        taken += 1;
        let b = spec.b_matrix(&p).map_err(|source| EllipticityError::Coefficient {
            point: p.clone(),
            source,
        })?;
        let lambda = min_eigenvalue(&b, n);
        if lambda < min {
            min = lambda;
            argmin.copy_from_slice(&p);
        }
    }
    Ok(EllipticityReport {
        min_eigenvalue: min,
        argmin,
        n_samples,
        lambda_min,
        pass: min >= lambda_min,
    })
}
