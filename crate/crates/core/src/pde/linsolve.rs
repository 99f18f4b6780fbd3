//! Linear solvers for the assembled Dirichlet systems: banded LU with
//! partial pivoting for moderate sizes, Jacobi-preconditioned BiCGSTAB
//! otherwise.

use serde::Serialize;
use thiserror::Error;

use super::assemble::LinearSystem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("matrix is singular (zero pivot in column {0})")]
    Singular(usize),
    #[error("solver did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    BandedLu,
    Bicgstab,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative residual target `||A v - rhs|| / ||rhs||`.
    pub tolerance: f64,
    /// Largest system handled by the direct solver.
    pub direct_max_unknowns: usize,
    /// Largest band storage (in f64 entries) the direct solver may allocate.
    pub direct_max_band_entries: usize,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-10,
            direct_max_unknowns: 200_000,
            direct_max_band_entries: 60_000_000,
            max_iterations: 50_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveStats {
    pub method: SolverKind,
    pub iterations: usize,
    pub relative_residual: f64,
}

pub fn solve(system: &LinearSystem, opts: &SolverOptions) -> Result<(Vec<f64>, SolveStats), SolveError> {
    let n = system.n_rows();
    let (kl, ku) = bandwidths(system);
    let band_entries = n.saturating_mul(2 * kl + ku + 1);
    if n <= opts.direct_max_unknowns && band_entries <= opts.direct_max_band_entries {
        solve_direct(system, kl, ku, opts)
    } else {
        bicgstab(system, opts)
    }
}

fn bandwidths(system: &LinearSystem) -> (usize, usize) {
    let (mut kl, mut ku) = (0, 0);
    for r in 0..system.n_rows() {
        for (c, _) in system.row(r) {
            if c < r {
                kl = kl.max(r - c);
            } else {
                ku = ku.max(c - r);
            }
        }
    }
    (kl, ku)
}

pub fn solve_direct(
    system: &LinearSystem,
    kl: usize,
    ku: usize,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveStats), SolveError> {
    let lu = BandLu::factor(system, kl, ku)?;
    let mut x = lu.solve(&system.rhs);
    let mut residual = system.relative_residual(&x);
    let mut refinements = 0;
    let mut ax = vec![0.0; x.len()];
    while residual > opts.tolerance && refinements < 3 {
        system.matvec(&x, &mut ax);
        let r: Vec<f64> = system.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let dx = lu.solve(&r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        residual = system.relative_residual(&x);
        refinements += 1;
    }
    if residual > opts.tolerance || !residual.is_finite() {
        return Err(SolveError::NotConverged {
            residual,
            iterations: refinements,
        });
    }
    Ok((
        x,
        SolveStats {
            method: SolverKind::BandedLu,
            iterations: refinements,
            relative_residual: residual,
        },
    ))
}

/// LU factors of a banded matrix, LAPACK `gbtf2` style: row `i` is stored
/// as a window of `2 kl + ku + 1` columns starting at column `i - kl`, which
/// leaves room for the fill created by row interchanges.
struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    band: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn factor(system: &LinearSystem, kl: usize, ku: usize) -> Result<BandLu, SolveError> {
        let n = system.n_rows();
        let width = 2 * kl + ku + 1;
        let mut lu = BandLu {
            n,
            kl,
            ku,
            width,
            band: vec![0.0; n * width],
            pivots: vec![0; n],
        };
        for r in 0..n {
            for (c, v) in system.row(r) {
                let idx = lu.at(r, c);
                lu.band[idx] = v;
            }
        }
        let reach = kl + ku;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + reach).min(n - 1);
            let mut p = k;
            let mut best = lu.band[lu.at(k, k)].abs();
            for i in (k + 1)..=last_row {
                let v = lu.band[lu.at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(SolveError::Singular(k));
            }
            lu.pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (lu.at(k, j), lu.at(p, j));
                    lu.band.swap(a, b);
                }
            }
            let pivot = lu.band[lu.at(k, k)];
            let len = last_col - k;
            let src = lu.at(k, k + 1);
            for i in (k + 1)..=last_row {
                let li = lu.at(i, k);
                let l = lu.band[li] / pivot;
                if l == 0.0 {
                    continue;
                }
                lu.band[li] = l;
                let dst = lu.at(i, k + 1);
                // rows are disjoint windows of the band buffer
                let (head, tail) = lu.band.split_at_mut(dst);
                let pivot_row = &head[src..src + len];
                for (t, s) in tail[..len].iter_mut().zip(pivot_row) {
                    *t -= l * s;
                }
            }
        }
        Ok(lu)
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = rhs.to_vec();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            if xk != 0.0 {
                for i in (k + 1)..=(k + self.kl).min(n - 1) {
                    x[i] -= self.band[self.at(i, k)] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let last = (k + self.kl + self.ku).min(n - 1);
            let row = &self.band[self.at(k, k)..=self.at(k, last)];
            let s: f64 = row[1..].iter().zip(&x[k + 1..=last]).map(|(a, b)| a * b).sum();
            x[k] = (x[k] - s) / row[0];
        }
        x
    }
}

/// BiCGSTAB with Jacobi preconditioning.
pub fn bicgstab(system: &LinearSystem, opts: &SolverOptions) -> Result<(Vec<f64>, SolveStats), SolveError> {
    let n = system.n_rows();
    let inv_diag: Vec<f64> = system
        .diagonal()
        .iter()
        .map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let norm_b = dot(&system.rhs, &system.rhs).sqrt();
    let mut x = vec![0.0; n];
    if norm_b == 0.0 {
        return Ok((
            x,
            SolveStats {
                method: SolverKind::Bicgstab,
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let mut r = system.rhs.clone();
    let r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
    let mut residual = 1.0;

    for it in 1..=opts.max_iterations {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = inv_diag[i] * p[i];
        }
        system.matvec(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if dot(&s, &s).sqrt() / norm_b <= opts.tolerance {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            residual = system.relative_residual(&x);
            if residual <= opts.tolerance {
                return Ok((x, stats(it, residual)));
            }
            r = system.rhs.clone();
            system.matvec(&x, &mut t);
            for i in 0..n {
                r[i] -= t[i];
            }
            continue;
        }
        for i in 0..n {
            z[i] = inv_diag[i] * s[i];
        }
        system.matvec(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        residual = dot(&r, &r).sqrt() / norm_b;
        if residual <= opts.tolerance {
            let true_res = system.relative_residual(&x);
            if true_res <= opts.tolerance {
                return Ok((x, stats(it, true_res)));
            }
            residual = true_res;
        }
        if omega == 0.0 || !residual.is_finite() {
            return Err(SolveError::NotConverged {
                residual,
                iterations: it,
            });
        }
    }
    Err(SolveError::NotConverged {
        residual,
        iterations: opts.max_iterations,
    })
}

fn stats(iterations: usize, relative_residual: f64) -> SolveStats {
    SolveStats {
        method: SolverKind::Bicgstab,
        iterations,
        relative_residual,
    }
}
