use thiserror::Error;

use crate::expr::{EvalError, Expr, ParseError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("{field}: {source}")]
    Parse {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error("{0}")]
    Shape(String),
}

/// Coefficients of a homogeneous Itô diffusion `dy = f(y) dt + beta(y) dw`
/// with state dimension `n` and noise dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSpec {
    pub label: String,
    n: usize,
    d: usize,
    drift: Vec<Expr>,
    /// row-major n x d
    diffusion: Vec<Expr>,
}

impl DiffusionSpec {
    pub fn new(label: impl Into<String>, drift: Vec<Expr>, diffusion: Vec<Vec<Expr>>) -> Result<Self, SpecError> {
        let n = drift.len();
        if n == 0 {
            return Err(SpecError::Shape("drift must have at least one component".into()));
        }
        if diffusion.len() != n {
            return Err(SpecError::Shape(format!(
                "diffusion has {} rows, drift has {n} components",
                diffusion.len()
            )));
        }
        let d = diffusion[0].len();
        if d == 0 || diffusion.iter().any(|row| row.len() != d) {
            return Err(SpecError::Shape(
                "diffusion rows must be nonempty and of equal length".into(),
            ));
        }
        if drift.iter().chain(diffusion.iter().flatten()).any(|e| e.dim() != n) {
            return Err(SpecError::Shape(format!(
                "all coefficient expressions must be bound to dimension {n}"
            )));
        }
        Ok(DiffusionSpec {
            label: label.into(),
            n,
            d,
            drift,
            diffusion: diffusion.into_iter().flatten().collect(),
        })
    }

    /// Parses drift and diffusion expression strings.
    pub fn parse<S: AsRef<str>>(
        label: impl Into<String>,
        drift: &[S],
        diffusion: &[Vec<S>],
    ) -> Result<Self, SpecError> {
        let n = drift.len();
        let parse =
            |field: String, text: &str| Expr::parse(text, n).map_err(|source| SpecError::Parse { field, source });
        let drift = drift
            .iter()
            .enumerate()
            .map(|(j, s)| parse(format!("drift[{j}]"), s.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        let diffusion = diffusion
            .iter()
            .enumerate()
            .map(|(j, row)| {
                row.iter()
                    .enumerate()
                    .map(|(k, s)| parse(format!("diffusion[{j}][{k}]"), s.as_ref()))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        DiffusionSpec::new(label, drift, diffusion)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn drift_exprs(&self) -> &[Expr] {
        &self.drift
    }

    pub fn diffusion_exprs(&self) -> &[Expr] {
        &self.diffusion
    }

    #[inline]
    pub fn drift_into(&self, y: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        for (o, e) in out.iter_mut().zip(&self.drift) {
            *o = e.eval_unchecked(y)?;
        }
        Ok(())
    }

    /// Writes beta(y) row-major into `out` (length n*d).
    #[inline]
    pub fn diffusion_into(&self, y: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        for (o, e) in out.iter_mut().zip(&self.diffusion) {
            *o = e.eval_unchecked(y)?;
        }
        Ok(())
    }

    /// `b = beta beta^T` at `y`, row-major n x n.
    pub fn b_matrix(&self, y: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut beta = vec![0.0; self.n * self.d];
        self.diffusion_into(y, &mut beta)?;
        Ok(outer_gram(&beta, self.n, self.d))
    }

    /// beta when every diffusion entry is a constant expression.
    pub fn constant_diffusion(&self) -> Option<Vec<f64>> {
        self.diffusion.iter().map(Expr::as_constant).collect()
    }

    pub fn constant_drift(&self) -> Option<Vec<f64>> {
        self.drift.iter().map(Expr::as_constant).collect()
    }
}

pub(crate) fn outer_gram(beta: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut b = vec![0.0; n * n];
    for j in 0..n {
        for k in 0..=j {
            let s: f64 = (0..d).map(|m| beta[j * d + m] * beta[k * d + m]).sum();
            b[j * n + k] = s;
            b[k * n + j] = s;
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn b_is_beta_beta_transpose() {
        let spec = DiffusionSpec::parse("s", &["0", "0"], &[vec!["1", "0"], vec!["1", "1"]]).unwrap();
        assert_eq!(spec.b_matrix(&[0.0, 0.0]).unwrap(), vec![1.0, 1.0, 1.0, 2.0]);
        assert_eq!(spec.constant_diffusion(), Some(vec![1.0, 0.0, 1.0, 1.0]));
    }

    #[test]
    fn shape_errors() {
        assert!(DiffusionSpec::parse("s", &["0"], &[vec!["1"], vec!["1"]]).is_err());
        assert!(DiffusionSpec::parse("s", &["0", "0"], &[vec!["1", "0"], vec!["1"]]).is_err());
        let err = DiffusionSpec::parse("s", &["y2"], &[vec!["1"]]).unwrap_err();
        assert!(matches!(err, SpecError::Parse { ref field, .. } if field == "drift[0]"));
    }
}
