//! Estimators for both sides of
//! `E|T1 - T2| <= max_i sup|dv_i/dy| * E|y1(T~) - y2(T~)|`
//! and consistency checks of the identities used to derive it:
//!
//! * the indicator split `E|T1-T2| = E{e1 (T1-T2)} + E{e2 (T2-T1)}`, which
//!   holds path by path;
//! * the stopped Dynkin identity `E{e1 (T1-T2)} = E{e1 v1(y1(T~))}` (and
//!   its mirror image), which uses `v1 = 0` at the exit position of chain 1;
//! * the classical point identity `E T_i = v_i(a_i)`.

use serde::Serialize;
use thiserror::Error;

use crate::pde::{FieldError, MeanExitField, SupReport};
use crate::sde::CoupledPairOutcome;
use crate::stats::{CompensatedSum, MeanSe};

pub const MIN_UNCENSORED: usize = 100;
pub const MAX_CENSORED_FRACTION: f64 = 0.01;
/// Half-width of the verdict tolerance, in combined standard errors.
pub const SIGMA_MULTIPLIER: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("only {got} uncensored replicates, at least {MIN_UNCENSORED} are required")]
    TooFewReplicates { got: usize },
    #[error("{censored} of {total} replicates censored, above the {limit} fraction cap")]
    TooManyCensored { censored: usize, total: usize, limit: f64 },
    #[error("mismatch between fields and outcomes: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

fn uncensored(outcomes: &[CoupledPairOutcome]) -> Result<Vec<&CoupledPairOutcome>, BoundError> {
    let kept: Vec<_> = outcomes.iter().filter(|o| !o.censored()).collect();
    if kept.len() < MIN_UNCENSORED {
        return Err(BoundError::TooFewReplicates { got: kept.len() });
    }
    Ok(kept)
}

/// Mean and standard error of |T1 - T2| over uncensored replicates.
pub fn estimate_lhs(outcomes: &[CoupledPairOutcome]) -> Result<MeanSe, BoundError> {
    let xs: Vec<f64> = uncensored(outcomes)?.iter().map(|o| (o.t1 - o.t2).abs()).collect();
    Ok(MeanSe::from_slice(&xs))
}

/// Mean and standard error of |y1(T~) - y2(T~)| over uncensored replicates.
pub fn estimate_displacement(outcomes: &[CoupledPairOutcome]) -> Result<MeanSe, BoundError> {
    let xs: Vec<f64> = uncensored(outcomes)?.iter().map(|o| o.displacement()).collect();
    Ok(MeanSe::from_slice(&xs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionCheck {
    pub sum_e1_term: f64,
    pub sum_e2_term: f64,
    pub sum_abs: f64,
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Sums `e1 (T1-T2)`, `e2 (T2-T1)` and `|T1-T2|` over uncensored replicates
/// in the same order and compares.
pub fn decomposition_check(outcomes: &[CoupledPairOutcome]) -> DecompositionCheck {
    let mut s1 = CompensatedSum::new();
    let mut s2 = CompensatedSum::new();
    let mut sa = CompensatedSum::new();
    let mut n = 0usize;
    let mut t_scale = 0.0f64;
    for o in outcomes.iter().filter(|o| !o.censored()) {
        s1.add(o.e1 as f64 * (o.t1 - o.t2));
        s2.add(o.e2 as f64 * (o.t2 - o.t1));
        sa.add((o.t1 - o.t2).abs());
        n += 1;
        t_scale = t_scale.max(o.t1).max(o.t2);
    }
    let residual = (s1.value() + s2.value() - sa.value()).abs();
    let threshold = 1e-12 * n as f64 * t_scale;
    DecompositionCheck {
        sum_e1_term: s1.value(),
        sum_e2_term: s2.value(),
        sum_abs: sa.value(),
        residual,
        threshold,
        pass: residual <= threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Process {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DynkinCheck {
    /// Ê{e_i (T_i - T_j)}
    pub time_term: f64,
    /// Ê{e_i v_i(y_i(T~))}
    pub field_term: f64,
    pub residual: f64,
    pub se: f64,
    pub allowance: f64,
    pub pass: bool,
}

/// Stopped Dynkin identity for one process of the pair. `allowance` is the
/// discretization slack added to `3 SE`.
pub fn dynkin_check(
    field: &MeanExitField,
    outcomes: &[CoupledPairOutcome],
    process: Process,
    allowance: f64,
) -> Result<DynkinCheck, BoundError> {
    let kept = uncensored(outcomes)?;
    let mut time_terms = Vec::with_capacity(kept.len());
    let mut field_terms = Vec::with_capacity(kept.len());
    let mut diffs = Vec::with_capacity(kept.len());
    for o in kept {
        let (e, dt, y) = match process {
            Process::First => (o.e1, o.t1 - o.t2, &o.y1_at_tilde),
            Process::Second => (o.e2, o.t2 - o.t1, &o.y2_at_tilde),
        };
        let (a, b) = if e == 1 { (dt, field.value_at(y)?) } else { (0.0, 0.0) };
        time_terms.push(a);
        field_terms.push(b);
        diffs.push(a - b);
    }
    let time_term = MeanSe::from_slice(&time_terms).mean;
    let field_term = MeanSe::from_slice(&field_terms).mean;
    let d = MeanSe::from_slice(&diffs);
    let residual = (time_term - field_term).abs();
    Ok(DynkinCheck {
        time_term,
        field_term,
        residual,
        se: d.se,
        allowance,
        pass: residual <= SIGMA_MULTIPLIER * d.se + allowance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointCheck {
    pub mc_mean: f64,
    pub mc_se: f64,
    pub pde_value: f64,
    pub residual: f64,
    pub allowance: f64,
    pub pass: bool,
}

/// `Ê T_i` against `v_i(a_i)`.
pub fn dynkin_point_check(
    field: &MeanExitField,
    start: &[f64],
    outcomes: &[CoupledPairOutcome],
    process: Process,
    allowance: f64,
) -> Result<PointCheck, BoundError> {
    let times: Vec<f64> = uncensored(outcomes)?
        .iter()
        .map(|o| match process {
            Process::First => o.t1,
            Process::Second => o.t2,
        })
        .collect();
    let m = MeanSe::from_slice(&times);
    let pde_value = field.value_at(start)?;
    let residual = (m.mean - pde_value).abs();
    Ok(PointCheck {
        mc_mean: m.mean,
        mc_se: m.se,
        pde_value,
        residual,
        allowance,
        pass: residual <= SIGMA_MULTIPLIER * m.se + allowance,
    })
}

/// Inputs to [`verify_bound`] beyond the fields and outcomes.
#[derive(Debug, Clone)]
pub struct VerifyContext {
    pub dt: f64,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    /// Two-refinement sup diagnostics per process, when available.
    pub sup_refinement: Option<[SupReport; 2]>,
}

/// Everything measured about one scenario. Key names are part of the
/// output format.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub lhs_mean: f64,
    pub lhs_se: f64,
    pub lip_factor: f64,
    pub sup_grad_norm_1: f64,
    pub sup_grad_norm_2: f64,
    pub sup_refinement: Option<[SupReport; 2]>,
    pub displacement_mean: f64,
    pub displacement_se: f64,
    pub rhs_mean: f64,
    pub rhs_se: f64,
    pub holds: bool,
    pub margin: f64,
    pub decomposition_residual: f64,
    pub decomposition: DecompositionCheck,
    pub dynkin_residual_1: f64,
    pub dynkin_residual_2: f64,
    pub dynkin_1: DynkinCheck,
    pub dynkin_2: DynkinCheck,
    pub dynkin_point_checks: [PointCheck; 2],
    pub discretization_allowance: f64,
    pub n_replicates: usize,
    pub n_censored: usize,
    pub mean_t1: f64,
    pub mean_t2: f64,
}

impl BoundReport {
    /// True when every consistency check passes, in addition to the bound.
    pub fn all_checks_pass(&self) -> bool {
        self.decomposition.pass
            && self.dynkin_1.pass
            && self.dynkin_2.pass
            && self.dynkin_point_checks.iter().all(|c| c.pass)
    }
}

/// Slack for the Dynkin checks: `(h^2 + sqrt(dt))` times the largest mean
/// exit time of the two fields.
pub fn discretization_allowance(h: f64, dt: f64, time_scale: f64) -> f64 {
    (h * h + dt.sqrt()) * time_scale
}

pub fn verify_bound(
    field1: &MeanExitField,
    field2: &MeanExitField,
    outcomes: &[CoupledPairOutcome],
    ctx: &VerifyContext,
) -> Result<BoundReport, BoundError> {
    let region = field1.grid().region();
    if region != field2.grid().region() {
        return Err(BoundError::Mismatch("fields were solved on different regions".into()));
    }
    let n = region.dim();
    if ctx.a1.len() != n || ctx.a2.len() != n {
        return Err(BoundError::Mismatch(
            "start points do not match the region dimension".into(),
        ));
    }
    if let Some(o) = outcomes
        .iter()
        .find(|o| o.y1_at_tilde.len() != n || o.y2_at_tilde.len() != n)
    {
        return Err(BoundError::Mismatch(format!(
            "replicate {} has state dimension {}, region has {n}",
            o.replicate,
            o.y1_at_tilde.len()
        )));
    }
    let total = outcomes.len();
    let censored = outcomes.iter().filter(|o| o.censored()).count();
    if total > 0 && censored as f64 > MAX_CENSORED_FRACTION * total as f64 {
        return Err(BoundError::TooManyCensored {
            censored,
            total,
            limit: MAX_CENSORED_FRACTION,
        });
    }

    let lhs = estimate_lhs(outcomes)?;
    let disp = estimate_displacement(outcomes)?;
    let sup1 = field1.sup_grad_norm();
    let sup2 = field2.sup_grad_norm();
    let lip = sup1.max(sup2);
    let rhs_mean = lip * disp.mean;
    let rhs_se = lip * disp.se;
    let combined = (lhs.se * lhs.se + rhs_se * rhs_se).sqrt();
    let holds = lhs.mean <= rhs_mean + SIGMA_MULTIPLIER * combined;

    let h = field1.grid().max_spacing().max(field2.grid().max_spacing());
    let time_scale = field1.max_value().max(field2.max_value());
    let allowance = discretization_allowance(h, ctx.dt, time_scale);
    let decomposition = decomposition_check(outcomes);
    let dynkin_1 = dynkin_check(field1, outcomes, Process::First, allowance)?;
    let dynkin_2 = dynkin_check(field2, outcomes, Process::Second, allowance)?;
    // the point identity is checked in absolute time units
    let point_allowance = h * h + ctx.dt.sqrt();
    let point_1 = dynkin_point_check(field1, &ctx.a1, outcomes, Process::First, point_allowance)?;
    let point_2 = dynkin_point_check(field2, &ctx.a2, outcomes, Process::Second, point_allowance)?;

    Ok(BoundReport {
        lhs_mean: lhs.mean,
        lhs_se: lhs.se,
        lip_factor: lip,
        sup_grad_norm_1: sup1,
        sup_grad_norm_2: sup2,
        sup_refinement: ctx.sup_refinement,
        displacement_mean: disp.mean,
        displacement_se: disp.se,
        rhs_mean,
        rhs_se,
        holds,
        margin: rhs_mean - lhs.mean,
        decomposition_residual: decomposition.residual,
        decomposition,
        dynkin_residual_1: dynkin_1.residual,
        dynkin_residual_2: dynkin_2.residual,
        dynkin_1,
        dynkin_2,
        dynkin_point_checks: [point_1, point_2],
        discretization_allowance: allowance,
        n_replicates: total,
        n_censored: censored,
        mean_t1: point_1.mc_mean,
        mean_t2: point_2.mc_mean,
    })
}
