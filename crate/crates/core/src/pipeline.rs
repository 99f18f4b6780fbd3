//! The four commands of the `exitbound` binary, as library functions.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;

use crate::bound::{verify_bound, BoundError, BoundReport, VerifyContext};
use crate::output;
use crate::pde::{
    coarser_resolution, solve_mean_exit, sup_with_refinement, FieldError, MeanExitField, PdeError, PdeOptions,
    SupReport, MIN_RESOLUTION,
};
use crate::scenario::{Scenario, ScenarioError};
use crate::sde::{single_exit_times, CoupledPairOutcome, PairSimulator, PathConfig, SdeError};
use crate::stats::MeanSe;

/// Differences below this fraction of max|v| count as roundoff: the
/// discretization reproduces the solution exactly.
pub const EXACT_RELATIVE_TOLERANCE: f64 = 1e-9;

/// Default censoring horizon in units of the larger mean exit time at the
/// starts.
pub const HORIZON_FACTOR: f64 = 50.0;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("pde: {0}")]
    Pde(#[from] PdeError),
    #[error("sde: {0}")]
    Sde(#[from] SdeError),
    #[error("bound: {0}")]
    Bound(#[from] BoundError),
    #[error("field: {0}")]
    Field(#[from] FieldError),
    #[error("convergence: {0}")]
    Convergence(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit status: 3 for invalid input, 4 for numerical failure,
    /// 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Scenario(_) => 3,
            PipelineError::Sde(SdeError::Config(_) | SdeError::StartOutside { .. }) => 3,
            PipelineError::Bound(BoundError::Mismatch(_)) => 3,
            PipelineError::Io { .. } => 1,
            _ => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SolvePde,
    Simulate,
    VerifyBound,
    Convergence,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolvePde => "solve-pde",
            Command::Simulate => "simulate",
            Command::VerifyBound => "verify-bound",
            Command::Convergence => "convergence",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Replaces `mc.base_seed` when set.
    pub seed: Option<u64>,
}

/// Result of a command: the exit status, a short text summary and the
/// files written.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub exit_code: i32,
    pub text: String,
    pub files: Vec<PathBuf>,
}

fn pde_options(scn: &Scenario) -> PdeOptions {
    PdeOptions {
        max_nodes: scn.grid.max_nodes,
        ..PdeOptions::default()
    }
}

fn same_coefficients(scn: &Scenario) -> bool {
    let (a, b) = (scn.spec(0), scn.spec(1));
    a.drift_exprs() == b.drift_exprs() && a.diffusion_exprs() == b.diffusion_exprs() && a.d() == b.d()
}

/// Mean exit time fields of both processes at `resolution`. Identical
/// coefficients are solved once.
pub fn solve_fields_at(scn: &Scenario, resolution: usize) -> Result<[MeanExitField; 2], PdeError> {
    let opts = pde_options(scn);
    let f1 = solve_mean_exit(&scn.region, scn.spec(0), resolution, &opts)?;
    let f2 = if same_coefficients(scn) {
        f1.clone()
    } else {
        solve_mean_exit(&scn.region, scn.spec(1), resolution, &opts)?
    };
    Ok([f1, f2])
}

pub fn solve_fields(scn: &Scenario) -> Result<[MeanExitField; 2], PdeError> {
    solve_fields_at(scn, scn.grid.resolution)
}

/// Sup-gradient diagnostics on the working grid and the next coarser one.
pub fn sup_refinement(scn: &Scenario, fields: &[MeanExitField; 2]) -> Result<[SupReport; 2], PdeError> {
    let opts = pde_options(scn);
    let s1 = sup_with_refinement(&fields[0], scn.spec(0), &opts)?;
    let s2 = if same_coefficients(scn) {
        s1
    } else {
        sup_with_refinement(&fields[1], scn.spec(1), &opts)?
    };
    Ok([s1, s2])
}

fn horizon(dt: f64, scale: f64, fallback: f64) -> f64 {
    let t = if scale > 0.0 { scale } else { fallback.max(1.0) };
    (HORIZON_FACTOR * t).max(10.0 * dt)
}

/// Path configuration used by `simulate` and `verify-bound`. Without an
/// explicit `t_max` the horizon is `50 max(v1(a1), v2(a2))`.
pub fn path_config(scn: &Scenario, fields: &[MeanExitField; 2], seed: Option<u64>) -> Result<PathConfig, FieldError> {
    let t_max = match scn.mc.t_max {
        Some(t) => t,
        None => {
            let v1 = fields[0].value_at(scn.start(0))?;
            let v2 = fields[1].value_at(scn.start(1))?;
            let fallback = fields[0].max_value().max(fields[1].max_value());
            horizon(scn.mc.dt, v1.max(v2), fallback)
        }
    };
    Ok(PathConfig {
        dt: scn.mc.dt,
        t_max,
        bridge_correction: scn.mc.bridge_correction,
        base_seed: seed.unwrap_or(scn.mc.base_seed),
        coupling: scn.mc.coupling,
    })
}

pub fn simulate(scn: &Scenario, config: PathConfig, workers: usize) -> Result<Vec<CoupledPairOutcome>, SdeError> {
    let sim = PairSimulator::new(
        scn.spec(0),
        scn.spec(1),
        scn.start(0),
        scn.start(1),
        &scn.region,
        config,
    )?;
    sim.run(scn.mc.n_replicates, workers)
}

/// Everything produced by a `verify-bound` run.
#[derive(Debug, Clone)]
pub struct Verification {
    pub fields: [MeanExitField; 2],
    pub config: PathConfig,
    pub outcomes: Vec<CoupledPairOutcome>,
    pub report: BoundReport,
}

pub fn verify(scn: &Scenario, workers: usize, seed: Option<u64>) -> Result<Verification, PipelineError> {
    let fields = solve_fields(scn)?;
    let sup = sup_refinement(scn, &fields)?;
    let config = path_config(scn, &fields, seed)?;
    let outcomes = simulate(scn, config, workers)?;
    let ctx = VerifyContext {
        dt: config.dt,
        a1: scn.start(0).to_vec(),
        a2: scn.start(1).to_vec(),
        sup_refinement: Some(sup),
    };
    let report = verify_bound(&fields[0], &fields[1], &outcomes, &ctx)?;
    Ok(Verification {
        fields,
        config,
        outcomes,
        report,
    })
}

/// Self-convergence of one field over nested grids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpatialStudy {
    pub process: usize,
    pub label: String,
    pub resolutions: Vec<usize>,
    pub h: Vec<f64>,
    pub max_value: Vec<f64>,
    pub sup_grad_norm: Vec<f64>,
    /// `max |v_h - v_{2h}|` over the nodes of the coarser grid, one entry
    /// per consecutive pair of levels.
    pub differences: Vec<f64>,
    /// Least-squares slope of log difference against log h.
    pub fitted_order: Option<f64>,
    /// Differences are at roundoff level.
    pub exact: bool,
    pub pass: bool,
}

/// Euler bias of the mean exit time against the grid solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemporalStudy {
    pub process: usize,
    pub label: String,
    pub reference: f64,
    pub dt: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub bias: Vec<f64>,
    pub fitted_order: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub scenario: String,
    pub min_spatial_order: f64,
    pub min_time_order: f64,
    pub spatial: Vec<SpatialStudy>,
    pub temporal: Vec<TemporalStudy>,
    pub pass: bool,
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn fitted_order(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(sx, sy), (a, b)| (sx + a / m, sy + b / m));
    let sxx: f64 = pts.iter().map(|(a, _)| (a - mx) * (a - mx)).sum();
    let sxy: f64 = pts.iter().map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn distinct_processes(scn: &Scenario) -> Vec<usize> {
    if same_coefficients(scn) {
        vec![0]
    } else {
        vec![0, 1]
    }
}

pub fn spatial_study(scn: &Scenario, process: usize) -> Result<SpatialStudy, PipelineError> {
    let opts = pde_options(scn);
    let mut resolutions = vec![scn.grid.resolution];
    while resolutions.len() < scn.grid.refinements {
        let next = coarser_resolution(*resolutions.last().unwrap());
        if next < MIN_RESOLUTION {
            return Err(PipelineError::Convergence(format!(
                "grid.resolution {} is too small for {} refinement levels",
                scn.grid.resolution, scn.grid.refinements
            )));
        }
        resolutions.push(next);
    }
    let fields = resolutions
        .iter()
        .map(|&r| solve_mean_exit(&scn.region, scn.spec(process), r, &opts))
        .collect::<Result<Vec<_>, _>>()?;
    let mut differences = Vec::new();
    for pair in fields.windows(2) {
        let (fine, coarse) = (&pair[0], &pair[1]);
        let grid = coarse.grid();
        let mut coord = vec![0.0; grid.dim()];
        let mut diff = 0.0f64;
        for &node in grid.interior_nodes() {
            grid.coord_into(node, &mut coord);
            diff = diff.max((fine.value_at(&coord)? - coarse.values()[node]).abs());
        }
        differences.push(diff);
    }
    let h: Vec<f64> = fields.iter().map(|f| f.grid().max_spacing()).collect();
    let max_value: Vec<f64> = fields.iter().map(|f| f.max_value()).collect();
    let scale = max_value.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let exact = differences.iter().all(|d| *d <= EXACT_RELATIVE_TOLERANCE * scale);
    let fitted = fitted_order(&h[1..], &differences);
    let pass = exact || fitted.is_some_and(|p| p >= scn.convergence.min_spatial_order);
    Ok(SpatialStudy {
        process: process + 1,
        label: scn.spec(process).label.clone(),
        resolutions,
        h,
        max_value,
        sup_grad_norm: fields.iter().map(|f| f.sup_grad_norm()).collect(),
        differences,
        fitted_order: fitted,
        exact,
        pass,
    })
}

pub fn temporal_study(
    scn: &Scenario,
    process: usize,
    field: &MeanExitField,
    workers: usize,
    seed: Option<u64>,
) -> Result<TemporalStudy, PipelineError> {
    let conv = &scn.convergence;
    let start = scn.start(process);
    let reference = field.value_at(start)?;
    let mut study = TemporalStudy {
        process: process + 1,
        label: scn.spec(process).label.clone(),
        reference,
        dt: Vec::new(),
        mean: Vec::new(),
        se: Vec::new(),
        bias: Vec::new(),
        fitted_order: None,
        pass: false,
    };
    for level in 0..conv.dt_levels {
        let dt = conv.dt_coarse / 4f64.powi(level as i32);
        let config = PathConfig {
            dt,
            t_max: horizon(dt, reference, field.max_value()),
            bridge_correction: false,
            base_seed: seed.unwrap_or(scn.mc.base_seed),
            coupling: scn.mc.coupling,
        };
        let runs = single_exit_times(
            scn.spec(process),
            start,
            &scn.region,
            config,
            conv.dt_replicates,
            workers,
        )?;
        let times: Vec<f64> = runs.iter().filter(|(_, c)| !c).map(|(t, _)| *t).collect();
        if times.len() < runs.len() {
            return Err(PipelineError::Convergence(format!(
                "{} of {} exit-time replicates censored at dt = {dt}",
                runs.len() - times.len(),
                runs.len()
            )));
        }
        let m = MeanSe::from_slice(&times);
        study.dt.push(dt);
        study.mean.push(m.mean);
        study.se.push(m.se);
        study.bias.push(m.mean - reference);
    }
    let abs_bias: Vec<f64> = study.bias.iter().map(|b| b.abs()).collect();
    study.fitted_order = fitted_order(&study.dt, &abs_bias);
    study.pass = study.fitted_order.is_some_and(|p| p >= conv.min_time_order);
    Ok(study)
}

pub fn convergence(scn: &Scenario, workers: usize, seed: Option<u64>) -> Result<ConvergenceReport, PipelineError> {
    let fields = solve_fields(scn)?;
    let mut spatial = Vec::new();
    let mut temporal = Vec::new();
    for p in distinct_processes(scn) {
        spatial.push(spatial_study(scn, p)?);
        // a start on the boundary has no time bias to measure
        if fields[p].value_at(scn.start(p))? > 0.0 {
            temporal.push(temporal_study(scn, p, &fields[p], workers, seed)?);
        }
    }
    if same_coefficients(scn) && scn.start(0) != scn.start(1) && fields[1].value_at(scn.start(1))? > 0.0 {
        temporal.push(temporal_study(scn, 1, &fields[1], workers, seed)?);
    }
    let pass = spatial.iter().all(|s| s.pass) && temporal.iter().all(|t| t.pass);
    Ok(ConvergenceReport {
        scenario: scn.name.clone(),
        min_spatial_order: scn.convergence.min_spatial_order,
        min_time_order: scn.convergence.min_time_order,
        spatial,
        temporal,
        pass,
    })
}

/// Per-field metadata written next to the field table.
#[derive(Debug, Clone, Serialize)]
pub struct FieldMetadata<'a> {
    pub process: usize,
    pub label: &'a str,
    pub resolution: usize,
    pub spacing: &'a [f64],
    pub n_nodes: usize,
    pub n_interior: usize,
    pub solver: crate::pde::SolveStats,
    pub upwind_switches: usize,
    pub min_value: f64,
    pub max_value: f64,
    pub value_at_start: f64,
    pub sup_grad_norm: SupReport,
    pub ellipticity: &'a crate::pde::EllipticityReport,
}

#[derive(Debug, Clone, Serialize)]
struct RunMetadata<'a> {
    command: &'a str,
    scenario: &'a str,
    version: &'a str,
    workers: usize,
    base_seed: u64,
    started_unix: f64,
    elapsed_seconds: f64,
}

/// Output directory: `--out`, then `EXITBOUND_OUT`, then the scenario's
/// `output.directory`, then `out/<name>`.
pub fn resolve_out_dir(cli: Option<PathBuf>, env: Option<PathBuf>, scn: &Scenario) -> PathBuf {
    cli.or(env)
        .or_else(|| scn.output.directory.clone())
        .unwrap_or_else(|| Path::new("out").join(&scn.name))
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        let p = self.path(name);
        output::write_json(&p, value).map_err(|source| PipelineError::Io { path: p, source })
    }

    fn text(&mut self, name: &str, text: &str) -> Result<(), PipelineError> {
        let p = self.path(name);
        output::write_text(&p, text).map_err(|source| PipelineError::Io { path: p, source })
    }

    fn field(&mut self, name: &str, field: &MeanExitField) -> Result<(), PipelineError> {
        let p = self.path(name);
        output::write_field_csv(&p, field).map_err(|source| PipelineError::Io { path: p, source })
    }

    fn outcomes(&mut self, outcomes: &[CoupledPairOutcome]) -> Result<(), PipelineError> {
        let p = self.path("outcomes.csv");
        output::write_outcomes_csv(&p, outcomes).map_err(|source| PipelineError::Io { path: p, source })
    }
}

fn write_fields(
    w: &mut Writer,
    scn: &Scenario,
    fields: &[MeanExitField; 2],
    sup: &[SupReport; 2],
) -> Result<(), PipelineError> {
    for i in 0..2 {
        let f = &fields[i];
        let meta = FieldMetadata {
            process: i + 1,
            label: &scn.spec(i).label,
            resolution: f.grid().resolution(),
            spacing: f.grid().spacing(),
            n_nodes: f.grid().n_nodes(),
            n_interior: f.grid().n_interior(),
            solver: f.stats,
            upwind_switches: f.upwind_switches,
            min_value: f.min_value(),
            max_value: f.max_value(),
            value_at_start: f.value_at(scn.start(i))?,
            sup_grad_norm: sup[i],
            ellipticity: &scn.processes[i].ellipticity,
        };
        w.field(&format!("field_{}.csv", i + 1), f)?;
        w.json(&format!("field_{}.json", i + 1), &meta)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    config: PathConfig,
    n_replicates: usize,
    n_censored: usize,
    lhs_mean: f64,
    lhs_se: f64,
    displacement_mean: f64,
    displacement_se: f64,
    mean_t1: f64,
    mean_t2: f64,
}

fn summarize(config: PathConfig, outcomes: &[CoupledPairOutcome]) -> SimulationSummary {
    let kept: Vec<&CoupledPairOutcome> = outcomes.iter().filter(|o| !o.censored()).collect();
    let stat =
        |g: &dyn Fn(&CoupledPairOutcome) -> f64| MeanSe::from_slice(&kept.iter().map(|o| g(o)).collect::<Vec<_>>());
    let lhs = stat(&|o| (o.t1 - o.t2).abs());
    let disp = stat(&|o| o.displacement());
    SimulationSummary {
        config,
        n_replicates: outcomes.len(),
        n_censored: outcomes.len() - kept.len(),
        lhs_mean: lhs.mean,
        lhs_se: lhs.se,
        displacement_mean: disp.mean,
        displacement_se: disp.se,
        mean_t1: stat(&|o| o.t1).mean,
        mean_t2: stat(&|o| o.t2).mean,
    }
}

fn render_convergence(r: &ConvergenceReport) -> String {
    let mut s = format!("scenario {}\n", r.scenario);
    for sp in &r.spatial {
        s.push_str(&format!("  space, process {} ({})\n", sp.process, sp.label));
        for (k, d) in sp.differences.iter().enumerate() {
            s.push_str(&format!("    h = {:.4e}  max|v_h - v_2h| = {:.3e}\n", sp.h[k + 1], d));
        }
        let order = if sp.exact {
            "exact".to_string()
        } else {
            sp.fitted_order.map_or("n/a".into(), |p| format!("{p:.3}"))
        };
        s.push_str(&format!(
            "    order {order} [{}]\n",
            if sp.pass { "ok" } else { "FAIL" }
        ));
    }
    for t in &r.temporal {
        s.push_str(&format!(
            "  time, process {} ({}), v(a) = {:.6}\n",
            t.process, t.label, t.reference
        ));
        for k in 0..t.dt.len() {
            s.push_str(&format!(
                "    dt = {:.4e}  E T = {:.6} +- {:.6}  bias = {:.3e}\n",
                t.dt[k], t.mean[k], t.se[k], t.bias[k]
            ));
        }
        let order = t.fitted_order.map_or("n/a".into(), |p| format!("{p:.3}"));
        s.push_str(&format!("    order {order} [{}]\n", if t.pass { "ok" } else { "FAIL" }));
    }
    s
}

fn convergence_csv(r: &ConvergenceReport) -> String {
    let mut s = String::from("kind,process,level,step,value,se,difference\n");
    for sp in &r.spatial {
        for k in 0..sp.h.len() {
            let diff = if k == 0 {
                String::new()
            } else {
                sp.differences[k - 1].to_string()
            };
            s.push_str(&format!(
                "space,{},{},{},{},,{}\n",
                sp.process, k, sp.h[k], sp.max_value[k], diff
            ));
        }
    }
    for t in &r.temporal {
        for k in 0..t.dt.len() {
            s.push_str(&format!(
                "time,{},{},{},{},{},{}\n",
                t.process, k, t.dt[k], t.mean[k], t.se[k], t.bias[k]
            ));
        }
    }
    s
}

/// 0 when the bound holds, 2 when it is violated, 4 when the pathwise
/// decomposition fails (a numerical fault rather than a statistical one).
pub fn verdict_exit_code(report: &BoundReport) -> i32 {
    if !report.holds {
        2
    } else if !report.decomposition.pass {
        4
    } else {
        0
    }
}

/// Runs one command and writes its artifacts under `opts.out_dir`.
pub fn execute(command: Command, scn: &Scenario, opts: &RunOptions) -> Result<RunSummary, PipelineError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut w = Writer {
        dir: opts.out_dir.clone(),
        files: Vec::new(),
    };
    let (exit_code, text) = match command {
        Command::SolvePde => {
            let fields = solve_fields(scn)?;
            let sup = sup_refinement(scn, &fields)?;
            write_fields(&mut w, scn, &fields, &sup)?;
            let text = format!(
                "scenario {}\n  sup|dv1/dy| = {:.6} (coarse {:.6})\n  sup|dv2/dy| = {:.6} (coarse {:.6})\n",
                scn.name, sup[0].fine, sup[0].coarse, sup[1].fine, sup[1].coarse
            );
            (0, text)
        }
        Command::Simulate => {
            let fields = solve_fields(scn)?;
            let config = path_config(scn, &fields, opts.seed)?;
            let outcomes = simulate(scn, config, opts.workers)?;
            w.outcomes(&outcomes)?;
            let summary = summarize(config, &outcomes);
            w.json("simulation.json", &summary)?;
            let text = format!(
                "scenario {}\n  E|T1-T2| = {:.6} +- {:.6}\n  E|y1(T~)-y2(T~)| = {:.6} +- {:.6}\n  censored {} of {}\n",
                scn.name,
                summary.lhs_mean,
                summary.lhs_se,
                summary.displacement_mean,
                summary.displacement_se,
                summary.n_censored,
                summary.n_replicates
            );
            (0, text)
        }
        Command::VerifyBound => {
            let v = verify(scn, opts.workers, opts.seed)?;
            if scn.output.dump_replicates {
                w.outcomes(&v.outcomes)?;
            }
            w.json("bound_report.json", &v.report)?;
            let text = output::render_report(&scn.name, &v.report);
            w.text("bound_report.txt", &text)?;
            (verdict_exit_code(&v.report), text)
        }
        Command::Convergence => {
            let r = convergence(scn, opts.workers, opts.seed)?;
            w.json("convergence.json", &r)?;
            let p = w.path("convergence.csv");
            output::write_text(&p, &convergence_csv(&r)).map_err(|source| PipelineError::Io { path: p, source })?;
            (if r.pass { 0 } else { 4 }, render_convergence(&r))
        }
    };
    let meta = RunMetadata {
        command: command.name(),
        scenario: &scn.name,
        version: env!("CARGO_PKG_VERSION"),
        workers: opts.workers,
        base_seed: opts.seed.unwrap_or(scn.mc.base_seed),
        started_unix: started
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0),
        elapsed_seconds: clock.elapsed().as_secs_f64(),
    };
    w.json("run_metadata.json", &meta)?;
    Ok(RunSummary {
        exit_code,
        text,
        files: w.files,
    })
}
