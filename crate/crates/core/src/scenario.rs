//! Scenario files: TOML documents declaring the region, the two processes,
//! grid and Monte Carlo settings. See `docs/formats.md` for the schema.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::geometry::Region;
use crate::pde::{check_ellipticity, DiffusionSpec, EllipticityError, EllipticityReport, MIN_RESOLUTION};
use crate::sde::Coupling;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("ellipticity check failed for {process}: smallest eigenvalue {} at {:?} is below {} (set checks.allow_degenerate = true to override)", report.min_eigenvalue, report.argmin, report.lambda_min)]
    Degenerate { process: String, report: EllipticityReport },
    #[error("ellipticity check for {process}: {source}")]
    Ellipticity {
        process: String,
        #[source]
        source: EllipticityError,
    },
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    region: Region,
    process1: RawProcess,
    process2: RawProcess,
    grid: RawGrid,
    mc: RawMc,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    checks: RawChecks,
    #[serde(default)]
    convergence: RawConvergence,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProcess {
    label: Option<String>,
    drift: Vec<String>,
    diffusion: Vec<Vec<String>>,
    start: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    resolution: usize,
    #[serde(default = "default_refinements")]
    refinements: usize,
    #[serde(default = "default_max_nodes")]
    max_nodes: usize,
}

fn default_refinements() -> usize {
    3
}

fn default_max_nodes() -> usize {
    4_000_000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMc {
    n_replicates: u64,
    dt: f64,
    t_max: Option<f64>,
    #[serde(default)]
    bridge_correction: bool,
    #[serde(default)]
    coupling: Coupling,
    #[serde(default)]
    base_seed: u64,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<PathBuf>,
    #[serde(default)]
    dump_replicates: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChecks {
    #[serde(default = "default_lambda_min")]
    lambda_min: f64,
    #[serde(default = "default_ellipticity_samples")]
    ellipticity_samples: usize,
    #[serde(default)]
    allow_degenerate: bool,
}

impl Default for RawChecks {
    fn default() -> Self {
        RawChecks {
            lambda_min: default_lambda_min(),
            ellipticity_samples: default_ellipticity_samples(),
            allow_degenerate: false,
        }
    }
}

fn default_lambda_min() -> f64 {
    1e-6
}

fn default_ellipticity_samples() -> usize {
    1000
}

#[derive(Debug, Deserialize, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSettings {
    #[serde(default = "default_dt_coarse")]
    pub dt_coarse: f64,
    #[serde(default = "default_dt_levels")]
    pub dt_levels: usize,
    #[serde(default = "default_dt_replicates")]
    pub dt_replicates: u64,
    #[serde(default = "default_spatial_order")]
    pub min_spatial_order: f64,
    #[serde(default = "default_time_order")]
    pub min_time_order: f64,
}

type RawConvergence = ConvergenceSettings;

impl Default for ConvergenceSettings {
    fn default() -> Self {
        ConvergenceSettings {
            dt_coarse: default_dt_coarse(),
            dt_levels: default_dt_levels(),
            dt_replicates: default_dt_replicates(),
            min_spatial_order: default_spatial_order(),
            min_time_order: default_time_order(),
        }
    }
}

fn default_dt_coarse() -> f64 {
    1e-2
}
fn default_dt_levels() -> usize {
    3
}
fn default_dt_replicates() -> u64 {
    40_000
}
fn default_spatial_order() -> f64 {
    1.9
}
fn default_time_order() -> f64 {
    0.4
}

#[derive(Debug, Clone)]
pub struct ProcessDecl {
    pub spec: DiffusionSpec,
    pub start: Vec<f64>,
    pub ellipticity: EllipticityReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSettings {
    pub resolution: usize,
    pub refinements: usize,
    pub max_nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSettings {
    pub n_replicates: u64,
    pub dt: f64,
    pub t_max: Option<f64>,
    pub bridge_correction: bool,
    pub coupling: Coupling,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub directory: Option<PathBuf>,
    pub dump_replicates: bool,
}

/// A fully validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub region: Region,
    pub processes: [ProcessDecl; 2],
    pub grid: GridSettings,
    pub mc: McSettings,
    pub output: OutputSettings,
    pub convergence: ConvergenceSettings,
    pub allow_degenerate: bool,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Scenario::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        raw.validate()
    }

    pub fn spec(&self, i: usize) -> &DiffusionSpec {
        &self.processes[i].spec
    }

    pub fn start(&self, i: usize) -> &[f64] {
        &self.processes[i].start
    }
}

impl RawScenario {
    fn validate(self) -> Result<Scenario, ScenarioError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        self.region.validate().map_err(|e| invalid("region", e.to_string()))?;
        let n = self.region.dim();

        let checks = self.checks;
        let mut processes = Vec::with_capacity(2);
        for (i, p) in [self.process1, self.process2].into_iter().enumerate() {
            let field = format!("process{}", i + 1);
            if p.drift.len() != n {
                return Err(invalid(
                    &format!("{field}.drift"),
                    format!("has {} components, region dimension is {n}", p.drift.len()),
                ));
            }
            if p.start.len() != n {
                return Err(invalid(
                    &format!("{field}.start"),
                    format!("has {} components, region dimension is {n}", p.start.len()),
                ));
            }
            if !self.region.contains_closed(&p.start).unwrap_or(false) {
                return Err(invalid(
                    &format!("{field}.start"),
                    format!("start outside closure: {:?}", p.start),
                ));
            }
            let label = p.label.unwrap_or_else(|| field.clone());
            let spec =
                DiffusionSpec::parse(label, &p.drift, &p.diffusion).map_err(|e| invalid(&field, e.to_string()))?;
            let report = check_ellipticity(&spec, &self.region, checks.ellipticity_samples, checks.lambda_min)
                .map_err(|source| ScenarioError::Ellipticity {
                    process: field.clone(),
                    source,
                })?;
            if !report.pass && !checks.allow_degenerate {
                return Err(ScenarioError::Degenerate { process: field, report });
            }
            processes.push(ProcessDecl {
                spec,
                start: p.start,
                ellipticity: report,
            });
        }
        let [p1, p2]: [ProcessDecl; 2] = processes.try_into().unwrap();

        let mc = self.mc;
        if mc.coupling == Coupling::Shared && p1.spec.d() != p2.spec.d() {
            return Err(invalid(
                "process2.diffusion",
                "shared coupling needs the same number of noise columns in both processes",
            ));
        }
        if !(mc.dt > 0.0 && mc.dt.is_finite()) {
            return Err(invalid("mc.dt", "must be positive"));
        }
        if let Some(t) = mc.t_max {
            if !(t > 0.0 && mc.dt <= t / 10.0) {
                return Err(invalid("mc.t_max", "must be positive and at least 10 dt"));
            }
        }
        if mc.n_replicates == 0 {
            return Err(invalid("mc.n_replicates", "must be positive"));
        }
        if mc.bridge_correction {
            for (i, p) in [&p1, &p2].into_iter().enumerate() {
                let ok = n == 1 && p.spec.d() == 1 && p.spec.constant_diffusion().is_some_and(|b| b[0] != 0.0);
                if !ok {
                    return Err(invalid(
                        "mc.bridge_correction",
                        format!(
                            "needs n = d = 1 and a nonzero constant diffusion; process{} does not qualify",
                            i + 1
                        ),
                    ));
                }
            }
        }
        let grid = self.grid;
        if grid.resolution < MIN_RESOLUTION {
            return Err(invalid("grid.resolution", format!("must be at least {MIN_RESOLUTION}")));
        }
        if grid.refinements < 2 {
            return Err(invalid("grid.refinements", "must be at least 2"));
        }
        let conv = self.convergence;
        if !(conv.dt_coarse > 0.0) || conv.dt_levels < 2 || conv.dt_replicates < 100 {
            return Err(invalid(
                "convergence",
                "needs dt_coarse > 0, dt_levels >= 2 and dt_replicates >= 100",
            ));
        }
        Ok(Scenario {
            name: self.name,
            region: self.region,
            processes: [p1, p2],
            grid: GridSettings {
                resolution: grid.resolution,
                refinements: grid.refinements,
                max_nodes: grid.max_nodes,
            },
            mc: McSettings {
                n_replicates: mc.n_replicates,
                dt: mc.dt,
                t_max: mc.t_max,
                bridge_correction: mc.bridge_correction,
                coupling: mc.coupling,
                base_seed: mc.base_seed,
            },
            output: OutputSettings {
                directory: self.output.directory,
                dump_replicates: self.output.dump_replicates,
            },
            convergence: conv,
            allow_degenerate: checks.allow_degenerate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE: &str = r#"
name = "example"
region = { kind = "interval", lo = 0.0, hi = 1.0 }

[process1]
drift = ["0"]
diffusion = [["1"]]
start = [0.3]

[process2]
drift = ["0"]
diffusion = [["1"]]
start = [0.7]

[grid]
resolution = 101

[mc]
n_replicates = 1000
dt = 1e-3
bridge_correction = true
base_seed = 5
"#;

    #[test]
    fn loads_example() {
        let s = Scenario::from_toml(EXAMPLE).unwrap();
        assert_eq!(s.region, Region::Interval { lo: 0.0, hi: 1.0 });
        assert_eq!(s.start(1), &[0.7]);
        assert!(s.processes[0].ellipticity.pass);
        assert_eq!(s.mc.coupling, Coupling::Shared);
        assert_eq!(s.grid.refinements, 3);
    }

    #[test]
    fn start_outside_closure() {
        let text = EXAMPLE.replace("start = [0.3]", "start = [1.5]");
        let err = Scenario::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("start outside closure"), "{err}");
        assert!(matches!(err, ScenarioError::Invalid { ref field, .. } if field == "process1.start"));
    }

    #[test]
    fn degenerate_diffusion_fails_unless_allowed() {
        let text = EXAMPLE
            .replacen("diffusion = [[\"1\"]]", "diffusion = [[\"0\"]]", 1)
            .replace("bridge_correction = true", "bridge_correction = false");
        assert!(matches!(
            Scenario::from_toml(&text).unwrap_err(),
            ScenarioError::Degenerate { .. }
        ));
        let allowed = format!("{text}\n[checks]\nallow_degenerate = true\n");
        assert!(Scenario::from_toml(&allowed).is_ok());
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = Scenario::from_toml("name = \"x\"\nregion = {kind = \"interval\", lo = 0.0, hi = }\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn bad_expression_names_the_field() {
        let text = EXAMPLE.replacen("drift = [\"0\"]", "drift = [\"2*^3\"]", 1);
        let msg = Scenario::from_toml(&text).unwrap_err().to_string();
        assert!(msg.contains("process1") && msg.contains("offset 2"), "{msg}");
    }

    #[test]
    fn bridge_requires_constant_1d_diffusion() {
        let text = EXAMPLE.replacen("diffusion = [[\"1\"]]", "diffusion = [[\"1 + y1\"]]", 1);
        let err = Scenario::from_toml(&text).unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid { ref field, .. } if field == "mc.bridge_correction"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = EXAMPLE.replace("[grid]", "[grid]\nresolutoin = 3");
        assert!(matches!(
            Scenario::from_toml(&text).unwrap_err(),
            ScenarioError::Parse(_)
        ));
    }
}
