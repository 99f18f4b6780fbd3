//! Coupled Euler–Maruyama simulation of two diffusions up to their first
//! exits from a region.
//!
//! Both chains advance on the same time lattice. Under shared coupling they
//! receive the same Wiener increments. A chain exits at the first lattice
//! time whose state is not strictly interior; its exit position is the
//! linear interpolation of the last step onto the boundary. With the
//! Brownian-bridge correction (1D, constant diffusion only) an exit between
//! lattice points is also accepted with probability
//! `exp(-2 d_k d_{k+1} / (sigma^2 dt))` per face.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::EvalError;
use crate::geometry::Region;
use crate::pde::DiffusionSpec;
use crate::rng::{Lane, Substream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("invalid path configuration: {0}")]
    Config(String),
    #[error("start point {point:?} of process {process} lies outside the closure of the region")]
    StartOutside { process: usize, point: Vec<f64> },
    #[error("process {process}: coefficient evaluation failed at t = {time}, state {state:?}: {source}")]
    Coefficient {
        process: usize,
        time: f64,
        state: Vec<f64>,
        #[source]
        source: EvalError,
    },
    #[error("failed to start worker pool: {0}")]
    Workers(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    #[default]
    Shared,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathConfig {
    pub dt: f64,
    /// Censoring horizon.
    pub t_max: f64,
    pub bridge_correction: bool,
    pub base_seed: u64,
    pub coupling: Coupling,
}

impl PathConfig {
    pub fn validate(&self) -> Result<(), SdeError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SdeError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(SdeError::Config(format!("t_max must be positive, got {}", self.t_max)));
        }
        if self.dt > self.t_max / 10.0 {
            return Err(SdeError::Config(format!(
                "dt = {} exceeds t_max / 10 = {}",
                self.dt,
                self.t_max / 10.0
            )));
        }
        Ok(())
    }
}

/// One replicate of the coupled pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledPairOutcome {
    pub replicate: u64,
    pub t1: f64,
    pub t2: f64,
    pub t_tilde: f64,
    pub y1_at_tilde: Vec<f64>,
    pub y2_at_tilde: Vec<f64>,
    pub exit1_pos: Vec<f64>,
    pub exit2_pos: Vec<f64>,
    /// Indicator of {T1 > T2}.
    pub e1: u8,
    /// Indicator of {T2 > T1}.
    pub e2: u8,
    pub censored1: bool,
    pub censored2: bool,
}

impl CoupledPairOutcome {
    pub fn censored(&self) -> bool {
        self.censored1 || self.censored2
    }

    /// |y1(T~) - y2(T~)|
    pub fn displacement(&self) -> f64 {
        self.y1_at_tilde
            .iter()
            .zip(&self.y2_at_tilde)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Fills `out` with independent N(0, dt) draws.
#[inline]
pub fn wiener_increments(stream: &mut Substream, dt: f64, out: &mut [f64]) {
    let sd = dt.sqrt();
    for w in out.iter_mut() {
        *w = sd * stream.normal();
    }
}

/// One Euler–Maruyama step `y + f(y) dt + beta(y) dW`.
pub fn em_step(state: &[f64], spec: &DiffusionSpec, dw: &[f64], dt: f64) -> Result<Vec<f64>, EvalError> {
    let (n, d) = (spec.n(), spec.d());
    if state.len() != n {
        return Err(EvalError::DimensionMismatch {
            expected: n,
            got: state.len(),
        });
    }
    if dw.len() != d {
        return Err(EvalError::DimensionMismatch {
            expected: d,
            got: dw.len(),
        });
    }
    let mut f = vec![0.0; n];
    let mut beta = vec![0.0; n * d];
    let mut out = vec![0.0; n];
    spec.drift_into(state, &mut f)?;
    spec.diffusion_into(state, &mut beta)?;
    apply_step(state, &f, &beta, dw, dt, &mut out);
    Ok(out)
}

#[inline]
fn apply_step(y: &[f64], f: &[f64], beta: &[f64], dw: &[f64], dt: f64, out: &mut [f64]) {
    let d = dw.len();
    for j in 0..y.len() {
        let noise: f64 = beta[j * d..(j + 1) * d].iter().zip(dw).map(|(b, w)| b * w).sum();
        out[j] = y[j] + f[j] * dt + noise;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum StepEvent {
    Inside,
    /// Lattice exit; the crossing sits at fraction `theta` of the step.
    Lattice {
        theta: f64,
    },
    /// Bridge-detected exit through the lower (`false`) or upper face.
    Bridge {
        upper: bool,
    },
}

struct Chain<'a> {
    spec: &'a DiffusionSpec,
    y: Vec<f64>,
    next: Vec<f64>,
    f: Vec<f64>,
    beta: Vec<f64>,
    exit_pos: Vec<f64>,
    alive: bool,
    exit_time: f64,
}

impl<'a> Chain<'a> {
    fn new(spec: &'a DiffusionSpec, start: &[f64]) -> Self {
        let (n, d) = (spec.n(), spec.d());
        Chain {
            spec,
            y: start.to_vec(),
            next: vec![0.0; n],
            f: vec![0.0; n],
            beta: vec![0.0; n * d],
            exit_pos: start.to_vec(),
            alive: true,
            exit_time: 0.0,
        }
    }

    fn advance(&mut self, dw: &[f64], dt: f64) -> Result<(), EvalError> {
        self.spec.drift_into(&self.y, &mut self.f)?;
        self.spec.diffusion_into(&self.y, &mut self.beta)?;
        apply_step(&self.y, &self.f, &self.beta, dw, dt, &mut self.next);
        Ok(())
    }

    fn at_fraction(&self, theta: f64) -> Vec<f64> {
        self.y
            .iter()
            .zip(&self.next)
            .map(|(a, b)| a + theta * (b - a))
            .collect()
    }
}

/// Validated simulation set-up for a pair of processes.
#[derive(Debug, Clone)]
pub struct PairSimulator<'a> {
    specs: [&'a DiffusionSpec; 2],
    starts: [Vec<f64>; 2],
    region: &'a Region,
    config: PathConfig,
    /// Constant diffusion coefficient of each chain when bridging is on.
    bridge_sigma: Option<[f64; 2]>,
}

impl<'a> PairSimulator<'a> {
    pub fn new(
        spec1: &'a DiffusionSpec,
        spec2: &'a DiffusionSpec,
        a1: &[f64],
        a2: &[f64],
        region: &'a Region,
        config: PathConfig,
    ) -> Result<Self, SdeError> {
        config.validate()?;
        let n = region.dim();
        for (i, (spec, a)) in [(spec1, a1), (spec2, a2)].into_iter().enumerate() {
            if spec.n() != n || a.len() != n {
                return Err(SdeError::Config(format!(
                    "process {} has dimension {} and start of length {}, region has dimension {n}",
                    i + 1,
                    spec.n(),
                    a.len()
                )));
            }
            if !region.contains_closed(a).unwrap_or(false) {
                return Err(SdeError::StartOutside {
                    process: i + 1,
                    point: a.to_vec(),
                });
            }
        }
        if config.coupling == Coupling::Shared && spec1.d() != spec2.d() {
            return Err(SdeError::Config(format!(
                "shared coupling needs equal noise dimensions, got {} and {}",
                spec1.d(),
                spec2.d()
            )));
        }
        let bridge_sigma = if config.bridge_correction {
            let mut sigma = [0.0; 2];
            for (i, spec) in [spec1, spec2].into_iter().enumerate() {
                let beta = spec.constant_diffusion().filter(|_| spec.n() == 1 && spec.d() == 1);
                match beta {
                    Some(b) if b[0] != 0.0 => sigma[i] = b[0].abs(),
                    _ => {
                        return Err(SdeError::Config(format!(
                            "bridge correction needs n = d = 1 and a nonzero constant diffusion; process {} does not qualify",
                            i + 1
                        )))
                    }
                }
            }
            Some(sigma)
        } else {
            None
        };
        Ok(PairSimulator {
            specs: [spec1, spec2],
            starts: [a1.to_vec(), a2.to_vec()],
            region,
            config,
            bridge_sigma,
        })
    }

    pub fn config(&self) -> &PathConfig {
        &self.config
    }

    /// Runs one replicate. The result depends only on the set-up and on
    /// `(base_seed, replicate)`.
    pub fn replicate(&self, replicate: u64) -> Result<CoupledPairOutcome, SdeError> {
        let cfg = &self.config;
        let dt = cfg.dt;
        let region = self.region;
        let shared = cfg.coupling == Coupling::Shared;
        let seed = cfg.base_seed;
        let mut noise = [
            Substream::new(seed, replicate, Lane::Noise1),
            Substream::new(seed, replicate, Lane::Noise2),
        ];
        let mut bridge_rng = [
            Substream::new(seed, replicate, Lane::Bridge1),
            Substream::new(seed, replicate, Lane::Bridge2),
        ];
        let mut chains = [
            Chain::new(self.specs[0], &self.starts[0]),
            Chain::new(self.specs[1], &self.starts[1]),
        ];
        let d = [self.specs[0].d(), self.specs[1].d()];
        let mut dw = [vec![0.0; d[0]], vec![0.0; d[1]]];
        let faces = {
            let (lo, hi) = region.bounding_box();
            (lo[0], hi[0])
        };

        let mut tilde: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        for c in chains.iter_mut() {
            if !region.contains_unchecked(&c.y) {
                c.alive = false;
                c.exit_time = 0.0;
            }
        }
        if chains.iter().any(|c| !c.alive) {
            tilde = Some((0.0, self.starts[0].clone(), self.starts[1].clone()));
        }

        let max_steps = (cfg.t_max / dt).ceil() as u64;
        let mut step = 0u64;
        while chains.iter().any(|c| c.alive) && step < max_steps {
            let t_next = (step + 1) as f64 * dt;
            // draws
            if shared {
                wiener_increments(&mut noise[0], dt, &mut dw[0]);
                let (a, b) = dw.split_at_mut(1);
                b[0].copy_from_slice(&a[0]);
            } else {
                for i in 0..2 {
                    if chains[i].alive {
                        wiener_increments(&mut noise[i], dt, &mut dw[i]);
                    }
                }
            }
            let mut uniforms = [0.0; 2];
            if self.bridge_sigma.is_some() {
                if shared {
                    uniforms[0] = bridge_rng[0].uniform();
                    uniforms[1] = uniforms[0];
                } else {
                    for i in 0..2 {
                        if chains[i].alive {
                            uniforms[i] = bridge_rng[i].uniform();
                        }
                    }
                }
            }

            let mut events = [StepEvent::Inside; 2];
            for i in 0..2 {
                let c = &mut chains[i];
                if !c.alive {
                    continue;
                }
                c.advance(&dw[i], dt).map_err(|source| SdeError::Coefficient {
                    process: i + 1,
                    time: step as f64 * dt,
                    state: c.y.clone(),
                    source,
                })?;
                events[i] = if !region.contains_unchecked(&c.next) {
                    StepEvent::Lattice {
                        theta: region.segment_crossing(&c.y, &c.next),
                    }
                } else if let Some(sigma) = self.bridge_sigma {
                    bridge_event(faces, c.y[0], c.next[0], sigma[i], dt, uniforms[i])
                } else {
                    StepEvent::Inside
                };
            }

            let exit_pos = |c: &Chain, ev: StepEvent| -> Vec<f64> {
                match ev {
                    StepEvent::Lattice { theta } => {
                        let mut p = c.at_fraction(theta);
                        region.snap_to_boundary(&mut p);
                        p
                    }
                    StepEvent::Bridge { upper } => vec![if upper { faces.1 } else { faces.0 }],
                    StepEvent::Inside => c.next.clone(),
                }
            };
            let exiting = [
                chains[0].alive && events[0] != StepEvent::Inside,
                chains[1].alive && events[1] != StepEvent::Inside,
            ];
            let mut positions = [
                exiting[0].then(|| exit_pos(&chains[0], events[0])),
                exiting[1].then(|| exit_pos(&chains[1], events[1])),
            ];

            if tilde.is_none() && (exiting[0] || exiting[1]) {
                let at_tilde = match (exiting, events) {
                    ([true, true], [StepEvent::Lattice { theta: t1 }, StepEvent::Lattice { theta: t2 }]) => {
                        let tm = t1.min(t2);
                        let pick = |i: usize, t: f64| {
                            if t == tm {
                                positions[i].clone().unwrap()
                            } else {
                                chains[i].at_fraction(tm)
                            }
                        };
                        [pick(0, t1), pick(1, t2)]
                    }
                    ([true, true], _) => [positions[0].clone().unwrap(), positions[1].clone().unwrap()],
                    (ex, ev) => {
                        let e = if ex[0] { 0 } else { 1 };
                        let o = 1 - e;
                        let other = match ev[e] {
                            StepEvent::Lattice { theta } => chains[o].at_fraction(theta),
                            StepEvent::Bridge { .. } if shared => {
                                self.pinned_partner(&chains[e], &chains[o], positions[e].as_ref().unwrap(), dt)
                            }
                            _ => chains[o].next.clone(),
                        };
                        let mine = positions[e].clone().unwrap();
                        if e == 0 {
                            [mine, other]
                        } else {
                            [other, mine]
                        }
                    }
                };
                let [p1, p2] = at_tilde;
                tilde = Some((t_next, p1, p2));
            }

            for i in 0..2 {
                let c = &mut chains[i];
                if !c.alive {
                    continue;
                }
                if let Some(p) = positions[i].take() {
                    c.alive = false;
                    c.exit_time = t_next;
                    c.exit_pos = p;
                } else {
                    std::mem::swap(&mut c.y, &mut c.next);
                }
            }
            step += 1;
        }

        let horizon = max_steps as f64 * dt;
        let censored = [chains[0].alive, chains[1].alive];
        for c in chains.iter_mut() {
            if c.alive {
                c.exit_time = horizon;
                c.exit_pos = c.y.clone();
            }
        }
        let (t_tilde, y1_at_tilde, y2_at_tilde) =
            tilde.unwrap_or_else(|| (horizon, chains[0].y.clone(), chains[1].y.clone()));
        let (t1, t2) = (chains[0].exit_time, chains[1].exit_time);
        let [c1, c2] = chains;
        Ok(CoupledPairOutcome {
            replicate,
            t1,
            t2,
            t_tilde,
            y1_at_tilde,
            y2_at_tilde,
            exit1_pos: c1.exit_pos,
            exit2_pos: c2.exit_pos,
            e1: (t1 > t2) as u8,
            e2: (t2 > t1) as u8,
            censored1: censored[0],
            censored2: censored[1],
        })
    }

    /// State of the surviving chain when the other one is pinned to the
    /// boundary by a bridge exit: the shared increment is the one that lands
    /// the exiting chain on the boundary. Falls back to the lattice state if
    /// that point is not interior.
    fn pinned_partner(&self, exiting: &Chain, other: &Chain, boundary: &[f64], dt: f64) -> Vec<f64> {
        let beta_e = exiting.beta[0];
        let dw = (boundary[0] - exiting.y[0] - exiting.f[0] * dt) / beta_e;
        let mut p = vec![0.0; other.y.len()];
        apply_step(&other.y, &other.f, &other.beta, &[dw], dt, &mut p);
        if self.region.contains_unchecked(&p) {
            p
        } else {
            other.next.clone()
        }
    }

    /// Runs replicates `0..n` on `workers` threads. The returned buffer is
    /// indexed by replicate, so its contents do not depend on `workers`.
    pub fn run(&self, n_replicates: u64, workers: usize) -> Result<Vec<CoupledPairOutcome>, SdeError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| SdeError::Workers(e.to_string()))?;
        pool.install(|| (0..n_replicates).into_par_iter().map(|i| self.replicate(i)).collect())
    }
}

/// Exit time of a single chain, without bridge correction. Returns
/// `(exit_time, censored)` per replicate, using the `Noise1` lane.
pub fn single_exit_times(
    spec: &DiffusionSpec,
    start: &[f64],
    region: &Region,
    config: PathConfig,
    n_replicates: u64,
    workers: usize,
) -> Result<Vec<(f64, bool)>, SdeError> {
    config.validate()?;
    if spec.n() != region.dim() || start.len() != region.dim() {
        return Err(SdeError::Config("process and region dimensions differ".into()));
    }
    if !region.contains_closed(start).unwrap_or(false) {
        return Err(SdeError::StartOutside {
            process: 1,
            point: start.to_vec(),
        });
    }
    let dt = config.dt;
    let max_steps = (config.t_max / dt).ceil() as u64;
    let one = |replicate: u64| -> Result<(f64, bool), SdeError> {
        let mut chain = Chain::new(spec, start);
        if !region.contains_unchecked(&chain.y) {
            return Ok((0.0, false));
        }
        let mut noise = Substream::new(config.base_seed, replicate, Lane::Noise1);
        let mut dw = vec![0.0; spec.d()];
        for step in 0..max_steps {
            wiener_increments(&mut noise, dt, &mut dw);
            chain.advance(&dw, dt).map_err(|source| SdeError::Coefficient {
                process: 1,
                time: step as f64 * dt,
                state: chain.y.clone(),
                source,
            })?;
            if !region.contains_unchecked(&chain.next) {
                return Ok(((step + 1) as f64 * dt, false));
            }
            std::mem::swap(&mut chain.y, &mut chain.next);
        }
        Ok((max_steps as f64 * dt, true))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SdeError::Workers(e.to_string()))?;
    pool.install(|| (0..n_replicates).into_par_iter().map(one).collect())
}

fn bridge_event(faces: (f64, f64), from: f64, to: f64, sigma: f64, dt: f64, u: f64) -> StepEvent {
    let (lo, hi) = faces;
    let var = sigma * sigma * dt;
    let p_lo = (-2.0 * (from - lo) * (to - lo) / var).exp();
    let p_hi = (-2.0 * (hi - from) * (hi - to) / var).exp();
    if u < p_lo {
        StepEvent::Bridge { upper: false }
    } else if u < p_lo + p_hi {
        StepEvent::Bridge { upper: true }
    } else {
        StepEvent::Inside
    }
}

/// Convenience wrapper: validates the set-up and runs a single replicate.
pub fn simulate_pair(
    spec1: &DiffusionSpec,
    spec2: &DiffusionSpec,
    a1: &[f64],
    a2: &[f64],
    region: &Region,
    config: PathConfig,
    replicate: u64,
) -> Result<CoupledPairOutcome, SdeError> {
    PairSimulator::new(spec1, spec2, a1, a2, region, config)?.replicate(replicate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::MeanSe;

    fn bm() -> DiffusionSpec {
        DiffusionSpec::parse("bm", &["0"], &[vec!["1"]]).unwrap()
    }

    fn cfg(dt: f64, t_max: f64, bridge: bool) -> PathConfig {
        PathConfig {
            dt,
            t_max,
            bridge_correction: bridge,
            base_seed: 11,
            coupling: Coupling::Shared,
        }
    }

    #[test]
    fn increments_have_the_right_moments() {
        let mut s = Substream::new(3, 0, Lane::Noise1);
        let mut buf = vec![0.0; 1];
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| {
                wiener_increments(&mut s, 0.01, &mut buf);
                buf[0]
            })
            .collect();
        let m = MeanSe::from_slice(&xs);
        assert!(m.mean.abs() < 3.0 * 0.1 / 1000.0, "{}", m.mean);
        let var = m.se * m.se * xs.len() as f64;
        assert!((var - 0.01).abs() < 0.01 * 0.01, "{var}");
    }

    #[test]
    fn euler_step_examples() {
        let zero = DiffusionSpec::parse("z", &["0"], &[vec!["0"]]).unwrap();
        assert_eq!(em_step(&[0.7], &zero, &[0.3], 0.1).unwrap(), vec![0.7]);
        let drift = DiffusionSpec::parse("f", &["1"], &[vec!["0"]]).unwrap();
        assert_eq!(em_step(&[0.0], &drift, &[0.0], 0.5).unwrap(), vec![0.5]);
        assert_eq!(em_step(&[0.3], &bm(), &[0.05], 0.1).unwrap(), vec![0.35]);
        assert!(em_step(&[0.3, 0.1], &bm(), &[0.05], 0.1).is_err());
    }

    #[test]
    fn identical_chains_coincide() {
        let q = Region::interval(0.0, 1.0).unwrap();
        let spec = bm();
        for bridge in [false, true] {
            let sim = PairSimulator::new(&spec, &spec, &[0.4], &[0.4], &q, cfg(1e-3, 10.0, bridge)).unwrap();
            for r in 0..50 {
                let o = sim.replicate(r).unwrap();
                assert_eq!(o.t1, o.t2);
                assert_eq!((o.e1, o.e2), (0, 0));
                assert_eq!(o.displacement(), 0.0);
                assert_eq!(o.exit1_pos, o.exit2_pos);
            }
        }
    }

    #[test]
    fn deterministic_drift_exit_time() {
        let q = Region::interval(-10.0, 1.0).unwrap();
        let spec = DiffusionSpec::parse("ode", &["2"], &[vec!["1e-12"]]).unwrap();
        let dt = 1e-3;
        let o = simulate_pair(&spec, &spec, &[0.0], &[0.0], &q, cfg(dt, 10.0, false), 0).unwrap();
        assert!((o.t1 - 0.5).abs() <= dt * (1.0 + 1e-9), "{o:?}");
        assert!((o.exit1_pos[0] - 1.0).abs() < 1e-12);
        assert!(!q.contains(&o.exit1_pos).unwrap());
    }

    #[test]
    fn replicates_are_reproducible_in_isolation() {
        let q = Region::interval(0.0, 1.0).unwrap();
        let ou = DiffusionSpec::parse("ou", &["-y1"], &[vec!["1"]]).unwrap();
        let spec = bm();
        let sim = PairSimulator::new(&spec, &ou, &[0.3], &[0.6], &q, cfg(1e-3, 10.0, true)).unwrap();
        let all = sim.run(40, 1).unwrap();
        for (i, o) in all.iter().enumerate() {
            let again = simulate_pair(&spec, &ou, &[0.3], &[0.6], &q, cfg(1e-3, 10.0, true), i as u64).unwrap();
            assert_eq!(o, &again);
        }
        assert_eq!(all, sim.run(40, 3).unwrap());
    }

    #[test]
    fn frozen_chain_and_tilde() {
        let q = Region::interval(0.0, 1.0).unwrap();
        let ou = DiffusionSpec::parse("ou", &["-y1"], &[vec!["1.3"]]).unwrap();
        let spec = bm();
        let sim = PairSimulator::new(&spec, &ou, &[0.2], &[0.7], &q, cfg(1e-3, 10.0, false)).unwrap();
        for r in 0..200 {
            let o = sim.replicate(r).unwrap();
            assert!(!o.censored());
            assert_eq!(o.t_tilde, o.t1.min(o.t2));
            assert!(o.e1 + o.e2 <= 1);
            assert!(!q.contains(&o.exit1_pos).unwrap());
            assert!(!q.contains(&o.exit2_pos).unwrap());
            let (first, y_first) = if o.t1 <= o.t2 {
                (&o.exit1_pos, &o.y1_at_tilde)
            } else {
                (&o.exit2_pos, &o.y2_at_tilde)
            };
            assert_eq!(first, y_first);
        }
    }

    #[test]
    fn shared_gap_is_preserved() {
        let q = Region::interval(0.0, 1.0).unwrap();
        let spec = bm();
        for bridge in [false, true] {
            let sim = PairSimulator::new(&spec, &spec, &[0.3], &[0.7], &q, cfg(1e-3, 10.0, bridge)).unwrap();
            for r in 0..200 {
                let o = sim.replicate(r).unwrap();
                assert!((o.displacement() - 0.4).abs() < 1e-12, "{}", o.displacement());
            }
        }
    }

    #[test]
    fn censoring_at_horizon() {
        let q = Region::interval(0.0, 1.0).unwrap();
        let slow = DiffusionSpec::parse("slow", &["0"], &[vec!["1e-6"]]).unwrap();
        let o = simulate_pair(&slow, &slow, &[0.5], &[0.5], &q, cfg(0.01, 0.5, false), 0).unwrap();
        assert!(o.censored1 && o.censored2);
        assert!((o.t1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn start_on_boundary_exits_immediately() {
        let q = Region::interval(0.0, 1.0).unwrap();
        let o = simulate_pair(&bm(), &bm(), &[1.0], &[0.5], &q, cfg(1e-3, 10.0, false), 0).unwrap();
        assert_eq!(o.t1, 0.0);
        assert_eq!(o.t_tilde, 0.0);
        assert_eq!(o.e2, 1);
        assert!((o.displacement() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn invalid_setups_are_rejected() {
        let q = Region::interval(0.0, 1.0).unwrap();
        let spec = bm();
        assert!(matches!(
            PairSimulator::new(&spec, &spec, &[1.5], &[0.5], &q, cfg(1e-3, 1.0, false)),
            Err(SdeError::StartOutside { process: 1, .. })
        ));
        assert!(PairSimulator::new(&spec, &spec, &[0.5], &[0.5], &q, cfg(0.2, 1.0, false)).is_err());
        let varying = DiffusionSpec::parse("v", &["0"], &[vec!["1 + y1"]]).unwrap();
        assert!(PairSimulator::new(&spec, &varying, &[0.5], &[0.5], &q, cfg(1e-3, 1.0, true)).is_err());
        let two_noise = DiffusionSpec::parse("w", &["0"], &[vec!["1", "1"]]).unwrap();
        assert!(PairSimulator::new(&spec, &two_noise, &[0.5], &[0.5], &q, cfg(1e-3, 1.0, false)).is_err());
        let mut indep = cfg(1e-3, 1.0, false);
        indep.coupling = Coupling::Independent;
        assert!(PairSimulator::new(&spec, &two_noise, &[0.5], &[0.5], &q, indep).is_ok());
    }

    #[test]
    fn mean_exit_time_matches_quadratic() {
        let q = Region::interval(0.0, 1.0).unwrap();
        let spec = bm();
        let sim = PairSimulator::new(&spec, &spec, &[0.5], &[0.5], &q, cfg(1e-3, 10.0, true)).unwrap();
        let times: Vec<f64> = sim.run(20_000, 1).unwrap().iter().map(|o| o.t1).collect();
        let m = MeanSe::from_slice(&times);
        // dt = 1e-3 leaves an O(dt) bias, small next to 4 SE
        assert!((m.mean - 0.25).abs() < 4.0 * m.se + 1e-3, "{} +- {}", m.mean, m.se);
    }

    #[test]
    fn single_chain_matches_first_chain_of_pair() {
        let q = Region::interval(0.0, 1.0).unwrap();
        let spec = bm();
        let c = cfg(1e-3, 10.0, false);
        let pair = PairSimulator::new(&spec, &spec, &[0.3], &[0.3], &q, c).unwrap();
        let single = single_exit_times(&spec, &[0.3], &q, c, 50, 1).unwrap();
        for (i, (t, censored)) in single.iter().enumerate() {
            let o = pair.replicate(i as u64).unwrap();
            assert_eq!(*t, o.t1);
            assert!(!censored);
        }
    }
}
