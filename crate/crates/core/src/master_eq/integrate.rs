use serde::{Deserialize, Serialize};

use super::{node_generator, DensityState, Generator, NoiseChannel};
use crate::error::{Error, Result};
use crate::graph::GraphSpec;
use crate::linalg::{
    flush_subnormals, frobenius_norm, hermiticity_error, hermitize, is_finite, min_eigenvalue, trace, CMatrix,
    C64,
};
use crate::observables::{l1_coherence, trace_distance, Trajectory};

pub const DEFAULT_DT: f64 = 0.005;
pub const DEFAULT_SAMPLE_INTERVAL: f64 = 0.05;
/// Number of consecutive sub-threshold samples that count as converged.
pub const STEADY_CONSECUTIVE: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub tol_herm: f64,
    pub tol_tr: f64,
    pub tol_pos: f64,
    pub eps_ss: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_herm: 1e-10,
            tol_tr: 1e-8,
            tol_pos: 1e-8,
            eps_ss: 1e-9,
        }
    }
}

/// Single node-walk run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub graph: GraphSpec,
    pub channel: NoiseChannel,
    /// Original (pre-defect) index of the node carrying the initial projector.
    pub initial_node: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_max: f64,
    #[serde(default = "default_sample_interval")]
    pub sample_interval: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_sample_interval() -> f64 {
    DEFAULT_SAMPLE_INTERVAL
}

impl SimConfig {
    pub fn new(graph: GraphSpec, channel: NoiseChannel, initial_node: usize, t_max: f64) -> Self {
        SimConfig {
            graph,
            channel,
            initial_node,
            dt: DEFAULT_DT,
            t_max,
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
            tolerances: Tolerances::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be > 0", self.dt)));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_max = {} must be > 0",
                self.t_max
            )));
        }
        if self.sample_interval < self.dt {
            return Err(Error::InvalidParameter(format!(
                "sample_interval = {} must be >= dt = {}",
                self.sample_interval, self.dt
            )));
        }
        self.channel.validate()
    }

    pub fn settings(&self) -> StepSettings {
        StepSettings {
            dt: self.dt,
            t_max: self.t_max,
            sample_interval: self.sample_interval,
            tolerances: self.tolerances,
        }
    }
}

/// Time grid and tolerances shared by every integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSettings {
    pub dt: f64,
    pub t_max: f64,
    pub sample_interval: f64,
    pub tolerances: Tolerances,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Integrate to `t_max`.
    FixedTime,
    /// Stop once `||d rho/dt||_F < eps` holds for `consecutive` samples in a
    /// row; reaching `t_max` first is an error.
    Steady { eps: f64, consecutive: usize },
}

/// Extremes of the checked invariants over all samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantSummary {
    pub max_trace_drift: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl Default for InvariantSummary {
    fn default() -> Self {
        InvariantSummary {
            max_trace_drift: 0.0,
            max_hermiticity_error: 0.0,
            min_eigenvalue: f64::INFINITY,
        }
    }
}

impl InvariantSummary {
    pub fn merge(&self, other: &InvariantSummary) -> InvariantSummary {
        InvariantSummary {
            max_trace_drift: self.max_trace_drift.max(other.max_trace_drift),
            max_hermiticity_error: self.max_hermiticity_error.max(other.max_hermiticity_error),
            min_eigenvalue: self.min_eigenvalue.min(other.min_eigenvalue),
        }
    }
}

#[derive(Clone, Debug)]
pub struct IntegrationOutcome {
    pub final_state: DensityState,
    pub t_final: f64,
    /// `||d rho/dt||_F` at the last sample.
    pub residual: f64,
    pub invariants: InvariantSummary,
}

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step<G: Generator + ?Sized>(gen: &G, rho: &CMatrix, dt: f64) -> CMatrix {
    let k1 = gen.rhs(rho);
    rk4_finish(gen, rho, &k1, dt)
}

fn rk4_finish<G: Generator + ?Sized>(gen: &G, rho: &CMatrix, k1: &CMatrix, dt: f64) -> CMatrix {
    let h = C64::new(dt, 0.0);
    let half = C64::new(0.5 * dt, 0.0);
    let k2 = gen.rhs(&(rho + k1 * half));
    let k3 = gen.rhs(&(rho + &k2 * half));
    let k4 = gen.rhs(&(rho + &k3 * h));
    rho + (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * (h / 6.0)
}

/// Integrate `gen` from `rho0`. Every step is re-hermitized and rescaled to
/// unit trace after its trace defect is checked; Hermiticity, trace and
/// positivity are also checked at every sample. `on_sample` sees
/// each sampled `(t, rho)`.
pub fn integrate<G, F>(
    gen: &G,
    rho0: &CMatrix,
    settings: &StepSettings,
    stop: StopRule,
    mut on_sample: F,
) -> Result<IntegrationOutcome>
where
    G: Generator + ?Sized,
    F: FnMut(f64, &CMatrix) -> Result<()>,
{
    let dim = gen.dim();
    if rho0.nrows() != dim || rho0.ncols() != dim {
        return Err(Error::DimensionMismatch {
            what: "initial state vs generator",
            expected: dim,
            got: rho0.nrows(),
        });
    }
    let dt = settings.dt;
    let tol = &settings.tolerances;
    let n_steps = (settings.t_max / dt).round().max(1.0) as usize;
    let every = ((settings.sample_interval / dt).round() as usize).max(1);

    let mut rho = rho0.clone();
    let mut summary = InvariantSummary::default();
    let mut below = 0usize;
    let mut residual = f64::INFINITY;

    for step in 0..=n_steps {
        let t = step as f64 * dt;
        if !is_finite(&rho) {
            return Err(Error::NonFinite { step, time: t });
        }
        let k1 = gen.rhs(&rho);
        let is_sample = step % every == 0 || step == n_steps;
        if is_sample {
            residual = frobenius_norm(&k1);
            check_sample(&rho, step, t, tol, &mut summary)?;
            on_sample(t, &rho)?;
            if let StopRule::Steady { eps, consecutive } = stop {
                below = if residual < eps { below + 1 } else { 0 };
                if below >= consecutive {
                    return Ok(IntegrationOutcome {
                        final_state: DensityState::from_matrix(rho)?,
                        t_final: t,
                        residual,
                        invariants: summary,
                    });
                }
            }
        }
        if step == n_steps {
            break;
        }
        rho = rk4_finish(gen, &rho, &k1, dt);
        hermitize(&mut rho);
        // Tr(rho) = 1 is an unstable manifold of the nonlinear flow for
        // eta > 0, so the step's trace defect is checked and then removed.
        let tr = trace(&rho).re;
        let defect = (tr - 1.0).abs();
        summary.max_trace_drift = summary.max_trace_drift.max(defect);
        if !(defect <= tol.tol_tr) {
            return Err(Error::InvariantViolation {
                step: step + 1,
                time: (step + 1) as f64 * dt,
                quantity: "trace drift",
                magnitude: defect,
            });
        }
        rho /= C64::new(tr, 0.0);
        flush_subnormals(&mut rho);
    }

    if let StopRule::Steady { .. } = stop {
        return Err(Error::NotConverged {
            t_max: n_steps as f64 * dt,
            residual,
        });
    }
    Ok(IntegrationOutcome {
        final_state: DensityState::from_matrix(rho)?,
        t_final: n_steps as f64 * dt,
        residual,
        invariants: summary,
    })
}

fn check_sample(
    rho: &CMatrix,
    step: usize,
    time: f64,
    tol: &Tolerances,
    summary: &mut InvariantSummary,
) -> Result<()> {
    let violation = |quantity, magnitude| Error::InvariantViolation {
        step,
        time,
        quantity,
        magnitude,
    };
    let herm = hermiticity_error(rho);
    let drift = (trace(rho) - C64::new(1.0, 0.0)).norm();
    let min_ev = min_eigenvalue(rho);
    summary.max_hermiticity_error = summary.max_hermiticity_error.max(herm);
    summary.max_trace_drift = summary.max_trace_drift.max(drift);
    summary.min_eigenvalue = summary.min_eigenvalue.min(min_ev);
    if herm > tol.tol_herm {
        return Err(violation("hermiticity error", herm));
    }
    if drift > tol.tol_tr {
        return Err(violation("trace drift", drift));
    }
    if min_ev < -tol.tol_pos {
        return Err(violation("minimum eigenvalue", min_ev));
    }
    Ok(())
}

/// Initial projector, resolved through any defect re-indexing.
fn initial_state(config: &SimConfig, built: &crate::graph::BuiltGraph) -> Result<DensityState> {
    let node = built.node(config.initial_node).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "initial node {} is out of range or was removed",
            config.initial_node
        ))
    })?;
    DensityState::basis(built.graph.n(), node)
}

/// Fixed-time evolution of a node walk.
pub fn evolve(config: &SimConfig) -> Result<Trajectory> {
    evolve_with_reference(config, None)
}

/// Fixed-time evolution, additionally sampling the trace distance to `reference`.
pub fn evolve_with_reference(
    config: &SimConfig,
    reference: Option<&DensityState>,
) -> Result<Trajectory> {
    config.validate()?;
    let built = config.graph.build()?;
    let gen = node_generator(&built.graph, &config.channel)?;
    let rho0 = initial_state(config, &built)?;
    if let Some(r) = reference {
        if r.dim() != rho0.dim() {
            return Err(Error::DimensionMismatch {
                what: "reference state",
                expected: rho0.dim(),
                got: r.dim(),
            });
        }
    }
    let mut traj = Trajectory::new(reference.is_some());
    let outcome = integrate(
        &gen,
        rho0.matrix(),
        &config.settings(),
        StopRule::FixedTime,
        |t, rho| {
            let populations = rho.diagonal().iter().map(|z| z.re).collect();
            let distance = match reference {
                Some(r) => Some(trace_distance(rho, r.matrix())?),
                None => None,
            };
            traj.push(t, populations, l1_coherence(rho), distance);
            Ok(())
        },
    )?;
    traj.final_state = Some(outcome.final_state);
    traj.invariants = outcome.invariants;
    Ok(traj)
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub state: DensityState,
    /// Time at which convergence was declared.
    pub time: f64,
    pub residual: f64,
    pub invariants: InvariantSummary,
}

/// Integrate until the generator residual stays below `eps_ss`.
pub fn steady_state(config: &SimConfig) -> Result<SteadyState> {
    config.validate()?;
    if !config.channel.is_dissipative() {
        return Err(Error::InvalidParameter(
            "steady state requires dissipation (gamma > 0 or p > 0)".into(),
        ));
    }
    let built = config.graph.build()?;
    let gen = node_generator(&built.graph, &config.channel)?;
    let rho0 = initial_state(config, &built)?;
    let outcome = integrate(
        &gen,
        rho0.matrix(),
        &config.settings(),
        StopRule::Steady {
            eps: config.tolerances.eps_ss,
            consecutive: STEADY_CONSECUTIVE,
        },
        |_, _| Ok(()),
    )?;
    Ok(SteadyState {
        state: outcome.final_state,
        time: outcome.t_final,
        residual: outcome.residual,
        invariants: outcome.invariants,
    })
}
