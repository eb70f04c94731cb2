//! Single-excitation transport in XY spin networks under edge-hopping
//! decoherence with postselection, plus Wootters pairwise concurrence.
//!
//! Basis convention: spin 0 is the most significant bit of the basis index
//! and bit value 1 means spin up.

use std::fmt::Write as _;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphSpec, NetworkGraph};
use crate::linalg::{support, CMatrix, SparseMatrix, C64, I};
use crate::master_eq::{
    integrate, DensityState, Generator, InvariantSummary, JumpOperatorSet, StepSettings,
    StopRule, Tolerances, DEFAULT_DT, DEFAULT_SAMPLE_INTERVAL, STEADY_CONSECUTIVE,
};
use crate::observables::fmt_f64;

/// Largest spin network simulated in the full tensor-product space.
pub const MAX_SPINS: usize = 8;
/// Hopping-jump rate used when a configuration does not give one.
pub const DEFAULT_GAMMA: f64 = 0.5;
/// Eigenvalues of `rho rho~` within this of zero are clamped before the square root.
pub const CONCURRENCE_CLAMP: f64 = 1e-10;
/// Eigenvalues this close to zero are rounding noise and are zeroed before a
/// square root amplifies them.
const ROUNDING_FLOOR: f64 = 64.0 * f64::EPSILON;

/// Which ordered pairs of an undirected edge carry a jump operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeOrientation {
    /// `s_i^+ s_j^-` and `s_j^+ s_i^-` for every edge.
    #[default]
    Both,
    /// Only `s_i^+ s_j^-` with `i < j`.
    Single,
}

#[derive(Clone, Debug)]
pub struct SpinSystem {
    graph: NetworkGraph,
    j_coupling: f64,
}

impl SpinSystem {
    pub fn new(graph: NetworkGraph) -> Result<Self> {
        Self::with_coupling(graph, 1.0)
    }

    pub fn with_coupling(graph: NetworkGraph, j_coupling: f64) -> Result<Self> {
        if graph.n() > MAX_SPINS {
            return Err(Error::InvalidParameter(format!(
                "{} spins exceeds the limit of {MAX_SPINS}",
                graph.n()
            )));
        }
        if !graph.is_connected() {
            return Err(Error::InvalidGraph("spin network must be connected".into()));
        }
        Ok(SpinSystem { graph, j_coupling })
    }

    pub fn n_spins(&self) -> usize {
        self.graph.n()
    }

    pub fn hilbert_dim(&self) -> usize {
        1 << self.n_spins()
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn j_coupling(&self) -> f64 {
        self.j_coupling
    }

    fn mask(&self, i: usize) -> usize {
        1 << (self.n_spins() - 1 - i)
    }

    pub fn is_up(&self, state: usize, i: usize) -> bool {
        state & self.mask(i) != 0
    }

    /// Basis index of the single excitation on spin `i`.
    pub fn single_excitation(&self, i: usize) -> usize {
        self.mask(i)
    }

    /// Nonzero entries `(from, to)` of `s_i^+ s_j^-` (all with amplitude 1).
    fn hop(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let (mi, mj) = (self.mask(i), self.mask(j));
        (0..self.hilbert_dim())
            .filter(|s| s & mj != 0 && s & mi == 0)
            .map(|s| (s, s ^ mi ^ mj))
            .collect()
    }

    fn ordered_pairs(&self, orientation: EdgeOrientation) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for (a, b) in self.graph.edges() {
            pairs.push((a, b));
            if orientation == EdgeOrientation::Both {
                pairs.push((b, a));
            }
        }
        pairs
    }

    fn hamiltonian_sparse(&self) -> SparseMatrix {
        let mut entries = Vec::new();
        for (a, b) in self.ordered_pairs(EdgeOrientation::Both) {
            for (from, to) in self.hop(a, b) {
                entries.push((to, from, C64::new(self.j_coupling, 0.0)));
            }
        }
        SparseMatrix {
            dim: self.hilbert_dim(),
            entries,
        }
    }
}

/// `H = J sum_<i,j> (s_i^+ s_j^- + s_i^- s_j^+)`.
pub fn xy_hamiltonian(sys: &SpinSystem) -> CMatrix {
    sys.hamiltonian_sparse().to_dense()
}

/// Total excitation number `sum_i s_i^+ s_i^-` (diagonal).
pub fn number_operator(sys: &SpinSystem) -> CMatrix {
    let dim = sys.hilbert_dim();
    CMatrix::from_fn(dim, dim, |a, b| {
        if a == b {
            C64::new(
                (0..sys.n_spins()).filter(|&i| sys.is_up(a, i)).count() as f64,
                0.0,
            )
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Dense jump list `{s_i^+ s_j^-}` at rate `gamma`.
pub fn spin_jump_operators(
    sys: &SpinSystem,
    gamma: f64,
    orientation: EdgeOrientation,
) -> JumpOperatorSet {
    let dim = sys.hilbert_dim();
    let operators = sys
        .ordered_pairs(orientation)
        .into_iter()
        .map(|(i, j)| {
            let mut m = CMatrix::zeros(dim, dim);
            for (from, to) in sys.hop(i, j) {
                m[(to, from)] = C64::new(1.0, 0.0);
            }
            m
        })
        .collect();
    JumpOperatorSet {
        operators,
        rate: gamma,
    }
}

/// Full-space spin generator exploiting that every jump is a partial
/// permutation of basis states.
#[derive(Clone, Debug)]
pub struct SpinGenerator {
    hamiltonian: SparseMatrix,
    hops: Vec<Vec<(usize, usize)>>,
    /// Diagonal of `sum L† L`.
    loss: Vec<f64>,
    gamma: f64,
    eta: f64,
}

impl SpinGenerator {
    pub fn new(sys: &SpinSystem, gamma: f64, eta: f64, orientation: EdgeOrientation) -> Self {
        let hops: Vec<Vec<(usize, usize)>> = sys
            .ordered_pairs(orientation)
            .into_iter()
            .map(|(i, j)| sys.hop(i, j))
            .collect();
        let mut loss = vec![0.0; sys.hilbert_dim()];
        for hop in &hops {
            for &(from, _) in hop {
                loss[from] += 1.0;
            }
        }
        SpinGenerator {
            hamiltonian: sys.hamiltonian_sparse(),
            hops,
            loss,
            gamma,
            eta,
        }
    }
}

impl Generator for SpinGenerator {
    fn dim(&self) -> usize {
        self.loss.len()
    }

    fn rhs(&self, rho: &CMatrix) -> CMatrix {
        let n = self.dim();
        let (gamma, eta) = (self.gamma, self.eta);
        // Rows and columns of rho that are identically zero contribute
        // nothing; single-excitation states occupy only n_spins of them.
        let active = support(rho);
        let mut live = vec![false; n];
        for &s in &active {
            live[s] = true;
        }
        let gain: f64 = active.iter().map(|&s| self.loss[s] * rho[(s, s)].re).sum();

        // -i (H rho - rho H) with H rho nonzero only in live columns
        let mut h_rho = CMatrix::zeros(n, n);
        for &(i, k, v) in &self.hamiltonian.entries {
            if live[k] {
                for &j in &active {
                    h_rho[(i, j)] += v * rho[(k, j)];
                }
            }
        }
        let mut out = CMatrix::zeros(n, n);
        for &b in &active {
            for a in 0..n {
                let m = h_rho[(a, b)];
                out[(a, b)] -= I * m;
                out[(b, a)] += I * m.conj();
            }
        }
        for &b in &active {
            for &a in &active {
                out[(a, b)] += rho[(a, b)] * (gamma * (eta * gain - 0.5 * (self.loss[a] + self.loss[b])));
            }
        }
        let feed = C64::new(gamma * (1.0 - eta), 0.0);
        for hop in &self.hops {
            for &(fb, tb) in hop.iter().filter(|(f, _)| live[*f]) {
                for &(fa, ta) in hop.iter().filter(|(f, _)| live[*f]) {
                    out[(ta, tb)] += rho[(fa, fb)] * feed;
                }
            }
        }
        out
    }
}

/// Postselected edge-hopping generator on the full `2^n` space, both
/// orientations per edge.
pub fn spin_nlme_rhs(rho: &CMatrix, sys: &SpinSystem, gamma: f64, eta: f64) -> Result<CMatrix> {
    spin_nlme_rhs_oriented(rho, sys, gamma, eta, EdgeOrientation::Both)
}

pub fn spin_nlme_rhs_oriented(
    rho: &CMatrix,
    sys: &SpinSystem,
    gamma: f64,
    eta: f64,
    orientation: EdgeOrientation,
) -> Result<CMatrix> {
    let dim = sys.hilbert_dim();
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::DimensionMismatch {
            what: "spin density matrix",
            expected: dim,
            got: rho.nrows(),
        });
    }
    Ok(SpinGenerator::new(sys, gamma, eta, orientation).rhs(rho))
}

/// The same dynamics restricted to the single-excitation sector, where the
/// state is an `n x n` matrix over "excitation on spin i".
#[derive(Clone, Debug)]
pub struct SectorGenerator {
    hamiltonian: SparseMatrix,
    pairs: Vec<(usize, usize)>,
    loss: Vec<f64>,
    gamma: f64,
    eta: f64,
}

impl SectorGenerator {
    pub fn new(sys: &SpinSystem, gamma: f64, eta: f64, orientation: EdgeOrientation) -> Self {
        let n = sys.n_spins();
        let a = sys.graph().adjacency_matrix();
        let hamiltonian =
            SparseMatrix::from_dense(&a.map(|x| C64::new(x * sys.j_coupling(), 0.0)));
        let pairs = sys.ordered_pairs(orientation);
        let mut loss = vec![0.0; n];
        for &(_, j) in &pairs {
            loss[j] += 1.0;
        }
        SectorGenerator {
            hamiltonian,
            pairs,
            loss,
            gamma,
            eta,
        }
    }
}

impl Generator for SectorGenerator {
    fn dim(&self) -> usize {
        self.loss.len()
    }

    fn rhs(&self, rho: &CMatrix) -> CMatrix {
        let n = self.dim();
        let (gamma, eta) = (self.gamma, self.eta);
        let gain: f64 = (0..n).map(|s| self.loss[s] * rho[(s, s)].re).sum();
        let mut out = self.hamiltonian.von_neumann(rho);
        for b in 0..n {
            for a in 0..n {
                out[(a, b)] += rho[(a, b)] * (gamma * (eta * gain - 0.5 * (self.loss[a] + self.loss[b])));
            }
        }
        // |j> -> |i>
        for &(i, j) in &self.pairs {
            out[(i, i)] += C64::new(gamma * (1.0 - eta) * rho[(j, j)].re, 0.0);
        }
        out
    }
}

/// Embed a single-excitation-sector matrix into the full space.
pub fn sector_to_full(sys: &SpinSystem, sector: &CMatrix) -> CMatrix {
    let dim = sys.hilbert_dim();
    let n = sys.n_spins();
    let mut out = CMatrix::zeros(dim, dim);
    for a in 0..n {
        for b in 0..n {
            out[(sys.single_excitation(a), sys.single_excitation(b))] = sector[(a, b)];
        }
    }
    out
}

/// Single-excitation block of a full-space matrix.
pub fn full_to_sector(sys: &SpinSystem, full: &CMatrix) -> CMatrix {
    let n = sys.n_spins();
    CMatrix::from_fn(n, n, |a, b| {
        full[(sys.single_excitation(a), sys.single_excitation(b))]
    })
}

/// Total weight outside the single-excitation sector.
pub fn out_of_sector_weight(sys: &SpinSystem, rho: &CMatrix) -> f64 {
    (0..sys.hilbert_dim())
        .filter(|s| s.count_ones() != 1)
        .map(|s| rho[(s, s)].re.abs())
        .sum()
}

/// `P_i = Tr(rho s_i^+ s_i^-)`.
pub fn excitation_populations(rho: &CMatrix, sys: &SpinSystem) -> Vec<f64> {
    (0..sys.n_spins())
        .map(|i| {
            (0..sys.hilbert_dim())
                .filter(|&s| sys.is_up(s, i))
                .map(|s| rho[(s, s)].re)
                .sum()
        })
        .collect()
}

/// Two-spin reduced state over spins `(i, j)` in the basis `|b_i b_j>` with
/// `b_i` the more significant bit.
pub fn reduced_pair(rho: &CMatrix, sys: &SpinSystem, i: usize, j: usize) -> Matrix4<C64> {
    let (mi, mj) = (sys.mask(i), sys.mask(j));
    let local = |s: usize| (usize::from(s & mi != 0) << 1) | usize::from(s & mj != 0);
    let rest_mask = !(mi | mj) & (sys.hilbert_dim() - 1);
    let mut out = Matrix4::<C64>::zeros();
    let dim = sys.hilbert_dim();
    for a in 0..dim {
        for b in 0..dim {
            if a & rest_mask == b & rest_mask {
                out[(local(a), local(b))] += rho[(a, b)];
            }
        }
    }
    out
}

/// Wootters concurrence of a two-qubit density matrix.
///
/// The spectrum of `rho rho~` is taken from the similar Hermitian matrix
/// `sqrt(rho) rho~ sqrt(rho)`, so it is real by construction; eigenvalues
/// below `-CONCURRENCE_CLAMP` (of either `rho` or the product) are an error.
pub fn two_qubit_concurrence(rho: &Matrix4<C64>) -> Result<f64> {
    let zero = C64::new(0.0, 0.0);
    let sy = nalgebra::Matrix2::new(zero, -I, I, zero);
    let yy = sy.kronecker(&sy);
    let flipped = yy * rho.map(|z| z.conj()) * yy;

    let hermitian = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let eig = hermitian.symmetric_eigen();
    if let Some(bad) = eig.eigenvalues.iter().find(|&&l| l < -CONCURRENCE_CLAMP) {
        return Err(Error::Numerical(format!(
            "two-spin state has negative eigenvalue {bad:e}"
        )));
    }
    let roots = eig
        .eigenvalues
        .map(|l| C64::new(if l > ROUNDING_FLOOR { l.sqrt() } else { 0.0 }, 0.0));
    let sqrt_rho = eig.eigenvectors * Matrix4::from_diagonal(&roots) * eig.eigenvectors.adjoint();
    let m = sqrt_rho * flipped * sqrt_rho;
    let m = (m + m.adjoint()) * C64::new(0.5, 0.0);

    let mut lambdas = Vec::with_capacity(4);
    for ev in m.symmetric_eigenvalues().iter() {
        if *ev < -CONCURRENCE_CLAMP {
            return Err(Error::Numerical(format!(
                "eigenvalue {ev:e} of rho * rho~ is negative"
            )));
        }
        lambdas.push(if *ev > ROUNDING_FLOOR { ev.sqrt() } else { 0.0 });
    }
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0))
}

pub fn pairwise_concurrence(rho: &CMatrix, sys: &SpinSystem, i: usize, j: usize) -> Result<f64> {
    let n = sys.n_spins();
    if i == j || i >= n || j >= n {
        return Err(Error::InvalidParameter(format!(
            "concurrence needs two distinct spins in 0..{n}, got ({i}, {j})"
        )));
    }
    two_qubit_concurrence(&reduced_pair(rho, sys, i, j))
}

/// All pairwise concurrences of one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcurrenceRecord {
    pub pairs: Vec<Vec<f64>>,
    pub max_concurrence: f64,
}

pub fn concurrence_record(rho: &CMatrix, sys: &SpinSystem) -> Result<ConcurrenceRecord> {
    let n = sys.n_spins();
    let mut pairs = vec![vec![0.0; n]; n];
    let mut max_concurrence = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let c = pairwise_concurrence(rho, sys, i, j)?;
            pairs[i][j] = c;
            pairs[j][i] = c;
            max_concurrence = max_concurrence.max(c);
        }
    }
    Ok(ConcurrenceRecord {
        pairs,
        max_concurrence,
    })
}

pub fn max_concurrence(rho: &CMatrix, sys: &SpinSystem) -> Result<f64> {
    Ok(concurrence_record(rho, sys)?.max_concurrence)
}

/// Spin-network run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinConfig {
    pub graph: GraphSpec,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub eta: f64,
    /// Spin carrying the initial excitation; defaults to 0, or 1 on a star.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_spin: Option<usize>,
    #[serde(default)]
    pub orientation: EdgeOrientation,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_max: f64,
    #[serde(default = "default_sample_interval")]
    pub sample_interval: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_sample_interval() -> f64 {
    DEFAULT_SAMPLE_INTERVAL
}

impl SpinConfig {
    pub fn new(graph: GraphSpec, gamma: f64, eta: f64, t_max: f64) -> Self {
        SpinConfig {
            graph,
            gamma,
            eta,
            initial_spin: None,
            orientation: EdgeOrientation::Both,
            dt: DEFAULT_DT,
            t_max,
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
            tolerances: Tolerances::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParameter(format!("eta = {} outside [0, 1]", self.eta)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma = {} must be >= 0", self.gamma)));
        }
        if !(self.dt > 0.0) || !(self.t_max > 0.0) || self.sample_interval < self.dt {
            return Err(Error::InvalidParameter(
                "need dt > 0, t_max > 0 and sample_interval >= dt".into(),
            ));
        }
        Ok(())
    }

    pub fn system(&self) -> Result<SpinSystem> {
        if let Some(n) = self.graph.n {
            if n > MAX_SPINS {
                return Err(Error::InvalidParameter(format!(
                    "{n} spins exceeds the limit of {MAX_SPINS}"
                )));
            }
        }
        SpinSystem::new(self.graph.build()?.graph)
    }

    pub fn resolved_initial_spin(&self) -> usize {
        self.initial_spin.unwrap_or(match self.graph.family {
            crate::graph::Family::Star => 1,
            _ => 0,
        })
    }

    fn settings(&self) -> StepSettings {
        StepSettings {
            dt: self.dt,
            t_max: self.t_max,
            sample_interval: self.sample_interval,
            tolerances: self.tolerances,
        }
    }

    fn initial_state(&self, sys: &SpinSystem) -> Result<DensityState> {
        let i = self.resolved_initial_spin();
        if i >= sys.n_spins() {
            return Err(Error::InvalidParameter(format!(
                "initial spin {i} out of range for {} spins",
                sys.n_spins()
            )));
        }
        DensityState::basis(sys.hilbert_dim(), sys.single_excitation(i))
    }
}

/// Sampled excitation populations and maximum concurrence.
#[derive(Clone, Debug, Default)]
pub struct SpinTrajectory {
    pub times: Vec<f64>,
    pub populations: Vec<Vec<f64>>,
    pub max_concurrence: Vec<f64>,
    /// Largest `|sum_i P_i - 1|` seen.
    pub max_excitation_drift: f64,
    /// Largest weight outside the single-excitation sector seen.
    pub max_leakage: f64,
    pub final_state: Option<DensityState>,
    pub invariants: InvariantSummary,
    /// Whether the run stopped on the steady-state criterion.
    pub converged: bool,
}

impl SpinTrajectory {
    pub fn final_populations(&self) -> &[f64] {
        self.populations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_max_concurrence(&self) -> f64 {
        self.max_concurrence.last().copied().unwrap_or(0.0)
    }

    /// `t,P_0..P_{n-1},C_max`.
    pub fn to_csv(&self) -> String {
        let n = self.populations.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for i in 0..n {
            let _ = write!(out, ",P_{i}");
        }
        out.push_str(",C_max\n");
        for (k, t) in self.times.iter().enumerate() {
            let _ = write!(out, "{}", fmt_f64(*t));
            for p in &self.populations[k] {
                let _ = write!(out, ",{}", fmt_f64(*p));
            }
            let _ = writeln!(out, ",{}", fmt_f64(self.max_concurrence[k]));
        }
        out
    }
}

fn run_spin(config: &SpinConfig, stop: StopRule) -> Result<SpinTrajectory> {
    config.validate()?;
    let sys = config.system()?;
    let gen = SpinGenerator::new(&sys, config.gamma, config.eta, config.orientation);
    let rho0 = config.initial_state(&sys)?;
    let mut traj = SpinTrajectory::default();
    let outcome = integrate(&gen, rho0.matrix(), &config.settings(), stop, |t, rho| {
        let pops = excitation_populations(rho, &sys);
        let total: f64 = pops.iter().sum();
        traj.max_excitation_drift = traj.max_excitation_drift.max((total - 1.0).abs());
        traj.max_leakage = traj.max_leakage.max(out_of_sector_weight(&sys, rho));
        traj.times.push(t);
        traj.populations.push(pops);
        traj.max_concurrence.push(max_concurrence(rho, &sys)?);
        Ok(())
    })?;
    traj.converged = matches!(stop, StopRule::Steady { .. });
    traj.final_state = Some(outcome.final_state);
    traj.invariants = outcome.invariants;
    Ok(traj)
}

/// Fixed-time spin evolution.
pub fn evolve_spin(config: &SpinConfig) -> Result<SpinTrajectory> {
    run_spin(config, StopRule::FixedTime)
}

/// Spin evolution until the generator residual stays below `eps_ss`.
pub fn spin_steady_state(config: &SpinConfig) -> Result<SpinTrajectory> {
    if !(config.gamma > 0.0) {
        return Err(Error::InvalidParameter(
            "steady state requires gamma > 0".into(),
        ));
    }
    run_spin(
        config,
        StopRule::Steady {
            eps: config.tolerances.eps_ss,
            consecutive: STEADY_CONSECUTIVE,
        },
    )
}
