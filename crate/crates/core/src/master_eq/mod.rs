//! Right-hand sides of the postselected (nonlinear) Lindblad master equation
//! and the fixed-step integrator that drives them.
//!
//! For a jump set `{P_k}` with common rate `r`, detection efficiency `eta`
//! and coherent weight `w`, the generator is
//!
//! ```text
//! d rho/dt = -i w [H, rho]
//!          + r * sum_k ( -1/2 {P_k† P_k, rho} + (1 - eta) P_k rho P_k†
//!                        + eta Tr(P_k† P_k rho) rho )
//! ```
//!
//! The last term is the state-dependent renormalization left behind after
//! discarding detected jumps; `eta = 0` is the ordinary linear equation.
//! Two channels have closed forms that only need degrees and adjacency:
//! the quantum stochastic walk (`w = 1 - p`, `r = p`, `P_kj = H_kj |k><j|`)
//! and Haken–Strobl dephasing (`P_k = |k><k|`).

mod integrate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{laplacian, NetworkGraph};
use crate::linalg::{
    anticommutator, commutator, hermitian_eigenvalues, hermiticity_error, to_complex, trace,
    CMatrix, SparseMatrix, C64, I,
};

pub use integrate::{
    evolve, evolve_with_reference, integrate, rk4_step, steady_state, StepSettings,
    IntegrationOutcome, InvariantSummary, SimConfig, SteadyState, StopRule, Tolerances,
    DEFAULT_DT, DEFAULT_SAMPLE_INTERVAL, STEADY_CONSECUTIVE,
};

/// Density matrix in the node basis (or the 2^n spin basis).
#[derive(Clone, Debug, PartialEq)]
pub struct DensityState {
    matrix: CMatrix,
}

impl DensityState {
    /// Wrap a matrix after checking it is square. Physical invariants are
    /// checked separately with [`DensityState::check`].
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                what: "density matrix must be square",
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        Ok(DensityState { matrix })
    }

    /// `|k><k|`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::InvalidParameter(format!(
                "basis index {k} out of range for dimension {dim}"
            )));
        }
        let mut m = CMatrix::zeros(dim, dim);
        m[(k, k)] = C64::new(1.0, 0.0);
        Ok(DensityState { matrix: m })
    }

    /// `I / dim`.
    pub fn maximally_mixed(dim: usize) -> Self {
        DensityState {
            matrix: CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0),
        }
    }

    /// `|psi><psi|` for a normalised copy of `psi`.
    pub fn pure(psi: &[C64]) -> Self {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let n = psi.len();
        DensityState {
            matrix: CMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj() / (norm * norm)),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        trace(&self.matrix)
    }

    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.matrix)[0]
    }

    /// Verify Hermiticity, unit trace and positivity within `tol`.
    pub fn check(&self, tol: &Tolerances) -> Result<()> {
        let violation = |quantity, magnitude| Error::InvariantViolation {
            step: 0,
            time: 0.0,
            quantity,
            magnitude,
        };
        let herm = self.hermiticity_error();
        if herm > tol.tol_herm {
            return Err(violation("hermiticity error", herm));
        }
        let drift = (self.trace() - C64::new(1.0, 0.0)).norm();
        if drift > tol.tol_tr {
            return Err(violation("trace drift", drift));
        }
        let min_ev = self.min_eigenvalue();
        if min_ev < -tol.tol_pos {
            return Err(violation("minimum eigenvalue", min_ev));
        }
        Ok(())
    }

    /// Dense row-major real/imaginary split, as written to `final_state.json`.
    pub fn to_json(&self) -> DenseComplexJson {
        let n = self.dim();
        DenseComplexJson {
            re: (0..n).map(|i| (0..n).map(|j| self.matrix[(i, j)].re).collect()).collect(),
            im: (0..n).map(|i| (0..n).map(|j| self.matrix[(i, j)].im).collect()).collect(),
        }
    }

    pub fn from_json(json: &DenseComplexJson) -> Result<Self> {
        let n = json.re.len();
        if json.im.len() != n || json.re.iter().chain(&json.im).any(|row| row.len() != n) {
            return Err(Error::InvalidParameter(
                "re/im blocks must be square and of equal size".into(),
            ));
        }
        Self::from_matrix(CMatrix::from_fn(n, n, |i, j| {
            C64::new(json.re[i][j], json.im[i][j])
        }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseComplexJson {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

/// Decoherence channel together with its postselection efficiency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum NoiseChannel {
    /// On-site dephasing, jumps `|k><k|` at rate `gamma`.
    #[serde(rename = "haken_strobl")]
    HakenStrobl { gamma: f64, eta: f64 },
    /// Quantum stochastic walk with interpolation strength `p`.
    #[serde(rename = "qsw")]
    Qsw { p: f64, eta: f64 },
    /// Edge hopping of a spin excitation, jumps `s_i^+ s_j^-` at rate `gamma`.
    #[serde(rename = "spin_hop")]
    SpinHop { gamma: f64, eta: f64 },
}

impl NoiseChannel {
    pub fn eta(&self) -> f64 {
        match *self {
            NoiseChannel::HakenStrobl { eta, .. }
            | NoiseChannel::Qsw { eta, .. }
            | NoiseChannel::SpinHop { eta, .. } => eta,
        }
    }

    pub fn with_eta(self, eta: f64) -> Self {
        match self {
            NoiseChannel::HakenStrobl { gamma, .. } => NoiseChannel::HakenStrobl { gamma, eta },
            NoiseChannel::Qsw { p, .. } => NoiseChannel::Qsw { p, eta },
            NoiseChannel::SpinHop { gamma, .. } => NoiseChannel::SpinHop { gamma, eta },
        }
    }

    /// Whether the channel dissipates at all (`gamma > 0` or `p > 0`).
    pub fn is_dissipative(&self) -> bool {
        match *self {
            NoiseChannel::HakenStrobl { gamma, .. } | NoiseChannel::SpinHop { gamma, .. } => {
                gamma > 0.0
            }
            NoiseChannel::Qsw { p, .. } => p > 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eta = self.eta();
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidParameter(format!("eta = {eta} outside [0, 1]")));
        }
        match *self {
            NoiseChannel::HakenStrobl { gamma, .. } | NoiseChannel::SpinHop { gamma, .. } => {
                if !(gamma >= 0.0 && gamma.is_finite()) {
                    return Err(Error::InvalidParameter(format!("gamma = {gamma} must be >= 0")));
                }
            }
            NoiseChannel::Qsw { p, .. } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidParameter(format!("p = {p} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Explicit list of jump operators sharing one rate.
#[derive(Clone, Debug)]
pub struct JumpOperatorSet {
    pub operators: Vec<CMatrix>,
    pub rate: f64,
}

impl JumpOperatorSet {
    /// `|k><k|` for every node.
    pub fn haken_strobl(n: usize, gamma: f64) -> Self {
        let operators = (0..n)
            .map(|k| {
                let mut m = CMatrix::zeros(n, n);
                m[(k, k)] = C64::new(1.0, 0.0);
                m
            })
            .collect();
        JumpOperatorSet {
            operators,
            rate: gamma,
        }
    }

    /// `H_kj |k><j|` for every ordered pair with `H_kj != 0`, diagonal included.
    pub fn qsw(g: &NetworkGraph, p: f64) -> Self {
        let h = laplacian(g).matrix;
        let n = g.n();
        let mut operators = Vec::new();
        for k in 0..n {
            for j in 0..n {
                if h[(k, j)] != 0.0 {
                    let mut m = CMatrix::zeros(n, n);
                    m[(k, j)] = C64::new(h[(k, j)], 0.0);
                    operators.push(m);
                }
            }
        }
        JumpOperatorSet { operators, rate: p }
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

/// Generator from an explicit jump-operator list.
pub fn nlme_rhs_generic(
    rho: &CMatrix,
    h: &CMatrix,
    jumps: &JumpOperatorSet,
    eta: f64,
    coherent_weight: f64,
) -> Result<CMatrix> {
    let n = rho.nrows();
    check_dim("rho must be square", n, rho.ncols())?;
    check_dim("hamiltonian dimension", n, h.nrows())?;
    check_dim("hamiltonian dimension", n, h.ncols())?;
    for p in &jumps.operators {
        check_dim("jump operator dimension", n, p.nrows())?;
        check_dim("jump operator dimension", n, p.ncols())?;
    }
    let mut out = commutator(h, rho) * (-I * coherent_weight);
    let mut dissipator = CMatrix::zeros(n, n);
    for p in &jumps.operators {
        let pd = p.adjoint();
        let pdp = &pd * p;
        dissipator -= anticommutator(&pdp, rho) * C64::new(0.5, 0.0);
        dissipator += (p * rho * &pd) * C64::new(1.0 - eta, 0.0);
        dissipator += rho * (trace(&(&pdp * rho)) * eta);
    }
    out += dissipator * C64::new(jumps.rate, 0.0);
    Ok(out)
}

/// Closed-form quantum stochastic walk generator built from degrees and
/// adjacency only.
pub fn qsw_rhs_closed_form(rho: &CMatrix, g: &NetworkGraph, p: f64, eta: f64) -> Result<CMatrix> {
    check_dim("rho dimension vs graph", g.n(), rho.nrows())?;
    check_dim("rho must be square", g.n(), rho.ncols())?;
    Ok(QswGenerator::new(g, p, eta).rhs(rho))
}

/// Closed-form Haken–Strobl generator `-i[H, rho] - gamma (1 - eta)(rho - diag rho)`.
pub fn hs_rhs_closed_form(rho: &CMatrix, h: &CMatrix, gamma: f64, eta: f64) -> Result<CMatrix> {
    let n = rho.nrows();
    check_dim("rho must be square", n, rho.ncols())?;
    check_dim("hamiltonian dimension", n, h.nrows())?;
    check_dim("hamiltonian dimension", n, h.ncols())?;
    let gen = HakenStroblGenerator {
        hamiltonian: SparseMatrix::from_dense(h),
        gamma,
        eta,
    };
    Ok(gen.rhs(rho))
}

/// A time-independent right-hand side `rho -> d rho/dt`.
pub trait Generator: Sync {
    fn dim(&self) -> usize;
    fn rhs(&self, rho: &CMatrix) -> CMatrix;
}

/// Closed-form quantum stochastic walk generator on a graph.
#[derive(Clone, Debug)]
pub struct QswGenerator {
    hamiltonian: SparseMatrix,
    degrees: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
    p: f64,
    eta: f64,
}

impl QswGenerator {
    pub fn new(g: &NetworkGraph, p: f64, eta: f64) -> Self {
        QswGenerator {
            hamiltonian: SparseMatrix::from_dense(&to_complex(&laplacian(g).matrix)),
            degrees: g.degrees().iter().map(|&d| d as f64).collect(),
            neighbors: (0..g.n()).map(|k| g.neighbors(k).collect()).collect(),
            p,
            eta,
        }
    }
}

impl Generator for QswGenerator {
    fn dim(&self) -> usize {
        self.degrees.len()
    }

    fn rhs(&self, rho: &CMatrix) -> CMatrix {
        let n = self.dim();
        let (p, eta) = (self.p, self.eta);
        // sum_k |H_kj|^2 = D_j^2 + D_j
        let w: Vec<f64> = self.degrees.iter().map(|d| d * d + d).collect();
        let gain: f64 = (0..n).map(|j| w[j] * rho[(j, j)].re).sum();

        let mut out = self.hamiltonian.von_neumann(rho) * C64::new(1.0 - p, 0.0);
        for j in 0..n {
            for i in 0..n {
                out[(i, j)] += rho[(i, j)] * (p * (eta * gain - 0.5 * (w[i] + w[j])));
            }
        }
        for k in 0..n {
            let d = self.degrees[k];
            let inflow = d * d * rho[(k, k)].re
                + self.neighbors[k].iter().map(|&j| rho[(j, j)].re).sum::<f64>();
            out[(k, k)] += C64::new(p * (1.0 - eta) * inflow, 0.0);
        }
        out
    }
}

/// Closed-form Haken–Strobl generator.
#[derive(Clone, Debug)]
pub struct HakenStroblGenerator {
    hamiltonian: SparseMatrix,
    gamma: f64,
    eta: f64,
}

impl HakenStroblGenerator {
    pub fn new(g: &NetworkGraph, gamma: f64, eta: f64) -> Self {
        HakenStroblGenerator {
            hamiltonian: SparseMatrix::from_dense(&to_complex(&laplacian(g).matrix)),
            gamma,
            eta,
        }
    }
}

impl Generator for HakenStroblGenerator {
    fn dim(&self) -> usize {
        self.hamiltonian.dim
    }

    fn rhs(&self, rho: &CMatrix) -> CMatrix {
        let n = self.dim();
        let damp = self.gamma * (1.0 - self.eta);
        let mut out = self.hamiltonian.von_neumann(rho);
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    out[(i, j)] -= rho[(i, j)] * damp;
                }
            }
        }
        out
    }
}

/// Generator backed by an explicit dense jump list.
#[derive(Clone, Debug)]
pub struct GenericGenerator {
    pub hamiltonian: CMatrix,
    pub jumps: JumpOperatorSet,
    pub eta: f64,
    pub coherent_weight: f64,
}

impl Generator for GenericGenerator {
    fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    fn rhs(&self, rho: &CMatrix) -> CMatrix {
        nlme_rhs_generic(rho, &self.hamiltonian, &self.jumps, self.eta, self.coherent_weight)
            .expect("generic generator dimensions are fixed at construction")
    }
}

/// Closed-form generator for a node-basis channel on `g`.
pub fn node_generator(g: &NetworkGraph, channel: &NoiseChannel) -> Result<Box<dyn Generator>> {
    channel.validate()?;
    match *channel {
        NoiseChannel::Qsw { p, eta } => Ok(Box::new(QswGenerator::new(g, p, eta))),
        NoiseChannel::HakenStrobl { gamma, eta } => {
            Ok(Box::new(HakenStroblGenerator::new(g, gamma, eta)))
        }
        NoiseChannel::SpinHop { .. } => Err(Error::InvalidParameter(
            "spin_hop acts on spin networks; use the spin module".into(),
        )),
    }
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn rhs(&self, rho: &CMatrix) -> CMatrix {
        (**self).rhs(rho)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_grid_topology, build_simple_topology, GridKind, SimpleKind};
    use crate::linalg::{frobenius_norm, hermitize, max_abs_diff};

    fn sample_state(n: usize) -> CMatrix {
        let psi: Vec<C64> = (0..n)
            .map(|k| C64::new(1.0 + k as f64, 0.5 * (k as f64).sin()))
            .collect();
        let pure = DensityState::pure(&psi).into_matrix();
        let mixed = DensityState::maximally_mixed(n).into_matrix();
        let mut m = pure * C64::new(0.6, 0.0) + mixed * C64::new(0.4, 0.0);
        hermitize(&mut m);
        m
    }

    #[test]
    fn eta_zero_is_linear_lindblad() {
        let g = build_simple_topology(4, SimpleKind::Line).unwrap();
        let rho = sample_state(4);
        let h = to_complex(&laplacian(&g).matrix);
        let jumps = JumpOperatorSet::qsw(&g, 0.3);
        let got = nlme_rhs_generic(&rho, &h, &jumps, 0.0, 0.7).unwrap();
        let mut want = commutator(&h, &rho) * (-I * 0.7);
        for p in &jumps.operators {
            let pd = p.adjoint();
            want += (p * &rho * &pd - anticommutator(&(&pd * p), &rho) * C64::new(0.5, 0.0))
                * C64::new(0.3, 0.0);
        }
        assert!(max_abs_diff(&got, &want) < 1e-13);
    }

    #[test]
    fn haken_strobl_leaves_diagonal_states_to_the_commutator() {
        let g = build_simple_topology(5, SimpleKind::Star).unwrap();
        let h = to_complex(&laplacian(&g).matrix);
        let rho = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(
            [0.1, 0.2, 0.3, 0.15, 0.25].iter().map(|&x| C64::new(x, 0.0)).collect(),
        ));
        let got = nlme_rhs_generic(&rho, &h, &JumpOperatorSet::haken_strobl(5, 0.8), 0.3, 1.0)
            .unwrap();
        let want = commutator(&h, &rho) * -I;
        assert!(max_abs_diff(&got, &want) < 1e-15);
    }

    #[test]
    fn qsw_closed_form_matches_jump_list() {
        let g = build_grid_topology(3, 4, GridKind::Cylinder).unwrap();
        let rho = sample_state(g.n());
        let h = to_complex(&laplacian(&g).matrix);
        for eta in [0.0, 0.3, 0.7, 1.0] {
            let generic =
                nlme_rhs_generic(&rho, &h, &JumpOperatorSet::qsw(&g, 0.4), eta, 0.6).unwrap();
            let closed = qsw_rhs_closed_form(&rho, &g, 0.4, eta).unwrap();
            assert!(max_abs_diff(&generic, &closed) < 1e-12, "eta = {eta}");
        }
    }

    #[test]
    fn uniform_state_is_fixed_on_regular_graphs() {
        let g = build_grid_topology(5, 5, GridKind::Torus).unwrap();
        let rho = DensityState::maximally_mixed(25).into_matrix();
        let out = qsw_rhs_closed_form(&rho, &g, 0.5, 0.7).unwrap();
        assert!(frobenius_norm(&out) < 1e-14);
    }

    #[test]
    fn uniform_state_is_not_fixed_on_the_cylinder() {
        let g = build_grid_topology(5, 5, GridKind::Cylinder).unwrap();
        let rho = DensityState::maximally_mixed(25).into_matrix();
        let out = qsw_rhs_closed_form(&rho, &g, 0.5, 0.5).unwrap();
        // boundary rows gain population, interior rows lose it
        assert!(out[(0, 0)].re > 1e-3);
        assert!(out[(12, 12)].re < -1e-3);
    }

    #[test]
    fn haken_strobl_limits() {
        let g = build_grid_topology(3, 3, GridKind::Moebius).unwrap();
        let h = to_complex(&laplacian(&g).matrix);
        let rho = sample_state(9);
        let unitary = hs_rhs_closed_form(&rho, &h, 1.0, 1.0).unwrap();
        assert!(max_abs_diff(&unitary, &(commutator(&h, &rho) * -I)) < 1e-13);
        let mixed = DensityState::maximally_mixed(9).into_matrix();
        assert!(frobenius_norm(&hs_rhs_closed_form(&mixed, &h, 1.0, 0.4).unwrap()) < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = build_simple_topology(4, SimpleKind::Cycle).unwrap();
        let rho = sample_state(3);
        assert!(matches!(
            qsw_rhs_closed_form(&rho, &g, 0.5, 0.5),
            Err(Error::DimensionMismatch { .. })
        ));
        let h = to_complex(&laplacian(&g).matrix);
        assert!(nlme_rhs_generic(&rho, &h, &JumpOperatorSet::haken_strobl(4, 1.0), 0.0, 1.0)
            .is_err());
    }

    #[test]
    fn channel_validation() {
        assert!(NoiseChannel::Qsw { p: 1.2, eta: 0.5 }.validate().is_err());
        assert!(NoiseChannel::Qsw { p: 0.5, eta: -0.1 }.validate().is_err());
        assert!(NoiseChannel::HakenStrobl { gamma: -1.0, eta: 0.5 }.validate().is_err());
        assert!(NoiseChannel::SpinHop { gamma: 0.5, eta: 1.0 }.validate().is_ok());
    }

    #[test]
    fn density_state_json_roundtrip() {
        let s = DensityState::from_matrix(sample_state(3)).unwrap();
        let back = DensityState::from_json(&s.to_json()).unwrap();
        assert_eq!(s, back);
    }
}
