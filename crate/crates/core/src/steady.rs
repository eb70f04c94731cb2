//! Analytic steady-state conditions used as independent checks on converged
//! states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NetworkGraph;
use crate::linalg::CMatrix;
use crate::master_eq::DensityState;

/// Predicted versus simulated steady-state populations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub predicted: Vec<f64>,
    pub actual: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub uniform_ok: bool,
}

impl ConstraintReport {
    fn new(predicted: Vec<f64>, actual: Vec<f64>, uniform_ok: bool) -> Self {
        let residuals: Vec<f64> = predicted
            .iter()
            .zip(&actual)
            .map(|(p, a)| (p - a).abs())
            .collect();
        let max_residual = residuals.iter().copied().fold(0.0, f64::max);
        ConstraintReport {
            predicted,
            actual,
            residuals,
            max_residual,
            uniform_ok,
        }
    }
}

/// Whether `I/N` is a fixed point of the postselected stochastic walk: always
/// for `eta = 0`, otherwise exactly when every `D_k^2 + D_k` agrees, i.e. the
/// graph is regular.
pub fn uniform_condition_holds(g: &NetworkGraph, eta: f64) -> bool {
    if eta == 0.0 {
        return true;
    }
    let w: Vec<usize> = g.degrees().iter().map(|d| d * d + d).collect();
    w.windows(2).all(|pair| pair[0] == pair[1])
}

/// Compare each steady-state population with the population implied by the
/// diagonal of the stationarity condition,
///
/// ```text
///            sum_j A_kj ( p (1 - eta) rho_jj + 2 (1 - p) Im rho_kj )
/// rho_kk = ------------------------------------------------------------
///           p ( D_k (1 + eta D_k) - eta sum_j (D_j^2 + D_j) rho_jj )
/// ```
///
/// This is a consistency condition on a converged state, not a solution.
pub fn constraint_residual(
    rho_ss: &DensityState,
    g: &NetworkGraph,
    p: f64,
    eta: f64,
) -> Result<ConstraintReport> {
    if !(p > 0.0) {
        return Err(Error::InvalidParameter(
            "constraint check requires p > 0".into(),
        ));
    }
    let n = g.n();
    if rho_ss.dim() != n {
        return Err(Error::DimensionMismatch {
            what: "steady state vs graph",
            expected: n,
            got: rho_ss.dim(),
        });
    }
    let rho = rho_ss.matrix();
    let pops = rho_ss.populations();
    let deg: Vec<f64> = g.degrees().iter().map(|&d| d as f64).collect();
    let gain: f64 = (0..n).map(|j| (deg[j] * deg[j] + deg[j]) * pops[j]).sum();

    let mut predicted = Vec::with_capacity(n);
    for k in 0..n {
        let numerator: f64 = g
            .neighbors(k)
            .map(|j| p * (1.0 - eta) * pops[j] + 2.0 * (1.0 - p) * rho[(k, j)].im)
            .sum();
        let denominator = p * (deg[k] * (1.0 + eta * deg[k]) - eta * gain);
        if denominator.abs() < 1e-14 {
            return Err(Error::VanishingDenominator(k));
        }
        predicted.push(numerator / denominator);
    }
    Ok(ConstraintReport::new(
        predicted,
        pops,
        uniform_condition_holds(g, eta),
    ))
}

/// The Haken–Strobl fixed point `I/n`, for any efficiency.
pub fn hs_steady_state_prediction(n: usize) -> Result<DensityState> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    Ok(DensityState::maximally_mixed(n))
}

/// Report comparing a Haken–Strobl steady state with `I/n`.
pub fn hs_constraint_report(rho_ss: &DensityState) -> ConstraintReport {
    let n = rho_ss.dim();
    ConstraintReport::new(vec![1.0 / n as f64; n], rho_ss.populations(), true)
}

/// Largest entry of `|[H, rho]|`; zero for any state commuting with `H`.
pub fn commutator_residual(h: &CMatrix, rho: &CMatrix) -> f64 {
    let c = h * rho - rho * h;
    c.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
