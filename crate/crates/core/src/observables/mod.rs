//! Diagnostics sampled along trajectories and the relaxation-time analysis.

mod fit;
mod gamma;
mod simplex;

use std::fmt::Write as _;

pub use fit::{
    fit_stretched_exponential, fit_tau_vs_eta, fit_tau_vs_p, kww_relaxation_time, KwwFit,
    TrendFit, FIT_FLOOR, MIN_FIT_POINTS,
};
pub use gamma::{gamma_function, GAMMA_MAX_ARG, GAMMA_MIN_ARG};
pub use simplex::{Minimum, NelderMead};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, CMatrix};
use crate::master_eq::{DensityState, InvariantSummary};

/// `sum_{i != j} |rho_ij|`.
pub fn l1_coherence(rho: &CMatrix) -> f64 {
    let n = rho.nrows();
    let mut total = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                total += rho[(i, j)].norm();
            }
        }
    }
    total
}

/// `1/2 sum |lambda_i(a - b)|` for Hermitian `a`, `b`.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            what: "trace distance operands",
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    let diff = a - b;
    Ok(0.5 * hermitian_eigenvalues(&diff).iter().map(|l| l.abs()).sum::<f64>())
}

/// Sampled observables of one run.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub populations: Vec<Vec<f64>>,
    pub coherence_l1: Vec<f64>,
    pub trace_distance: Option<Vec<f64>>,
    pub final_state: Option<DensityState>,
    pub invariants: InvariantSummary,
}

impl Trajectory {
    pub fn new(with_distance: bool) -> Self {
        Trajectory {
            trace_distance: with_distance.then(Vec::new),
            ..Default::default()
        }
    }

    pub fn push(&mut self, t: f64, populations: Vec<f64>, coherence: f64, distance: Option<f64>) {
        self.times.push(t);
        self.populations.push(populations);
        self.coherence_l1.push(coherence);
        if let (Some(d), Some(store)) = (distance, self.trace_distance.as_mut()) {
            store.push(d);
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_populations(&self) -> &[f64] {
        self.populations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// `t,p_0..p_{n-1},coherence_l1[,trace_distance]` at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.populations.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for k in 0..n {
            let _ = write!(out, ",p_{k}");
        }
        out.push_str(",coherence_l1");
        if self.trace_distance.is_some() {
            out.push_str(",trace_distance");
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            let _ = write!(out, "{}", fmt_f64(*t));
            for p in &self.populations[i] {
                let _ = write!(out, ",{}", fmt_f64(*p));
            }
            let _ = write!(out, ",{}", fmt_f64(self.coherence_l1[i]));
            if let Some(d) = &self.trace_distance {
                let _ = write!(out, ",{}", fmt_f64(d[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// Full-precision scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
