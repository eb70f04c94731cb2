//! Stretched-exponential relaxation fits and the relaxation-time trend fits.

use serde::{Deserialize, Serialize};

use super::gamma::gamma_function;
use super::simplex::NelderMead;
use crate::error::{Error, Result};

/// Samples at or below this value are dropped before fitting.
pub const FIT_FLOOR: f64 = 1e-12;
pub const MIN_FIT_POINTS: usize = 8;
/// Below this coefficient of determination a KWW fit is flagged unreliable.
pub const RELIABLE_R2: f64 = 0.5;

/// `D(t) = d0 * exp(-(k t)^beta)` with relaxation time `tau`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KwwFit {
    pub d0: f64,
    pub k: f64,
    pub beta: f64,
    pub tau: f64,
    pub rss: f64,
    pub r2: f64,
    #[serde(skip)]
    pub reliable: bool,
}

impl KwwFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.d0 * (-(self.k * t).powf(self.beta)).exp()
    }
}

/// Mean relaxation time `Gamma(1/beta) / (beta k)` of a stretched exponential.
pub fn kww_relaxation_time(k: f64, beta: f64) -> Result<f64> {
    if !(k > 0.0) || !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "relaxation time needs k > 0 and beta > 0 (k = {k}, beta = {beta})"
        )));
    }
    Ok(gamma_function(1.0 / beta)? / (beta * k))
}

fn r_squared(values: &[f64], rss: f64) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let ss_tot: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot > 0.0 {
        1.0 - rss / ss_tot
    } else if rss <= f64::EPSILON * values.iter().map(|v| v * v).sum::<f64>() {
        1.0
    } else {
        f64::NEG_INFINITY
    }
}

/// Least-squares amplitude for a fixed basis `e`: `argmin_a sum (y - a e)^2`.
fn profile_amplitude(y: &[f64], e: &[f64]) -> (f64, f64) {
    let see: f64 = e.iter().map(|v| v * v).sum();
    let sye: f64 = y.iter().zip(e).map(|(a, b)| a * b).sum();
    let amp = if see > 0.0 { sye / see } else { 0.0 };
    let rss = y.iter().zip(e).map(|(a, b)| (a - amp * b).powi(2)).sum();
    (amp, rss)
}

/// Least squares for `y = a f + c` with a fixed basis function `f`.
fn profile_affine(y: &[f64], f: &[f64]) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let sf: f64 = f.iter().sum();
    let sy: f64 = y.iter().sum();
    let sff: f64 = f.iter().map(|v| v * v).sum();
    let sfy: f64 = f.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * sff - sf * sf;
    let (a, c) = if det.abs() > 1e-12 * (n * sff).max(f64::MIN_POSITIVE) && det.is_finite() {
        ((n * sfy - sf * sy) / det, (sff * sy - sf * sfy) / det)
    } else {
        (0.0, sy / n)
    };
    let rss = y
        .iter()
        .zip(f)
        .map(|(yy, ff)| (yy - a * ff - c).powi(2))
        .sum();
    (a, c, rss)
}

/// Fit a stretched exponential to a decay curve.
///
/// The starting point comes from the double-log linearisation
/// `ln(-ln(D/D(0))) = beta ln k + beta ln t`; the amplitude is solved exactly
/// for each `(k, beta)` and the simplex refines `(ln k, beta)`.
pub fn fit_stretched_exponential(times: &[f64], values: &[f64]) -> Result<KwwFit> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch {
            what: "times vs values",
            expected: times.len(),
            got: values.len(),
        });
    }
    let (t, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(tt, v)| **v > FIT_FLOOR && tt.is_finite() && v.is_finite())
        .map(|(a, b)| (*a, *b))
        .unzip();
    if t.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{} usable points, need at least {MIN_FIT_POINTS}",
            t.len()
        )));
    }

    let (lnk0, beta0) = linearised_guess(&t, &y);
    let rss_of = |lnk: f64, beta: f64| -> (f64, f64) {
        if !(beta > 0.0 && beta <= 2.0) {
            return (0.0, f64::INFINITY);
        }
        let k = lnk.exp();
        let e: Vec<f64> = t.iter().map(|&tt| (-(k * tt).powf(beta)).exp()).collect();
        profile_amplitude(&y, &e)
    };
    let nm = NelderMead::default();
    let mut best = nm.minimize(|x| rss_of(x[0], x[1]).1, &[lnk0, beta0], &[0.3, 0.1]);
    // a second start from a plain exponential guards against a poor linearisation
    let alt = nm.minimize(|x| rss_of(x[0], x[1]).1, &[lnk0, 1.0], &[0.5, 0.2]);
    if alt.f < best.f {
        best = alt;
    }
    let (lnk, beta) = (best.x[0], best.x[1]);
    let (d0, rss) = rss_of(lnk, beta);
    let k = lnk.exp();
    let r2 = r_squared(&y, rss);
    Ok(KwwFit {
        d0,
        k,
        beta,
        tau: kww_relaxation_time(k, beta)?,
        rss,
        r2,
        reliable: r2 >= RELIABLE_R2,
    })
}

fn linearised_guess(t: &[f64], y: &[f64]) -> (f64, f64) {
    let y0 = y[0];
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(tt, v)| **tt > 0.0 && **v < y0 && **v > 0.0)
        .map(|(tt, v)| (tt.ln(), (-(v / y0).ln()).ln()))
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .collect();
    let fallback = {
        let span = t[t.len() - 1] - t[0];
        ((1.0 / span.max(1e-12)).ln(), 1.0)
    };
    if pts.len() < 2 {
        return fallback;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sz: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxz: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return fallback;
    }
    let slope = (n * sxz - sx * sz) / det;
    let intercept = (sz - slope * sx) / n;
    if !(slope > 0.0) || !slope.is_finite() {
        return fallback;
    }
    let beta = slope.clamp(0.05, 2.0);
    (intercept / slope, beta)
}

/// Three-parameter trend fit with its quality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub params: [f64; 3],
    pub rss: f64,
    pub r2: f64,
}

fn check_trend_input(xs: &[f64], taus: &[f64]) -> Result<()> {
    if xs.len() != taus.len() {
        return Err(Error::DimensionMismatch {
            what: "abscissae vs relaxation times",
            expected: xs.len(),
            got: taus.len(),
        });
    }
    if xs.len() < 4 {
        return Err(Error::Fit(format!("{} points, need at least 4", xs.len())));
    }
    Ok(())
}

/// Profile a one-parameter family of affine fits `tau = a f_s(x) + c` over
/// the shape parameter `s`: coarse scan over `grid`, then simplex refinement.
fn fit_profiled<B>(taus: &[f64], basis: B, grid: &[f64]) -> (f64, f64, f64, f64)
where
    B: Fn(f64) -> Vec<f64>,
{
    let rss_at = |s: f64| {
        let f = basis(s);
        if f.iter().any(|v| !v.is_finite()) {
            return (0.0, 0.0, f64::INFINITY);
        }
        profile_affine(taus, &f)
    };
    let start = grid
        .iter()
        .copied()
        .min_by(|a, b| rss_at(*a).2.total_cmp(&rss_at(*b).2))
        .unwrap_or(1.0);
    let step = grid.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.1, f64::min);
    let m = NelderMead::default().minimize(|x| rss_at(x[0]).2, &[start], &[step]);
    let s = m.x[0];
    let (a, c, rss) = rss_at(s);
    (a, s, c, rss)
}

/// `tau ~ A / (1 - eta)^B + C`; returns `[A, B, C]`.
pub fn fit_tau_vs_eta(etas: &[f64], taus: &[f64]) -> Result<TrendFit> {
    check_trend_input(etas, taus)?;
    if let Some(bad) = etas.iter().find(|&&e| !(e < 1.0)) {
        return Err(Error::InvalidParameter(format!(
            "eta = {bad} not allowed in the power-law fit (needs eta < 1)"
        )));
    }
    let grid: Vec<f64> = (0..=60).map(|i| 0.05 + 0.1 * i as f64).collect();
    let (a, b, c, rss) = fit_profiled(
        taus,
        |b| etas.iter().map(|e| (1.0 - e).powf(-b)).collect(),
        &grid,
    );
    Ok(TrendFit {
        params: [a, b, c],
        rss,
        r2: r_squared(taus, rss),
    })
}

/// `tau ~ C exp(-D p) + E`; returns `[C, D, E]`.
pub fn fit_tau_vs_p(ps: &[f64], taus: &[f64]) -> Result<TrendFit> {
    check_trend_input(ps, taus)?;
    if let Some(bad) = ps.iter().find(|&&p| !(p > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "p = {bad} not allowed in the exponential fit (needs p > 0)"
        )));
    }
    let grid: Vec<f64> = (0..=100).map(|i| 0.25 * i as f64).collect();
    let (c, d, e, rss) = fit_profiled(
        taus,
        |d| ps.iter().map(|p| (-d * p).exp()).collect(),
        &grid,
    );
    Ok(TrendFit {
        params: [c, d, e],
        rss,
        r2: r_squared(taus, rss),
    })
}
