//! Derivative-free Nelder–Mead minimisation used by every curve fit.

#[derive(Clone, Copy, Debug)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Stop a pass when the simplex spread in `f` falls below
    /// `ftol_rel * |f_best|`.
    pub ftol_rel: f64,
    /// Stop a pass when the simplex collapses below this size (relative).
    pub xtol_rel: f64,
    /// Restarts from the current best point while they keep improving.
    pub max_restarts: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_iter: 10_000,
            ftol_rel: 1e-12,
            xtol_rel: 1e-13,
            max_restarts: 30,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
}

impl NelderMead {
    /// Minimise `f` from `x0` with initial simplex edge lengths `step`.
    pub fn minimize<F>(&self, f: F, x0: &[f64], step: &[f64]) -> Minimum
    where
        F: Fn(&[f64]) -> f64,
    {
        let eval = |x: &[f64]| {
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        let mut best = x0.to_vec();
        let mut best_f = eval(&best);
        let mut iterations = 0;
        let mut scale: Vec<f64> = step.to_vec();
        for _ in 0..=self.max_restarts {
            let budget = self.max_iter.saturating_sub(iterations);
            if budget == 0 {
                break;
            }
            let (x, fx, used) = self.pass(&eval, &best, &scale, budget);
            iterations += used;
            let improved = fx < best_f
                && (best_f - fx) > self.ftol_rel * fx.abs().max(f64::MIN_POSITIVE);
            if fx <= best_f {
                // shrink the restart simplex towards the current resolution
                for (s, (a, b)) in scale.iter_mut().zip(x.iter().zip(&best)) {
                    let moved = (a - b).abs();
                    *s = (moved * 10.0).max(s.abs() * 1e-3).max(1e-12 * (1.0 + a.abs()));
                }
                best = x;
                best_f = fx;
            }
            if !improved {
                break;
            }
        }
        Minimum {
            x: best,
            f: best_f,
            iterations,
        }
    }

    fn pass<F>(&self, f: &F, x0: &[f64], step: &[f64], budget: usize) -> (Vec<f64>, f64, usize)
    where
        F: Fn(&[f64]) -> f64,
    {
        let n = x0.len();
        let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        pts.push(x0.to_vec());
        for i in 0..n {
            let mut p = x0.to_vec();
            p[i] += if step[i] != 0.0 { step[i] } else { 1e-3 };
            pts.push(p);
        }
        let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();

        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
        let mut it = 0;
        while it < budget {
            it += 1;
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            pts = order.iter().map(|&i| pts[i].clone()).collect();
            vals = order.iter().map(|&i| vals[i]).collect();

            let spread = vals[n] - vals[0];
            let size = (1..=n)
                .flat_map(|i| (0..n).map(move |d| (i, d)))
                .map(|(i, d)| (pts[i][d] - pts[0][d]).abs() / (1.0 + pts[0][d].abs()))
                .fold(0.0, f64::max);
            if spread <= self.ftol_rel * vals[0].abs() || size <= self.xtol_rel {
                break;
            }

            let centroid: Vec<f64> = (0..n)
                .map(|d| pts[..n].iter().map(|p| p[d]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                (0..n)
                    .map(|d| centroid[d] + t * (pts[n][d] - centroid[d]))
                    .collect()
            };

            let xr = along(-alpha);
            let fr = f(&xr);
            if fr < vals[0] {
                let xe = along(-gamma);
                let fe = f(&xe);
                if fe < fr {
                    pts[n] = xe;
                    vals[n] = fe;
                } else {
                    pts[n] = xr;
                    vals[n] = fr;
                }
                continue;
            }
            if fr < vals[n - 1] {
                pts[n] = xr;
                vals[n] = fr;
                continue;
            }
            let (xc, fc) = if fr < vals[n] {
                let xc = along(-rho);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(rho);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
                continue;
            }
            for i in 1..=n {
                for d in 0..n {
                    pts[i][d] = pts[0][d] + sigma * (pts[i][d] - pts[0][d]);
                }
                vals[i] = f(&pts[i]);
            }
        }
        let best = (0..=n)
            .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
            .unwrap_or(0);
        (pts[best].clone(), vals[best], it)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = NelderMead::default().minimize(f, &[-1.2, 1.0], &[0.5, 0.5]);
        assert!((m.x[0] - 1.0).abs() < 1e-7, "{:?}", m);
        assert!((m.x[1] - 1.0).abs() < 1e-7, "{:?}", m);
    }

    #[test]
    fn one_dimensional_quadratic() {
        let m = NelderMead::default().minimize(|x| (x[0] - 3.25).powi(2) + 1.0, &[0.0], &[1.0]);
        assert!((m.x[0] - 3.25).abs() < 1e-6);
        assert!((m.f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nan_is_treated_as_uphill() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.5).powi(2) };
        let m = NelderMead::default().minimize(f, &[2.0], &[1.0]);
        assert!((m.x[0] - 0.5).abs() < 1e-6);
    }
}
