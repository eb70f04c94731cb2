#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type CMatrix = DMatrix<C64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `G G† / Tr(G G†)` for a complex Ginibre matrix `G`: full rank, unit trace.
pub fn random_density<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let rho = &g * g.adjoint();
    let tr: C64 = rho.diagonal().iter().sum();
    rho / tr
}

/// Random pure state projector.
pub fn random_pure<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    let psi = CMatrix::from_fn(n, 1, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let norm = psi.norm();
    let psi = psi / C64::new(norm, 0.0);
    &psi * psi.adjoint()
}

/// `diag(e^{i phi_k})` with random phases.
pub fn random_phases<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    let mut u = CMatrix::zeros(n, n);
    for k in 0..n {
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        u[(k, k)] = C64::from_polar(1.0, phi);
    }
    u
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// `int_0^inf f(u) du` by the exp-sinh substitution `u = exp(pi/2 sinh s)`
/// and the trapezoidal rule in `s`.
pub fn exp_sinh_integral<F: Fn(f64) -> f64>(f: F) -> f64 {
    let h = 1.0 / 256.0;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut total = 0.0;
    for i in -1536..=1536 {
        let s = i as f64 * h;
        let u = (half_pi * s.sinh()).exp();
        let w = u * half_pi * s.cosh();
        let v = f(u) * w;
        if v.is_finite() {
            total += v;
        }
    }
    total * h
}

/// Column-stacking vectorisation.
pub fn vec_of(m: &CMatrix) -> DMatrix<C64> {
    let n = m.nrows();
    DMatrix::from_fn(n * n, 1, |i, _| m[(i % n, i / n)])
}

pub fn unvec(v: &DMatrix<C64>, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| v[(j * n + i, 0)])
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Superoperator of the linear, trace-decreasing part of the postselected
/// equation:
/// `-i w [H, .] + r sum_k ( (1 - eta) L . L† - 1/2 {L† L, .} )`.
pub fn linear_liouvillian(
    h: &CMatrix,
    jumps: &[CMatrix],
    rate: f64,
    eta: f64,
    coherent_weight: f64,
) -> CMatrix {
    let n = h.nrows();
    let id = CMatrix::identity(n, n);
    let i = C64::new(0.0, 1.0);
    let mut l = (kron(&id, h) - kron(&h.transpose(), &id)) * (-i * coherent_weight);
    for jump in jumps {
        let ldl = jump.adjoint() * jump;
        let feed = kron(&jump.conjugate(), jump) * C64::new(1.0 - eta, 0.0);
        let loss = (kron(&id, &ldl) + kron(&ldl.transpose(), &id)) * C64::new(0.5, 0.0);
        l += (feed - loss) * C64::new(rate, 0.0);
    }
    l
}

/// Full nonlinear right-hand side assembled from the superoperator plus the
/// postselection term `r eta sum_k Tr(L† L rho) rho`.
pub fn liouvillian_rhs(
    l: &CMatrix,
    jumps: &[CMatrix],
    rate: f64,
    eta: f64,
    rho: &CMatrix,
) -> CMatrix {
    let n = rho.nrows();
    let linear = unvec(&(l * vec_of(rho)), n);
    let gain: C64 = jumps.iter().map(|j| trace(&(j.adjoint() * j * rho))).sum();
    linear + rho * (gain * rate * eta)
}

/// Exact solution `exp(L t) rho0 / Tr(...)`: the normalised solution of
/// the linear equation solves the nonlinear one.
pub fn exact_solution(l: &CMatrix, rho0: &CMatrix, t: f64) -> CMatrix {
    let n = rho0.nrows();
    let prop = (l * C64::new(t, 0.0)).exp();
    let sigma = unvec(&(prop * vec_of(rho0)), n);
    let tr = trace(&sigma);
    sigma / tr
}
