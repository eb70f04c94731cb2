use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

pub const GAMMA_MIN_ARG: f64 = 0.05;
pub const GAMMA_MAX_ARG: f64 = 170.0;

/// Euler gamma function on `[0.05, 170]` (Lanczos approximation, g = 7).
pub fn gamma_function(x: f64) -> Result<f64> {
    if !(GAMMA_MIN_ARG..=GAMMA_MAX_ARG).contains(&x) {
        return Err(Error::InvalidParameter(format!(
            "gamma argument {x} outside [{GAMMA_MIN_ARG}, {GAMMA_MAX_ARG}]"
        )));
    }
    Ok(gamma_unchecked(x))
}

fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return PI / ((PI * x).sin() * gamma_unchecked(1.0 - x));
    }
    let z = x - 1.0;
    let mut series = LANCZOS_COEF[0];
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        series += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    // t^(z + 1/2) e^(-t), split in halves so it stays finite up to x = 170
    let half = t.powf(0.5 * (z + 0.5)) * (-0.5 * t).exp();
    (2.0 * PI).sqrt() * half * half * series
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn integer_and_half_integer_values() {
        assert!(rel(gamma_function(1.0).unwrap(), 1.0) < 1e-14);
        assert!(rel(gamma_function(2.0).unwrap(), 1.0) < 1e-14);
        assert!(rel(gamma_function(5.0).unwrap(), 24.0) < 1e-14);
        assert!(rel(gamma_function(0.5).unwrap(), PI.sqrt()) < 1e-14);
        assert!(rel(gamma_function(1.5).unwrap(), 0.5 * PI.sqrt()) < 1e-14);
    }

    #[test]
    fn factorials_up_to_the_range_limit() {
        let mut fact = 1.0f64;
        for n in 1..170u32 {
            // fact = (n-1)!
            assert!(rel(gamma_function(n as f64).unwrap(), fact) < 1e-12, "n = {n}");
            fact *= n as f64;
        }
    }

    #[test]
    fn recurrence_holds_below_one() {
        for &x in &[0.05, 0.1, 0.27, 0.49, 0.5, 0.73, 0.99] {
            let lhs = gamma_function(x + 1.0).unwrap();
            let rhs = x * gamma_function(x).unwrap();
            assert!(rel(lhs, rhs) < 1e-13, "x = {x}");
        }
    }

    #[test]
    fn out_of_range_is_rejected() {
        assert!(gamma_function(0.01).is_err());
        assert!(gamma_function(171.0).is_err());
        assert!(gamma_function(f64::NAN).is_err());
    }
}
