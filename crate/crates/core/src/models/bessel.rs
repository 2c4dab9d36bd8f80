//! Logarithm of the modified Bessel function of the first kind, `I_ν(z)`,
//! for real order `ν > -1` and `z ≥ 0`.

use statrs::function::gamma::ln_gamma;

/// Beyond this argument the large-`z` expansion is used.
const ASYMPTOTIC_SWITCH: f64 = 50.0;

/// `ln Σ_k (z²/4)^k Γ(ν+1) / (k! Γ(k+ν+1))`, the ascending series with its
/// leading factor `(z/2)^ν / Γ(ν+1)` removed. Equals 0 at `z = 0`.
pub(crate) fn log_reduced_series(nu: f64, z: f64) -> f64 {
    let q = 0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= q / (k * (k + nu));
        sum += term;
        if term < 1e-17 * sum && k > 0.5 * z {
            break;
        }
    }
    sum.ln()
}

/// `ln[e^{-z} sqrt(2πz) I_ν(z)]` from the Hankel expansion.
fn log_asymptotic_factor(nu: f64, z: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..40 {
        let odd = (2 * k - 1) as f64;
        term *= -(mu - odd * odd) / (k as f64 * 8.0 * z);
        if term.abs() >= prev {
            break;
        }
        sum += term;
        prev = term.abs();
        if prev < 1e-17 * sum.abs() {
            break;
        }
    }
    sum.ln()
}

/// `ln I_ν(z)`. Returns `-inf` at `z = 0` for `ν > 0`, `+inf` for `ν < 0`.
pub fn log_bessel_i(nu: f64, z: f64) -> f64 {
    assert!(nu > -1.0, "order must exceed -1");
    assert!(z >= 0.0, "argument must be non-negative");
    if z == 0.0 {
        return match nu {
            n if n == 0.0 => 0.0,
            n if n > 0.0 => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
    }
    if z <= ASYMPTOTIC_SWITCH {
        nu * (0.5 * z).ln() - ln_gamma(nu + 1.0) + log_reduced_series(nu, z)
    } else {
        z - 0.5 * (2.0 * std::f64::consts::PI * z).ln() + log_asymptotic_factor(nu, z)
    }
}
