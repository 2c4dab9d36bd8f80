//! Discretely observed Cox-Ingersoll-Ross diffusion with a piecewise
//! constant potential.
//!
//! Over one observation step `dt` the transition law of
//! `dX = θ(μ - X)dt + σ sqrt(X) dW` is a Poisson mixture of Gamma laws:
//! with `κ = 2θ / (σ²(1 - e^{-θ dt}))` and `u = κ x e^{-θ dt}`,
//! `κ Y | K ~ Gamma(K + ν + 1)` where `K ~ Poisson(u)` and `ν = 2θμ/σ² - 1`.
//! The state space is truncated to `[0, x_max]` and `M(x, ·)` renormalised.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use super::bessel::{log_bessel_i, log_reduced_series};
use crate::error::{invalid, Error, Result};
use crate::kernel::{KernelModel, StateSpace};

const MAX_REJECTIONS: usize = 1_000_000;
const SMALL_POISSON_MEAN: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CirModel {
    pub theta: f64,
    pub mean_level: f64,
    pub sigma: f64,
    pub dt: f64,
    pub x_max: f64,
    pub delta: f64,
    pub well_center: f64,
    kappa: f64,
    decay: f64,
    order: f64,
    ln_gamma_order: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CirSource {
    u: f64,
    sqrt_u: f64,
    log_base: f64,
}

impl CirModel {
    pub fn new(theta: f64, mean_level: f64, sigma: f64, dt: f64, x_max: f64, delta: f64) -> Result<Self> {
        for (name, v) in [("theta", theta), ("mu", mean_level), ("sigma", sigma), ("dt", dt), ("x_max", x_max)] {
            if !(v > 0.0) || !v.is_finite() {
                return invalid(format!("CIR parameter {name} must be positive, got {v}"));
            }
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return invalid(format!("CIR delta must be non-negative, got {delta}"));
        }
        let decay = (-theta * dt).exp();
        let kappa = 2.0 * theta / (sigma * sigma * (1.0 - decay));
        let order = 2.0 * theta * mean_level / (sigma * sigma) - 1.0;
        if order <= -1.0 {
            return invalid("CIR Bessel order must exceed -1");
        }
        Ok(Self {
            theta,
            mean_level,
            sigma,
            dt,
            x_max,
            delta,
            well_center: 10.0,
            kappa,
            decay,
            order,
            ln_gamma_order: ln_gamma(order + 1.0),
        })
    }

    /// The configuration used throughout the examples:
    /// `θ = 2, μ = 10, σ = 20, dt = 0.01, x_max = 500`.
    pub fn standard(delta: f64) -> Result<Self> {
        Self::new(2.0, 10.0, 20.0, 0.01, 500.0, delta)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn bessel_order(&self) -> f64 {
        self.order
    }

    /// `U(x) = 2·1[0 ≤ x ≤ 10 - δ] + 1[x ≥ 10 + δ]`.
    pub fn potential_u(&self, x: f64) -> f64 {
        let mut u = 0.0;
        if (0.0..=self.well_center - self.delta).contains(&x) {
            u += 2.0;
        }
        if x >= self.well_center + self.delta {
            u += 1.0;
        }
        u
    }

    fn poisson_mean(&self, x: f64) -> f64 {
        self.kappa * x.max(0.0) * self.decay
    }

    /// Untruncated transition CDF `P(Y ≤ y | X = x)`.
    pub fn transition_cdf(&self, x: f64, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        mixture_cdf(self.poisson_mean(x), self.order + 1.0, self.kappa * y)
    }

    /// Untruncated transition density (Lebesgue) at `y > 0`.
    pub fn transition_density(&self, x: f64, y: f64) -> f64 {
        self.log_untruncated(self.poisson_mean(x), y).exp()
    }

    fn log_untruncated(&self, u: f64, y: f64) -> f64 {
        self.kappa.ln() + self.log_core(u, u.sqrt(), y)
    }

    /// `ln p(y) - ln κ` for the untruncated transition density.
    fn log_core(&self, u: f64, sqrt_u: f64, y: f64) -> f64 {
        let nu = self.order;
        let v = (self.kappa * y).max(1e-300);
        let sqrt_v = v.sqrt();
        let z = 2.0 * sqrt_u * sqrt_v;
        if z <= 50.0 {
            -u - v + nu * v.ln() - self.ln_gamma_order + log_reduced_series(nu, z)
        } else {
            // e^{-u-v} I_ν(z) with the exponentials combined as -(√u - √v)².
            let d = sqrt_u - sqrt_v;
            -d * d + 0.5 * nu * (v.ln() - u.ln()) + log_bessel_i(nu, z) - z
        }
    }

    /// `P(Y ≤ x_max | X = x)`: the mass kept by the truncation.
    pub fn kept_mass(&self, x: f64) -> f64 {
        self.transition_cdf(x, self.x_max)
    }
}

/// `Σ_k Poisson(k; u) P(k + a, w)` with `P` the regularised lower incomplete
/// gamma function, i.e. the CDF of the Poisson-Gamma mixture at `w`.
fn mixture_cdf(u: f64, a: f64, w: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let spread = 10.0 * u.sqrt() + 10.0;
    let k_lo = (u - spread).floor().max(0.0) as usize;
    let k_hi = (u + spread).ceil() as usize;
    let top = gamma_lr(k_hi as f64 + a, w);
    if top >= 1.0 {
        return 1.0;
    }
    // Gamma CDF downward: P(s, w) = P(s + 1, w) + w^s e^{-w} / Γ(s + 1).
    let mut p = vec![0.0; k_hi - k_lo + 1];
    p[k_hi - k_lo] = top;
    let log_term = |s: f64| s * w.ln() - w - ln_gamma(s + 1.0);
    let mut s = (k_hi - 1) as f64 + a;
    let mut t = if k_hi > k_lo { log_term(s).exp() } else { 0.0 };
    for k in (k_lo..k_hi).rev() {
        if t < 1e-280 {
            t = log_term(s).exp();
        }
        p[k - k_lo] = (p[k - k_lo + 1] + t).min(1.0);
        t *= s / w;
        s -= 1.0;
    }
    let mut weight = if u > 0.0 {
        (-u + k_lo as f64 * u.ln() - ln_gamma(k_lo as f64 + 1.0)).exp()
    } else {
        1.0
    };
    let mut total = 0.0;
    for k in k_lo..=k_hi {
        total += weight * p[k - k_lo];
        if u == 0.0 {
            break;
        }
        weight *= u / (k + 1) as f64;
    }
    total.min(1.0)
}

impl KernelModel for CirModel {
    type Source = CirSource;

    fn space(&self) -> StateSpace {
        StateSpace { lower: 0.0, upper: self.x_max }
    }

    fn label(&self) -> String {
        format!(
            "cir(theta={}, mu={}, sigma={}, dt={}, x_max={}, delta={})",
            self.theta, self.mean_level, self.sigma, self.dt, self.x_max, self.delta
        )
    }

    fn log_potential(&self, x: f64) -> f64 {
        -self.potential_u(x)
    }

    fn mutate<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Result<f64> {
        let u = self.poisson_mean(x);
        // The library sampler misbehaves for very small means (it can return
        // -1), so those are drawn as Bernoulli(u), exact up to O(u²).
        let poisson = if u > SMALL_POISSON_MEAN {
            Some(Poisson::new(u).map_err(|e| Error::ModelEvaluation(e.to_string()))?)
        } else {
            None
        };
        for _ in 0..MAX_REJECTIONS {
            let k = match poisson.as_ref() {
                Some(p) => p.sample(rng),
                None if rng.gen::<f64>() < u => 1.0,
                None => 0.0,
            };
            let gamma = Gamma::new(k + self.order + 1.0, 1.0)
                .map_err(|e| Error::ModelEvaluation(e.to_string()))?;
            let y = gamma.sample(rng) / self.kappa;
            if y <= self.x_max {
                return Ok(y);
            }
        }
        Err(Error::ModelEvaluation(format!(
            "CIR mutation from {x} rejected {MAX_REJECTIONS} times"
        )))
    }

    fn source(&self, x: f64) -> CirSource {
        let u = self.poisson_mean(x);
        CirSource {
            u,
            sqrt_u: u.sqrt(),
            log_base: self.log_potential(x) - self.kept_mass(x).ln() + self.x_max.ln() + self.kappa.ln(),
        }
    }

    fn log_density_from(&self, src: &CirSource, y: f64) -> f64 {
        src.log_base + self.log_core(src.u, src.sqrt_u, y)
    }

    fn cell_masses(&self, x: f64, edges: &[f64]) -> Option<Vec<f64>> {
        let u = self.poisson_mean(x);
        let a = self.order + 1.0;
        let scale = self.log_potential(x).exp() / self.kept_mass(x);
        let cdf: Vec<f64> = edges
            .iter()
            .map(|&e| mixture_cdf(u, a, self.kappa * e.clamp(0.0, self.x_max)))
            .collect();
        Some(
            cdf.windows(2)
                .map(|w| scale * (w[1] - w[0]).max(0.0))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use statrs::distribution::{Continuous, Gamma as GammaDist};

    fn model() -> CirModel {
        CirModel::standard(0.0).unwrap()
    }

    #[test]
    fn mutation_near_zero() {
        let m = model();
        let mut rng = stream(6, 0, 0, 0);
        for x in [0.0, 1e-300, 1e-12] {
            for _ in 0..1000 {
                let y = m.mutate(x, &mut rng).unwrap();
                assert!((0.0..=m.x_max).contains(&y));
            }
        }
    }

    #[test]
    fn constants() {
        let m = model();
        let expected = 4.0 / (400.0 * (1.0 - (-0.02f64).exp()));
        assert!((m.kappa() - expected).abs() < 1e-12);
        assert!((m.kappa() - 0.505).abs() < 1e-3);
        assert!((m.bessel_order() + 0.9).abs() < 1e-15);
    }

    #[test]
    fn potential_levels() {
        let m = CirModel::standard(1.0).unwrap();
        assert_eq!(m.potential_u(5.0), 2.0);
        assert_eq!(m.potential_u(9.0), 2.0);
        assert_eq!(m.potential_u(9.5), 0.0);
        assert_eq!(m.potential_u(10.5), 0.0);
        assert_eq!(m.potential_u(11.0), 1.0);
        assert_eq!(m.potential_u(300.0), 1.0);
        assert!((m.log_potential(5.0) + 2.0).abs() < 1e-15);
    }

    /// Density as an explicit Poisson sum of Gamma densities.
    fn mixture_density(m: &CirModel, x: f64, y: f64) -> f64 {
        let u = m.kappa() * x * (-m.theta * m.dt).exp();
        let mut total = 0.0;
        for k in 0..2000 {
            let w = if u == 0.0 {
                if k == 0 { 1.0 } else { 0.0 }
            } else {
                (-u + k as f64 * u.ln() - ln_gamma(k as f64 + 1.0)).exp()
            };
            if w == 0.0 && k as f64 > u {
                break;
            }
            let g = GammaDist::new(k as f64 + m.bessel_order() + 1.0, 1.0).unwrap();
            total += (w.ln() + g.ln_pdf(m.kappa() * y)).exp() * m.kappa();
        }
        total
    }

    #[test]
    fn bessel_form_matches_poisson_mixture() {
        let m = model();
        for &(x, y) in &[(0.0, 3.0), (1.0, 0.5), (10.0, 9.0), (10.0, 14.0), (60.0, 55.0), (200.0, 190.0), (400.0, 404.0)] {
            let a = m.transition_density(x, y);
            let b = mixture_density(&m, x, y);
            assert!(((a - b) / b).abs() < 1e-10, "x={x} y={y}: {a} vs {b}");
            let src = m.source(x);
            let q = m.log_density_from(&src, y).exp();
            let direct = m.log_potential(x).exp() * 500.0 * b / m.kept_mass(x);
            assert!(((q - direct) / direct).abs() < 1e-10, "x={x} y={y}");
        }
    }

    #[test]
    fn cdf_matches_integrated_density() {
        let m = model();
        for x in [0.5, 10.0, 100.0] {
            // Trapezoid on a fine grid away from the integrable y = 0 spike.
            let (a, b) = (0.2 * x, 2.0 * x + 10.0);
            let n = 20000;
            let h = (b - a) / n as f64;
            let mut s = 0.5 * (m.transition_density(x, a) + m.transition_density(x, b));
            for k in 1..n {
                s += m.transition_density(x, a + h * k as f64);
            }
            let integral = s * h;
            let diff = m.transition_cdf(x, b) - m.transition_cdf(x, a);
            assert!((integral - diff).abs() < 1e-6, "x={x}: {integral} vs {diff}");
        }
        assert_eq!(m.transition_cdf(3.0, 0.0), 0.0);
        assert!((m.kept_mass(10.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cell_masses_sum_to_potential() {
        let m = model();
        let edges = crate::kernel::linspace(0.0, 500.0, 257);
        for x in [0.0, 3.0, 250.0, 499.0] {
            let masses = m.cell_masses(x, &edges).unwrap();
            let total: f64 = masses.iter().sum();
            assert!((total - m.log_potential(x).exp()).abs() < 1e-12, "x={x}: {total}");
        }
    }

    #[test]
    fn mutation_law() {
        let m = model();
        for (k, &x) in [0.0, 10.0, 80.0].iter().enumerate() {
            let mut rng = stream(3, 0x44, k as u64, 0);
            let mut draws: Vec<f64> = (0..50_000).map(|_| m.mutate(x, &mut rng).unwrap()).collect();
            let mean = draws.iter().sum::<f64>() / draws.len() as f64;
            let d = (-0.02f64).exp();
            let expected = x * d + 10.0 * (1.0 - d);
            // Conditional variance: x σ² e^{-θdt}(1-e^{-θdt})/θ + μσ²(1-e^{-θdt})²/(2θ).
            let var = x * 400.0 * d * (1.0 - d) / 2.0 + 10.0 * 400.0 * (1.0 - d).powi(2) / 4.0;
            let se = (var / draws.len() as f64).sqrt();
            assert!((mean - expected).abs() < 5.0 * se, "x={x}: {mean} vs {expected}");
            draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let ks = crate::stats::ks_statistic(&draws, |y| m.transition_cdf(x, y));
            assert!(ks < 1.949 / (draws.len() as f64).sqrt(), "x={x}: D={ks}");
        }
    }
}
