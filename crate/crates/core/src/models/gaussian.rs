//! Truncated Gaussian AR(1) chain on `[-c, c]` with an exponential tilt
//! `G_α(x) = exp(α U(x))`, `U(x) = clamp(x, -1, 1)`.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use libm::erf;

use crate::error::{invalid, Result};
use crate::kernel::{extremize, EpsilonBounds, KernelModel, StateSpace};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone)]
pub struct RareEventModel {
    pub half_width: f64,
    pub alpha: f64,
    bounds: EpsilonBounds,
    normal: Normal,
}

#[derive(Debug, Clone, Copy)]
pub struct GaussianSource {
    mean: f64,
    log_scale: f64,
}

/// The observable whose partial sums define the deviation event.
pub fn deviation_observable(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

impl RareEventModel {
    pub fn new(half_width: f64, alpha: f64) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return invalid(format!("half width c must be positive, got {half_width}"));
        }
        if !alpha.is_finite() {
            return invalid("alpha must be finite");
        }
        let mut model = Self {
            half_width,
            alpha,
            bounds: EpsilonBounds { lower: 1.0, upper: 1.0 },
            normal: Normal::new(0.0, 1.0).expect("standard normal"),
        };
        model.bounds = model.compute_bounds();
        Ok(model)
    }

    /// Same chain with a different tilt.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.half_width, alpha)
    }

    pub fn observable(&self, x: f64) -> f64 {
        deviation_observable(x)
    }

    /// Mass of the untruncated `N(x/2, 1)` law inside `[-c, c]`.
    pub fn normaliser(&self, x: f64) -> f64 {
        let c = self.half_width;
        let s = std::f64::consts::SQRT_2;
        0.5 * (erf((c - 0.5 * x) / s) - erf((-c - 0.5 * x) / s))
    }

    /// Lebesgue density of `M(x, ·)`.
    pub fn transition_density(&self, x: f64, y: f64) -> f64 {
        if y.abs() > self.half_width {
            return 0.0;
        }
        let d = y - 0.5 * x;
        (-0.5 * d * d - LN_SQRT_2PI).exp() / self.normaliser(x)
    }

    /// `log q(x, y) + ½ (y - x/2)²`, i.e. the source-only part.
    fn log_scale(&self, x: f64) -> f64 {
        self.alpha * deviation_observable(x) + (2.0 * self.half_width).ln()
            - LN_SQRT_2PI
            - self.normaliser(x).ln()
    }

    fn compute_bounds(&self) -> EpsilonBounds {
        let c = self.half_width;
        // For fixed x the density in y peaks at y = x/2 (always inside) and
        // is smallest at the endpoint farther from x/2.
        let breaks = [-1.0, 0.0, 1.0];
        let (_, hi) = extremize(|x| self.log_scale(x), -c, c, &breaks);
        let (lo, _) = extremize(
            |x| {
                let far = c + 0.5 * x.abs();
                self.log_scale(x) - 0.5 * far * far
            },
            -c,
            c,
            &breaks,
        );
        EpsilonBounds {
            lower: lo.exp() * (1.0 - 1e-9),
            upper: hi.exp() * (1.0 + 1e-9),
        }
    }
}

impl KernelModel for RareEventModel {
    type Source = GaussianSource;

    fn space(&self) -> StateSpace {
        StateSpace { lower: -self.half_width, upper: self.half_width }
    }

    fn label(&self) -> String {
        format!("rare-event(c={}, alpha={})", self.half_width, self.alpha)
    }

    fn log_potential(&self, x: f64) -> f64 {
        self.alpha * deviation_observable(x)
    }

    fn mutate<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Result<f64> {
        let c = self.half_width;
        let mean = 0.5 * x;
        let lo = self.normal.cdf(-c - mean);
        let hi = self.normal.cdf(c - mean);
        let u: f64 = rng.gen();
        let p = (lo + u * (hi - lo)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        Ok((mean + self.normal.inverse_cdf(p)).clamp(-c, c))
    }

    fn source(&self, x: f64) -> GaussianSource {
        GaussianSource { mean: 0.5 * x, log_scale: self.log_scale(x) }
    }

    #[inline]
    fn log_density_from(&self, src: &GaussianSource, y: f64) -> f64 {
        let d = y - src.mean;
        src.log_scale - 0.5 * d * d
    }

    fn epsilon_bounds(&self) -> Option<EpsilonBounds> {
        Some(self.bounds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::probe_epsilon_bounds;
    use crate::rng::stream;

    #[test]
    fn observable_clamps() {
        assert_eq!(deviation_observable(-1.5), -1.0);
        assert_eq!(deviation_observable(0.3), 0.3);
        assert_eq!(deviation_observable(2.0), 1.0);
    }

    #[test]
    fn untilted_potential_is_one() {
        let m = RareEventModel::new(2.0, 0.0).unwrap();
        for x in [-2.0, -0.5, 0.0, 1.7] {
            assert_eq!(m.log_potential(x), 0.0);
        }
    }

    #[test]
    fn density_is_normalised() {
        let m = RareEventModel::new(2.0, 3.0).unwrap();
        for x in [-2.0, -0.3, 1.1, 2.0] {
            let n = 4000;
            let h = 4.0 / n as f64;
            let mut s = m.transition_density(x, -2.0) + m.transition_density(x, 2.0);
            for k in 1..n {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                s += w * m.transition_density(x, -2.0 + h * k as f64);
            }
            assert!((s * h / 3.0 - 1.0).abs() < 1e-12, "x={x}: {}", s * h / 3.0);
            // q = G · 2c · m
            let y = 0.4;
            let q = m.log_density(x, y).exp();
            let direct = m.log_potential(x).exp() * 4.0 * m.transition_density(x, y);
            assert!((q - direct).abs() < 1e-13 * direct);
        }
    }

    #[test]
    fn satisfies_two_sided_bounds() {
        for alpha in [0.0, 1.0, 6.0, 16.0, -3.0] {
            let m = RareEventModel::new(2.0, alpha).unwrap();
            let report = probe_epsilon_bounds(&m, 64).unwrap();
            assert!(report.passed, "alpha={alpha}: {report:?}");
            // The bounds are tight up to the scan resolution.
            assert!(report.min_q <= report.bounds.lower * 1.01);
            assert!(report.max_q >= report.bounds.upper * 0.99);
        }
    }

    #[test]
    fn mutation_matches_density() {
        let m = RareEventModel::new(2.0, 0.0).unwrap();
        let normal = Normal::new(0.0, 1.0).unwrap();
        for (k, &x) in [-2.0, 0.0, 1.5].iter().enumerate() {
            let mut rng = stream(5, 77, k as u64, 0);
            let mut draws: Vec<f64> = (0..100_000).map(|_| m.mutate(x, &mut rng).unwrap()).collect();
            draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let lo = normal.cdf(-2.0 - 0.5 * x);
            let hi = normal.cdf(2.0 - 0.5 * x);
            let cdf = |y: f64| (normal.cdf(y - 0.5 * x) - lo) / (hi - lo);
            let d = crate::stats::ks_statistic(&draws, cdf);
            assert!(d < 1.949 / (draws.len() as f64).sqrt(), "x={x}: D={d}");
        }
    }
}
