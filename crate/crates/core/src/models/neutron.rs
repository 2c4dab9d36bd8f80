//! One-dimensional neutron transport kernel on `[0, L]`.
//!
//! A neutron at `x` survives absorption with probability `exp(-U_δ(x))`,
//! jumps by a two-sided exponential displacement with rate `c`, and is lost
//! if it leaves `[0, L]`. The first-moment kernel is split as
//! `G(x) = e^{-U_δ(x)} [1 - ½(e^{-cx} + e^{-c(L-x)})]` and `M(x, ·)` the
//! truncated Laplace law. With `ν` uniform on `[0, L]` the density reduces to
//! `q(x, y) = e^{-U_δ(x)} (cL/2) e^{-c|y-x|}`.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::kernel::{extremize, EpsilonBounds, KernelModel, StateSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct NeutronModel {
    pub length: f64,
    pub rate: f64,
    pub delta: f64,
    bounds: EpsilonBounds,
}

#[derive(Debug, Clone, Copy)]
pub struct NeutronSource {
    x: f64,
    log_scale: f64,
}

impl NeutronModel {
    pub fn new(length: f64, rate: f64, delta: f64) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return invalid(format!("neutron length L must be positive, got {length}"));
        }
        if !(rate > 0.0) || !rate.is_finite() {
            return invalid(format!("neutron rate c must be positive, got {rate}"));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return invalid(format!("neutron delta must be non-negative, got {delta}"));
        }
        let mut model = Self {
            length,
            rate,
            delta,
            bounds: EpsilonBounds { lower: 1.0, upper: 1.0 },
        };
        model.bounds = model.compute_bounds();
        Ok(model)
    }

    /// The double-well absorption potential, polynomial in `t = 2x/3 - 0.5`.
    pub fn absorption(&self, x: f64) -> f64 {
        if self.delta == 0.0 {
            return 0.0;
        }
        let t = 2.0 * x / 3.0 - 0.5;
        let t2 = t * t;
        let t4 = t2 * t2;
        self.delta * (1e-3 * t4 * t2 - 300.0 * t4 + 24.0 * t2 + 28.0 / 5.0 * t)
    }

    fn boundary_loss(&self, x: f64) -> f64 {
        (-self.rate * x).exp() + (-self.rate * (self.length - x)).exp()
    }

    /// Lebesgue density of `M(x, ·)` at `y`.
    pub fn transition_density(&self, x: f64, y: f64) -> f64 {
        if !(0.0..=self.length).contains(&y) {
            return 0.0;
        }
        self.rate / (2.0 - self.boundary_loss(x)) * (-self.rate * (y - x).abs()).exp()
    }

    fn log_scale(&self, x: f64) -> f64 {
        -self.absorption(x) + (0.5 * self.rate * self.length).ln()
    }

    fn compute_bounds(&self) -> EpsilonBounds {
        let base = 0.5 * self.rate * self.length;
        if self.delta == 0.0 {
            return EpsilonBounds {
                lower: base * (-self.rate * self.length).exp(),
                upper: base,
            };
        }
        let l = self.length;
        let c = self.rate;
        // max over y of q(x, ·) sits at y = x; the min at the farther endpoint.
        let (_, hi) = extremize(|x| -self.absorption(x), 0.0, l, &[]);
        let (lo, _) = extremize(
            |x| -self.absorption(x) - c * x.max(l - x),
            0.0,
            l,
            &[0.5 * l],
        );
        // Numerical extremisation: widen by a relative 1e-9.
        EpsilonBounds {
            lower: base * lo.exp() * (1.0 - 1e-9),
            upper: base * hi.exp() * (1.0 + 1e-9),
        }
    }
}

impl KernelModel for NeutronModel {
    type Source = NeutronSource;

    fn space(&self) -> StateSpace {
        StateSpace { lower: 0.0, upper: self.length }
    }

    fn label(&self) -> String {
        format!("neutron(L={}, c={}, delta={})", self.length, self.rate, self.delta)
    }

    fn log_potential(&self, x: f64) -> f64 {
        -self.absorption(x) + (1.0 - 0.5 * self.boundary_loss(x)).ln()
    }

    fn mutate<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Result<f64> {
        let c = self.rate;
        let l = self.length;
        let left_mass = -(-c * x).exp_m1() / c;
        let right_mass = -(-c * (l - x)).exp_m1() / c;
        let target = rng.gen::<f64>() * (left_mass + right_mass);
        let y = if target < left_mass {
            // ∫_0^y e^{-c(x-s)} ds = (e^{-c(x-y)} - e^{-cx}) / c
            x + (c * target + (-c * x).exp()).ln() / c
        } else {
            // ∫_x^y e^{-c(s-x)} ds = (1 - e^{-c(y-x)}) / c
            x - (-c * (target - left_mass)).ln_1p() / c
        };
        Ok(y.clamp(0.0, l))
    }

    fn source(&self, x: f64) -> NeutronSource {
        NeutronSource { x, log_scale: self.log_scale(x) }
    }

    #[inline]
    fn log_density_from(&self, src: &NeutronSource, y: f64) -> f64 {
        src.log_scale - self.rate * (y - src.x).abs()
    }

    fn epsilon_bounds(&self) -> Option<EpsilonBounds> {
        Some(self.bounds)
    }
}
