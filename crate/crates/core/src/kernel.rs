//! Dominated non-negative kernels `Q(x, dy) = G(x) M(x, dy) = q(x, y) ν(dy)`.
//!
//! Every model lives on a closed interval and uses the uniform probability
//! measure on that interval as the dominating measure `ν`. Densities and
//! potentials are carried in log domain.

use rand::Rng;

use crate::error::{invalid, Result};

/// Closed interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSpace {
    pub lower: f64,
    pub upper: f64,
}

impl StateSpace {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() || lower >= upper {
            return invalid(format!("state space [{lower}, {upper}] is not a proper interval"));
        }
        Ok(Self { lower, upper })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            invalid(format!("state {x} lies outside [{}, {}]", self.lower, self.upper))
        }
    }

    /// `count` evenly spaced points including both endpoints.
    pub fn linspace(&self, count: usize) -> Vec<f64> {
        linspace(self.lower, self.upper, count)
    }
}

pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (count - 1) as f64;
            (0..count)
                .map(|k| if k == count - 1 { stop } else { start + step * k as f64 })
                .collect()
        }
    }
}

/// Two-sided bounds `ε⁻ ≤ q(x, y) ≤ ε⁺`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonBounds {
    pub lower: f64,
    pub upper: f64,
}

impl EpsilonBounds {
    /// `ε⁺ / ε⁻`.
    pub fn ratio(&self) -> f64 {
        self.upper / self.lower
    }

    /// Contraction rate `1 - ε⁻/ε⁺`.
    pub fn rho(&self) -> f64 {
        1.0 - self.lower / self.upper
    }
}

/// A non-negative kernel with a density w.r.t. the uniform law on its space.
///
/// `Source` caches whatever depends on the source point only, so that the
/// `O(N²)` loops of the particle passes evaluate `log q` cheaply.
pub trait KernelModel: Send + Sync {
    type Source: Send + Sync;

    fn space(&self) -> StateSpace;

    fn label(&self) -> String;

    /// `log G(x)`.
    fn log_potential(&self, x: f64) -> f64;

    /// One draw from `M(x, ·)`.
    fn mutate<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Result<f64>;

    fn source(&self, x: f64) -> Self::Source;

    /// `log q(x, y)` for the cached source `x`.
    fn log_density_from(&self, src: &Self::Source, y: f64) -> f64;

    fn log_density(&self, x: f64, y: f64) -> f64 {
        self.log_density_from(&self.source(x), y)
    }

    fn epsilon_bounds(&self) -> Option<EpsilonBounds> {
        None
    }

    /// Exact masses `∫_{e_k}^{e_{k+1}} q(x, y) ν(dy)` over consecutive cells
    /// of `edges`, for models whose density is awkward to sample pointwise.
    fn cell_masses(&self, _x: f64, _edges: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Uniform-weight empirical measure `(1/N) Σ δ_{x_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub points: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return invalid("empirical measure with no points");
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, phi: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().map(|&x| phi(x)).sum::<f64>() / self.points.len() as f64
    }
}

/// Outcome of probing `ε⁻ ≤ q ≤ ε⁺` on a square grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub min_q: f64,
    pub max_q: f64,
    pub bounds: EpsilonBounds,
    pub passed: bool,
}

/// Checks the declared bounds on a `probes × probes` grid over the space.
pub fn probe_epsilon_bounds<M: KernelModel>(model: &M, probes: usize) -> Option<ProbeReport> {
    let bounds = model.epsilon_bounds()?;
    let grid = model.space().linspace(probes.max(2));
    let mut min_q = f64::INFINITY;
    let mut max_q = f64::NEG_INFINITY;
    for &x in &grid {
        let src = model.source(x);
        for &y in &grid {
            let q = model.log_density_from(&src, y).exp();
            min_q = min_q.min(q);
            max_q = max_q.max(q);
        }
    }
    let passed = min_q >= bounds.lower && max_q <= bounds.upper;
    Some(ProbeReport { min_q, max_q, bounds, passed })
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
pub(crate) fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Global extremes of a 1-D function: dense scan followed by golden-section
/// polishing around the best scan points. `breaks` are always evaluated.
pub(crate) fn extremize(
    f: impl Fn(f64) -> f64,
    lower: f64,
    upper: f64,
    breaks: &[f64],
) -> (f64, f64) {
    let scan = 4001;
    let mut pts = linspace(lower, upper, scan);
    pts.extend(breaks.iter().copied().filter(|b| *b >= lower && *b <= upper));
    let step = (upper - lower) / (scan - 1) as f64;
    let (mut lo, mut lo_x) = (f64::INFINITY, lower);
    let (mut hi, mut hi_x) = (f64::NEG_INFINITY, lower);
    for &x in &pts {
        let v = f(x);
        if v < lo {
            lo = v;
            lo_x = x;
        }
        if v > hi {
            hi = v;
            hi_x = x;
        }
    }
    let clamp = |x: f64| (x.max(lower), x.min(upper));
    let (a, _) = clamp(lo_x - step);
    let (_, b) = clamp(lo_x + step);
    let (_, v) = golden_min(&f, a, b, 80);
    lo = lo.min(v);
    let (a, _) = clamp(hi_x - step);
    let (_, b) = clamp(hi_x + step);
    let (_, v) = golden_min(|x| -f(x), a, b, 80);
    hi = hi.max(-v);
    (lo, hi)
}
