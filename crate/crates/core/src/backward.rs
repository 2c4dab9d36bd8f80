//! Backward pass: `h_{p,2n}^N` on the particle clouds, its extension to
//! arbitrary states, the particle twisted kernel and the conditional chain.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::forward::ForwardTrajectory;
use crate::kernel::KernelModel;
use crate::weights::{lse_unchecked, CategoricalTable};

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardSolution {
    /// Half horizon `n`.
    pub n: usize,
    /// `h_values[p - n][i] = h_{p,2n}^N(ζ_p^i)` for `p = n..=2n`.
    pub h_values: Vec<Vec<f64>>,
    /// `η_p^N(h_{p,2n}^N)` for `p = n..=2n`; equal to 1 up to rounding.
    pub normalizers: Vec<f64>,
}

impl BackwardSolution {
    /// Stored layer `p`, `n ≤ p ≤ 2n`.
    pub fn layer(&self, p: usize) -> &[f64] {
        &self.h_values[p - self.n]
    }

    /// Copy with every stored value multiplied by `factor`. Only useful as a
    /// negative control for the diagnostics.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            h_values: self
                .h_values
                .iter()
                .map(|l| l.iter().map(|h| h * factor).collect())
                .collect(),
            normalizers: self.normalizers.iter().map(|z| z * factor).collect(),
        }
    }
}

/// `log(h_{p}(ζ_p^j)) - log Σ_i q(ζ_{p-1}^i, ζ_p^j)`: the per-atom offsets
/// of one backward step into layer `p`.
fn layer_offsets(traj: &ForwardTrajectory, h: &[f64], p: usize) -> Vec<f64> {
    traj.denominators(p)
        .iter()
        .zip(h)
        .map(|(d, h)| h.ln() - d)
        .collect()
}

fn weighted_sum<M: KernelModel>(model: &M, src: &M::Source, atoms: &[f64], offsets: &[f64]) -> f64 {
    atoms
        .iter()
        .zip(offsets)
        .map(|(&y, &o)| (model.log_density_from(src, y) + o).exp())
        .sum()
}

pub fn run_backward<M: KernelModel>(model: &M, traj: &ForwardTrajectory) -> Result<BackwardSolution> {
    let two_n = traj.horizon();
    let n = traj.half_horizon();
    let size = traj.n_particles();
    let mut layers = vec![vec![1.0; size]];
    for p in (n..two_n).rev() {
        let next = layers.last().expect("at least the terminal layer");
        let offsets = layer_offsets(traj, next, p + 1);
        let atoms = traj.ensemble(p + 1);
        let h: Vec<f64> = traj
            .ensemble(p)
            .par_iter()
            .map(|&x| weighted_sum(model, &model.source(x), atoms, &offsets))
            .collect();
        if let Some(bad) = h.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvariantFailure(format!(
                "h at layer {p}, particle {bad} is {}",
                h[bad]
            )));
        }
        layers.push(h);
    }
    layers.reverse();
    let normalizers = layers
        .iter()
        .map(|l| l.iter().sum::<f64>() / size as f64)
        .collect();
    Ok(BackwardSolution { n, h_values: layers, normalizers })
}

/// `h_{p,2n}^N(x)` for any `x`, one backward step from stored layer `p + 1`.
pub fn eval_h<M: KernelModel>(
    model: &M,
    traj: &ForwardTrajectory,
    backward: &BackwardSolution,
    p: usize,
    x: f64,
) -> Result<f64> {
    let two_n = traj.horizon();
    if p < backward.n || p > two_n {
        return invalid(format!("time {p} outside {}..={two_n}", backward.n));
    }
    model.space().check(x)?;
    if p == two_n {
        return Ok(1.0);
    }
    let offsets = layer_offsets(traj, backward.layer(p + 1), p + 1);
    Ok(weighted_sum(model, &model.source(x), traj.ensemble(p + 1), &offsets))
}

/// `(1/m) Σ_{p<m} h_{n+p,2n}^N(x)`.
pub fn window_average_h<M: KernelModel>(
    model: &M,
    traj: &ForwardTrajectory,
    backward: &BackwardSolution,
    x: f64,
    m: usize,
) -> Result<f64> {
    if m == 0 || m > backward.n {
        return invalid(format!("window {m} outside 1..={}", backward.n));
    }
    model.space().check(x)?;
    let src = model.source(x);
    let mut total = 0.0;
    for p in backward.n..backward.n + m {
        let offsets = layer_offsets(traj, backward.layer(p + 1), p + 1);
        total += weighted_sum(model, &src, traj.ensemble(p + 1), &offsets);
    }
    Ok(total / m as f64)
}

/// The default window `n / 10`, at least 1.
pub fn default_window(n: usize) -> usize {
    (n / 10).max(1)
}

/// One row `P_{(p,2n)}^N(x, ·)` of the particle twisted kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistedRow {
    pub source: f64,
    pub time: usize,
    /// Over the atoms `ζ_p^1..ζ_p^N`, in particle order.
    pub probabilities: Vec<f64>,
    /// `log h_{p-1,2n}^N(x)`, the log of the row's normaliser.
    pub log_normalizer: f64,
}

pub fn twisted_row<M: KernelModel>(
    model: &M,
    traj: &ForwardTrajectory,
    backward: &BackwardSolution,
    p: usize,
    x: f64,
) -> Result<TwistedRow> {
    let two_n = traj.horizon();
    if p <= backward.n || p > two_n {
        return invalid(format!("time {p} outside {}..={two_n}", backward.n + 1));
    }
    model.space().check(x)?;
    let src = model.source(x);
    let offsets = layer_offsets(traj, backward.layer(p), p);
    let log_w: Vec<f64> = traj
        .ensemble(p)
        .iter()
        .zip(&offsets)
        .map(|(&y, &o)| model.log_density_from(&src, y) + o)
        .collect();
    let log_normalizer = lse_unchecked(&log_w);
    let mut probabilities: Vec<f64> = log_w.iter().map(|w| (w - log_normalizer).exp()).collect();
    let s: f64 = probabilities.iter().sum();
    probabilities.iter_mut().for_each(|v| *v /= s);
    Ok(TwistedRow { source: x, time: p, probabilities, log_normalizer: log_normalizer + s.ln() })
}

/// A path of the conditional twisted chain started at time `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistedPath {
    /// `X̌_0 = x0, X̌_1, …, X̌_m`.
    pub states: Vec<f64>,
    /// Particle index of `X̌_p` in `ζ_{n+p}` for `p ≥ 1`.
    pub atoms: Vec<usize>,
    pub log_correction: f64,
}

/// Samples `X̌_p ~ P_{(n+p,2n)}^N(X̌_{p-1}, ·)` for `p = 1..=m` and returns
/// the log likelihood-ratio correction
/// `Σ_{p<m} [log λ_{n+p}^N - log G(X̌_p)] + log h_n(X̌_0) - log h_{n+m}(X̌_m)`.
pub fn sample_twisted_chain<M: KernelModel, R: Rng + ?Sized>(
    model: &M,
    traj: &ForwardTrajectory,
    backward: &BackwardSolution,
    x0: f64,
    m: usize,
    rng: &mut R,
) -> Result<TwistedPath> {
    let n = backward.n;
    if m > n {
        return invalid(format!("chain length {m} exceeds n = {n}"));
    }
    model.space().check(x0)?;
    let mut states = vec![x0];
    let mut atoms = Vec::with_capacity(m);
    let mut log_correction = 0.0;
    let mut x = x0;
    for p in 1..=m {
        let row = twisted_row(model, traj, backward, n + p, x)?;
        if p == 1 {
            log_correction += row.log_normalizer;
        }
        log_correction += traj.log_lambda[n + p - 1] - model.log_potential(x);
        let table = CategoricalTable::new(&row.probabilities)?;
        let j = table.sample(rng);
        x = traj.ensemble(n + p)[j];
        states.push(x);
        atoms.push(j);
    }
    if let Some(&j) = atoms.last() {
        log_correction -= backward.layer(n + m)[j].ln();
    }
    Ok(TwistedPath { states, atoms, log_correction })
}

/// Starting measure for [`random_semigroup_apply`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SemigroupStart {
    /// The empirical measure of the starting layer.
    Empirical,
    Dirac(f64),
}

/// `log μ' Q_{p,n}^N(φ)` for non-negative `φ`, with `μ'` a measure at layer
/// `p` and the frozen particle operators `Q_ℓ^N(x, ·) = λ_{ℓ-1}^N Σ_j
/// q(x, ζ_ℓ^j) / Σ_i q(ζ_{ℓ-1}^i, ζ_ℓ^j) δ_{ζ_ℓ^j}`.
pub fn log_random_semigroup_apply<M: KernelModel>(
    model: &M,
    traj: &ForwardTrajectory,
    start: SemigroupStart,
    p: usize,
    n: usize,
    phi: impl Fn(f64) -> f64,
) -> Result<f64> {
    if p > n || n > traj.horizon() {
        return invalid(format!("layers {p}..{n} outside 0..={}", traj.horizon()));
    }
    // Log weights over the atoms of the current layer.
    let (mut layer, mut log_w): (usize, Vec<f64>) = match start {
        SemigroupStart::Empirical => {
            let size = traj.n_particles();
            (p, vec![-(size as f64).ln(); size])
        }
        SemigroupStart::Dirac(x) => {
            model.space().check(x)?;
            if p == n {
                let v = phi(x);
                return Ok(if v > 0.0 { v.ln() } else { f64::NEG_INFINITY });
            }
            let src = model.source(x);
            let w = traj
                .ensemble(p + 1)
                .iter()
                .zip(traj.denominators(p + 1))
                .map(|(&y, d)| model.log_density_from(&src, y) - d + traj.log_lambda[p])
                .collect();
            (p + 1, w)
        }
    };
    while layer < n {
        let sources: Vec<M::Source> = traj.ensemble(layer).iter().map(|&x| model.source(x)).collect();
        let lam = traj.log_lambda[layer];
        let next = traj.ensemble(layer + 1);
        let dens = traj.denominators(layer + 1);
        log_w = next
            .par_iter()
            .zip(dens)
            .map_init(
                || Vec::with_capacity(sources.len()),
                |buf, (&y, d)| {
                    buf.clear();
                    buf.extend(
                        sources
                            .iter()
                            .zip(&log_w)
                            .map(|(s, w)| w + model.log_density_from(s, y)),
                    );
                    lse_unchecked(buf) + lam - d
                },
            )
            .collect();
        layer += 1;
    }
    let terms: Vec<f64> = traj
        .ensemble(n)
        .iter()
        .zip(&log_w)
        .map(|(&x, w)| {
            let v = phi(x);
            if v < 0.0 || !v.is_finite() {
                f64::NAN
            } else if v == 0.0 {
                f64::NEG_INFINITY
            } else {
                w + v.ln()
            }
        })
        .collect();
    if terms.iter().any(|t| t.is_nan()) {
        return invalid("test function must be finite and non-negative");
    }
    Ok(lse_unchecked(&terms))
}

/// `μ' Q_{0,n}^N(φ)` for a non-negative test function.
pub fn random_semigroup_apply<M: KernelModel>(
    model: &M,
    traj: &ForwardTrajectory,
    start: SemigroupStart,
    phi: impl Fn(f64) -> f64,
    n: usize,
) -> Result<f64> {
    Ok(log_random_semigroup_apply(model, traj, start, 0, n, phi)?.exp())
}

/// Outcome of the path-wise ratio bound check `ε⁻/ε⁺ ≤ h ≤ ε⁺/ε⁻`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    pub min_h: f64,
    pub max_h: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub passed: bool,
}

/// Evaluates `h_{p,2n}^N` at every probe point and every `p = n..2n-1`.
pub fn pathwise_ratio_diagnostic<M: KernelModel>(
    model: &M,
    traj: &ForwardTrajectory,
    backward: &BackwardSolution,
    probes: &[f64],
) -> Result<RatioReport> {
    let bounds = model.epsilon_bounds().ok_or_else(|| {
        Error::UnsupportedDiagnostic(format!("{} declares no epsilon bounds", model.label()))
    })?;
    let values: Vec<f64> = (backward.n..traj.horizon())
        .flat_map(|p| probes.iter().map(move |&x| (p, x)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(p, x)| eval_h(model, traj, backward, p, x))
        .collect::<Result<_>>()?;
    let min_h = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max_h = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lower_bound = 1.0 / bounds.ratio();
    let upper_bound = bounds.ratio();
    Ok(RatioReport {
        min_h,
        max_h,
        lower_bound,
        upper_bound,
        passed: min_h >= lower_bound && max_h <= upper_bound,
    })
}
