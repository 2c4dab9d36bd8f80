//! Importance-sampling estimators of `π_m(δ) = P_x(Σ_{p=1}^m U(X_p) > mδ)`
//! and the large-deviation diagnostics built on `Λ⋆(α)`.

use rayon::prelude::*;

use crate::backward::{run_backward, sample_twisted_chain, BackwardSolution};
use crate::error::{invalid, Result};
use crate::forward::{log_lambda_average, run_forward, ForwardTrajectory, InitialLaw};
use crate::kernel::KernelModel;
use crate::models::RareEventModel;
use crate::oracle::{GridEigenSystem, GridOperator};
use crate::rng::{derive_seed, stream, tag};
use crate::stats::Summary;
use crate::weights::CategoricalTable;

/// One estimator's replicated output.
#[derive(Debug, Clone, PartialEq)]
pub struct IsEstimate {
    pub method: String,
    pub m: usize,
    pub delta: f64,
    pub alpha: f64,
    pub mean: f64,
    pub std_error: f64,
    /// `None` when every replicate was zero.
    pub relative_variance: Option<f64>,
    pub replications: usize,
}

impl IsEstimate {
    fn from_values(method: &str, m: usize, delta: f64, alpha: f64, values: &[f64]) -> Self {
        let s = Summary::of(values);
        Self {
            method: method.to_string(),
            m,
            delta,
            alpha,
            mean: s.mean,
            std_error: s.std_error,
            relative_variance: s.relative_variance(),
            replications: s.replications,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RareEventReport {
    pub m: usize,
    pub delta: f64,
    pub estimates: Vec<IsEstimate>,
    pub oracle_bracket: Option<(f64, f64)>,
}

fn exceeds(sum: f64, m: usize, delta: f64) -> bool {
    sum > m as f64 * delta
}

fn check_replications(replications: usize) -> Result<()> {
    if replications < 2 {
        return invalid("at least two replications are needed for a variance");
    }
    Ok(())
}

/// Plain Monte Carlo under `M`: the model's tilt is ignored.
pub fn naive_is(
    model: &RareEventModel,
    m: usize,
    delta: f64,
    replications: usize,
    x0: f64,
    seed: u64,
) -> Result<IsEstimate> {
    check_replications(replications)?;
    model.space().check(x0)?;
    let values: Vec<f64> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, tag::NAIVE, r as u64, 0);
            let mut x = x0;
            let mut sum = 0.0;
            for _ in 0..m {
                x = model.mutate(x, &mut rng)?;
                sum += model.observable(x);
            }
            Ok(if exceeds(sum, m, delta) { 1.0 } else { 0.0 })
        })
        .collect::<Result<_>>()?;
    Ok(IsEstimate::from_values("naive", m, delta, 0.0, &values))
}

/// Importance sampling from the grid twisted kernel `P⋆` of the tilted
/// model. States live on the grid nodes; `x0` is snapped to the nearest one.
/// Each replicate carries the weight
/// `λ⋆^m h⋆(X_0) / h⋆(X_m) / Π_{p<m} G_α(X_p)`.
#[allow(clippy::too_many_arguments)]
pub fn twisted_exact_is(
    model: &RareEventModel,
    op: &GridOperator,
    eig: &GridEigenSystem,
    m: usize,
    delta: f64,
    replications: usize,
    x0: f64,
    seed: u64,
) -> Result<IsEstimate> {
    check_replications(replications)?;
    model.space().check(x0)?;
    let tables: Vec<CategoricalTable> = eig
        .p_star
        .outer_iter()
        .map(|row| CategoricalTable::new(row.as_slice().expect("standard layout")))
        .collect::<Result<_>>()?;
    let start = op.nearest_node(x0);
    let log_lambda = eig.lambda_star.ln();
    let values: Vec<f64> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, tag::TWISTED, r as u64, 0);
            let mut i = start;
            let mut sum = 0.0;
            let mut log_w = m as f64 * log_lambda + eig.h_star[start].ln();
            for _ in 0..m {
                log_w -= model.log_potential(op.nodes[i]);
                i = tables[i].sample(&mut rng);
                sum += model.observable(op.nodes[i]);
            }
            log_w -= eig.h_star[i].ln();
            if exceeds(sum, m, delta) {
                log_w.exp()
            } else {
                0.0
            }
        })
        .collect();
    Ok(IsEstimate::from_values("twisted-exact", m, delta, model.alpha, &values))
}

/// Indicator-times-correction values of `chains` conditional twisted chains
/// sampled on one frozen particle system.
#[allow(clippy::too_many_arguments)]
pub fn conditional_values(
    model: &RareEventModel,
    traj: &ForwardTrajectory,
    backward: &BackwardSolution,
    m: usize,
    delta: f64,
    chains: usize,
    x0: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if m > backward.n {
        return invalid(format!("chain length {m} exceeds n = {}", backward.n));
    }
    (0..chains)
        .map(|r| {
            if m == 0 {
                return Ok(0.0);
            }
            let mut rng = stream(seed, tag::CHAIN, r as u64, 0);
            let path = sample_twisted_chain(model, traj, backward, x0, m, &mut rng)?;
            let sum: f64 = path.states[1..].iter().map(|&x| model.observable(x)).sum();
            Ok(if exceeds(sum, m, delta) { path.log_correction.exp() } else { 0.0 })
        })
        .collect()
}

/// The conditional particle estimator averaged over `chains` chains on one
/// particle system. Unbiased only after averaging over particle systems too.
#[allow(clippy::too_many_arguments)]
pub fn conditional_particle_is(
    model: &RareEventModel,
    traj: &ForwardTrajectory,
    backward: &BackwardSolution,
    m: usize,
    delta: f64,
    chains: usize,
    x0: f64,
    seed: u64,
) -> Result<IsEstimate> {
    check_replications(chains)?;
    let values = conditional_values(model, traj, backward, m, delta, chains, x0, seed)?;
    Ok(IsEstimate::from_values("conditional", m, delta, model.alpha, &values))
}

/// Settings of a fully replicated conditional-IS experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalDesign {
    pub n_particles: usize,
    pub n: usize,
    /// Independent particle systems.
    pub systems: usize,
    /// Conditional chains per particle system.
    pub chains: usize,
    pub x0: f64,
}

/// Runs `systems` independent forward/backward passes (started at `x0`) and
/// `chains` conditional chains on each, for every `(m, δ)` pair requested.
/// Returns one estimate per pair, pooled over all `(system, chain)` values.
pub fn replicated_conditional_is(
    model: &RareEventModel,
    design: ConditionalDesign,
    horizons: &[usize],
    deltas: &[f64],
    seed: u64,
) -> Result<Vec<IsEstimate>> {
    if design.systems * design.chains < 2 {
        return invalid("at least two replicates are needed for a variance");
    }
    if let Some(&m) = horizons.iter().find(|&&m| m > design.n) {
        return invalid(format!("chain length {m} exceeds n = {}", design.n));
    }
    let per_system: Vec<Vec<Vec<f64>>> = (0..design.systems)
        .into_par_iter()
        .map(|s| {
            let sys_seed = derive_seed(seed, tag::REPLICATE, s as u64);
            let traj = run_forward(model, design.n_particles, 2 * design.n, InitialLaw::Dirac(design.x0), sys_seed)?;
            let backward = run_backward(model, &traj)?;
            let mut out = Vec::with_capacity(horizons.len() * deltas.len());
            for (k, &m) in horizons.iter().enumerate() {
                // Chains for different m are independent; deltas share paths.
                if m == 0 {
                    // The event `0 > 0` is empty; no chain is sampled.
                    out.extend(deltas.iter().map(|_| vec![0.0; design.chains]));
                    continue;
                }
                let chain_seed = derive_seed(sys_seed, tag::CHAIN, k as u64);
                let paths = (0..design.chains)
                    .map(|r| {
                        let mut rng = stream(chain_seed, tag::CHAIN, r as u64, 0);
                        let path = sample_twisted_chain(model, &traj, &backward, design.x0, m, &mut rng)?;
                        let sum: f64 = path.states[1..].iter().map(|&x| model.observable(x)).sum();
                        Ok((sum, path.log_correction))
                    })
                    .collect::<Result<Vec<_>>>()?;
                for &delta in deltas {
                    out.push(
                        paths
                            .iter()
                            .map(|&(sum, lc)| if exceeds(sum, m, delta) { lc.exp() } else { 0.0 })
                            .collect(),
                    );
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut estimates = Vec::new();
    let mut k = 0;
    for &m in horizons {
        for &delta in deltas {
            let values: Vec<f64> = per_system.iter().flat_map(|s| s[k].iter().copied()).collect();
            estimates.push(IsEstimate::from_values("conditional", m, delta, model.alpha, &values));
            k += 1;
        }
    }
    Ok(estimates)
}

/// Estimates `Λ̂(α)` on a grid of tilts.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaCurve {
    pub alphas: Vec<f64>,
    pub log_lambda_hat: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_particles: usize,
    pub n: usize,
    pub seeds: usize,
}

/// `Λ̂(α) = (1/n) Σ_{p<n} log λ_p^N`, averaged over `seeds` particle systems
/// started at `x0`. The same seeds are used for every `α`.
pub fn lambda_curve(
    base: &RareEventModel,
    alphas: &[f64],
    n_particles: usize,
    n: usize,
    seeds: usize,
    x0: f64,
    seed: u64,
) -> Result<LambdaCurve> {
    if alphas.is_empty() {
        return invalid("no tilts given");
    }
    if alphas.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("tilts must be strictly increasing");
    }
    if seeds == 0 || n == 0 {
        return invalid("seeds and n must be positive");
    }
    let two_n = n + n % 2;
    let jobs: Vec<(usize, usize)> = (0..alphas.len()).flat_map(|a| (0..seeds).map(move |s| (a, s))).collect();
    let values: Vec<f64> = jobs
        .par_iter()
        .map(|&(a, s)| {
            let model = base.with_alpha(alphas[a])?;
            let traj = run_forward(
                &model,
                n_particles,
                two_n.max(2),
                InitialLaw::Dirac(x0),
                derive_seed(seed, tag::REPLICATE, s as u64),
            )?;
            log_lambda_average(&traj, n)
        })
        .collect::<Result<_>>()?;
    let mut log_lambda_hat = Vec::with_capacity(alphas.len());
    let mut std_errors = Vec::with_capacity(alphas.len());
    for chunk in values.chunks(seeds) {
        let s = Summary::of(chunk);
        log_lambda_hat.push(s.mean);
        std_errors.push(if seeds > 1 { s.std_error } else { 0.0 });
    }
    Ok(LambdaCurve { alphas: alphas.to_vec(), log_lambda_hat, std_errors, n_particles, n, seeds })
}

impl LambdaCurve {
    /// Linear interpolation; `None` outside the tilt range.
    pub fn interpolate(&self, alpha: f64) -> Option<f64> {
        let a = &self.alphas;
        if alpha < a[0] || alpha > a[a.len() - 1] {
            return None;
        }
        let k = a.partition_point(|&v| v <= alpha);
        if k == a.len() {
            return Some(self.log_lambda_hat[a.len() - 1]);
        }
        if k == 0 {
            return Some(self.log_lambda_hat[0]);
        }
        let t = (alpha - a[k - 1]) / (a[k] - a[k - 1]);
        Some(self.log_lambda_hat[k - 1] * (1.0 - t) + self.log_lambda_hat[k] * t)
    }

    /// Interior points lying above the chord of their neighbours by more than
    /// `k_sigma` pooled standard errors.
    pub fn convexity_violations(&self, k_sigma: f64) -> Vec<usize> {
        let a = &self.alphas;
        let l = &self.log_lambda_hat;
        let se = &self.std_errors;
        (1..a.len().saturating_sub(1))
            .filter(|&i| {
                let t = (a[i] - a[i - 1]) / (a[i + 1] - a[i - 1]);
                let chord = l[i - 1] * (1.0 - t) + l[i + 1] * t;
                let pooled = (se[i - 1].powi(2) + se[i].powi(2) + se[i + 1].powi(2)).sqrt();
                l[i] - chord > k_sigma * pooled
            })
            .collect()
    }
}

/// `I(t) = max_α [tα - Λ̂(α)]` over the curve's tilts, with the maximiser.
pub fn rate_function(curve: &LambdaCurve, t: f64) -> Result<(f64, f64)> {
    if curve.alphas.is_empty() {
        return invalid("empty curve");
    }
    Ok(curve
        .alphas
        .iter()
        .zip(&curve.log_lambda_hat)
        .map(|(&a, &l)| (t * a - l, a))
        .fold((f64::NEG_INFINITY, f64::NAN), |best, v| if v.0 > best.0 { v } else { best }))
}

/// Central difference `(Λ̂(α+s) - Λ̂(α-s)) / 2s` on the interpolated curve.
pub fn lambda_derivative(curve: &LambdaCurve, alpha: f64, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return invalid("step must be positive");
    }
    match (curve.interpolate(alpha + step), curve.interpolate(alpha - step)) {
        (Some(hi), Some(lo)) => Ok((hi - lo) / (2.0 * step)),
        _ => invalid(format!("α ± step = {alpha} ± {step} leaves the curve's range")),
    }
}
