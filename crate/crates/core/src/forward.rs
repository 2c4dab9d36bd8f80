//! Forward pass: selection proportional to `G`, mutation by `M`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::kernel::{EmpiricalMeasure, KernelModel};
use crate::rng::{stream, tag};
use crate::weights::{lse_unchecked, CategoricalTable};

/// Law of the initial ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialLaw {
    Dirac(f64),
    Uniform,
}

/// The complete forward particle system `ζ_0, …, ζ_{2n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrajectory {
    /// `ensembles[p][i] = ζ_p^i`.
    pub ensembles: Vec<Vec<f64>>,
    /// `log λ_p^N = log (1/N) Σ_i G(ζ_p^i)` for `p = 0..=2n`.
    pub log_lambda: Vec<f64>,
    /// `log_denominators[p - 1][j] = log Σ_i q(ζ_{p-1}^i, ζ_p^j)` for `p = 1..=2n`.
    pub log_denominators: Vec<Vec<f64>>,
    pub initial: InitialLaw,
    pub seed: u64,
}

impl ForwardTrajectory {
    pub fn n_particles(&self) -> usize {
        self.ensembles[0].len()
    }

    /// `2n`.
    pub fn horizon(&self) -> usize {
        self.ensembles.len() - 1
    }

    /// `n`.
    pub fn half_horizon(&self) -> usize {
        self.horizon() / 2
    }

    pub fn ensemble(&self, p: usize) -> &[f64] {
        &self.ensembles[p]
    }

    pub fn empirical_measure(&self, p: usize) -> EmpiricalMeasure {
        EmpiricalMeasure { points: self.ensembles[p].clone() }
    }

    /// Denominators of layer `p`, `1 ≤ p ≤ 2n`.
    pub fn denominators(&self, p: usize) -> &[f64] {
        &self.log_denominators[p - 1]
    }
}

/// `log Σ_i q(src_i, y)` for every `y` in `targets`.
pub(crate) fn log_column_sums<M: KernelModel>(
    model: &M,
    sources: &[M::Source],
    targets: &[f64],
) -> Vec<f64> {
    targets
        .par_iter()
        .map_init(
            || Vec::with_capacity(sources.len()),
            |buf, &y| {
                buf.clear();
                buf.extend(sources.iter().map(|s| model.log_density_from(s, y)));
                lse_unchecked(buf)
            },
        )
        .collect()
}

fn log_mean_potential<M: KernelModel>(model: &M, points: &[f64]) -> Result<(Vec<f64>, f64)> {
    let log_g: Vec<f64> = points.iter().map(|&x| model.log_potential(x)).collect();
    if let Some(bad) = log_g.iter().position(|v| !v.is_finite()) {
        return Err(Error::ModelEvaluation(format!(
            "log G is not finite at {}",
            points[bad]
        )));
    }
    let total = lse_unchecked(&log_g);
    Ok((log_g, total - (points.len() as f64).ln()))
}

pub fn run_forward<M: KernelModel>(
    model: &M,
    n_particles: usize,
    two_n: usize,
    initial: InitialLaw,
    seed: u64,
) -> Result<ForwardTrajectory> {
    if n_particles == 0 {
        return invalid("the particle count N must be at least 1");
    }
    if two_n < 2 || two_n % 2 != 0 {
        return invalid(format!("the horizon 2n must be even and at least 2, got {two_n}"));
    }
    let space = model.space();
    let first: Vec<f64> = match initial {
        InitialLaw::Dirac(x0) => {
            space.check(x0)?;
            vec![x0; n_particles]
        }
        InitialLaw::Uniform => (0..n_particles)
            .map(|i| {
                let mut rng = stream(seed, tag::INIT, 0, i as u64);
                space.lower + rng.gen::<f64>() * space.width()
            })
            .collect(),
    };

    let mut ensembles = Vec::with_capacity(two_n + 1);
    let mut log_lambda = Vec::with_capacity(two_n + 1);
    let mut log_denominators = Vec::with_capacity(two_n);
    ensembles.push(first);

    for p in 1..=two_n {
        let prev = &ensembles[p - 1];
        let (log_g, log_lam) = log_mean_potential(model, prev)?;
        log_lambda.push(log_lam);
        let table = CategoricalTable::from_log_weights(&log_g)
            .map_err(|e| Error::InvariantFailure(format!("selection at step {p}: {e}")))?;
        let next: Vec<f64> = (0..n_particles)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, tag::FORWARD, p as u64, i as u64);
                let ancestor = table.sample(&mut rng);
                model.mutate(prev[ancestor], &mut rng)
            })
            .collect::<Result<_>>()?;
        let sources: Vec<M::Source> = prev.iter().map(|&x| model.source(x)).collect();
        log_denominators.push(log_column_sums(model, &sources, &next));
        ensembles.push(next);
    }
    let (_, last) = log_mean_potential(model, &ensembles[two_n])?;
    log_lambda.push(last);

    Ok(ForwardTrajectory { ensembles, log_lambda, log_denominators, initial, seed })
}

/// `Λ_n^N = (1/n) Σ_{p<n} log λ_p^N`.
pub fn log_lambda_average(traj: &ForwardTrajectory, n: usize) -> Result<f64> {
    if n == 0 || n > traj.horizon() {
        return invalid(format!("window {n} outside 1..={}", traj.horizon()));
    }
    Ok(traj.log_lambda[..n].iter().sum::<f64>() / n as f64)
}
