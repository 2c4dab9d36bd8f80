//! Average-cost control: `V⋆ = -log h⋆` and `ς⋆ = -log λ⋆` solve
//! `V(x) + ς = -log G(x) - log M(e^{-V})(x)`.

use rayon::prelude::*;

use crate::backward::{window_average_h, BackwardSolution};
use crate::error::{invalid, Result};
use crate::forward::{log_lambda_average, ForwardTrajectory};
use crate::kernel::KernelModel;
use crate::oracle::{GridEigenSystem, GridOperator};

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunctionEstimate {
    pub eval_points: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub varsigma_hat: f64,
    pub n_particles: usize,
    pub n: usize,
    pub window: usize,
}

impl ValueFunctionEstimate {
    /// `exp(-v̂)`, the window-averaged `ĥ`.
    pub fn h_hat(&self) -> Vec<f64> {
        self.v_hat.iter().map(|v| (-v).exp()).collect()
    }

    /// Midpoints of the `k` largest jumps `|v̂(x_{i+1}) - v̂(x_i)|`, sorted.
    pub fn jump_locations(&self, k: usize) -> Vec<f64> {
        jump_locations(&self.eval_points, &self.v_hat, k)
    }
}

pub fn jump_locations(xs: &[f64], values: &[f64], k: usize) -> Vec<f64> {
    let mut gaps: Vec<(f64, f64)> = xs
        .windows(2)
        .zip(values.windows(2))
        .map(|(x, v)| ((v[1] - v[0]).abs(), 0.5 * (x[0] + x[1])))
        .collect();
    gaps.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out: Vec<f64> = gaps.into_iter().take(k).map(|g| g.1).collect();
    out.sort_by(f64::total_cmp);
    out
}

/// `v̂(x) = -log ĥ(x)` with `ĥ` the window average over `p = n..n+m-1`, and
/// `ς̂ = -(1/n) Σ_{p<n} log λ_p^N`.
pub fn estimate_value_function<M: KernelModel>(
    model: &M,
    traj: &ForwardTrajectory,
    backward: &BackwardSolution,
    eval_points: &[f64],
    window: usize,
) -> Result<ValueFunctionEstimate> {
    let v_hat: Vec<f64> = eval_points
        .par_iter()
        .map(|&x| window_average_h(model, traj, backward, x, window).map(|h| -h.ln()))
        .collect::<Result<_>>()?;
    if let Some(i) = v_hat.iter().position(|v| !v.is_finite()) {
        return Err(crate::Error::InvariantFailure(format!(
            "value estimate is not finite at {}",
            eval_points[i]
        )));
    }
    Ok(ValueFunctionEstimate {
        eval_points: eval_points.to_vec(),
        v_hat,
        varsigma_hat: -log_lambda_average(traj, backward.n)?,
        n_particles: traj.n_particles(),
        n: backward.n,
        window,
    })
}

/// `max_i |V⋆_i + ς⋆ + log G_i + log M(e^{-V⋆})_i|` on the grid.
pub fn bellman_residual(eig: &GridEigenSystem, op: &GridOperator) -> f64 {
    let varsigma = -eig.lambda_star.ln();
    op.kernel
        .outer_iter()
        .zip(&eig.h_star)
        .map(|(row, &h)| {
            let v = -h.ln();
            // log G + log M(h) = log (K h).
            let kh: f64 = row.iter().zip(&eig.h_star).map(|(k, hj)| k * hj).sum();
            (v + varsigma + kh.ln()).abs()
        })
        .fold(0.0, f64::max)
}

/// Per node, `U + KL(M̌_h ‖ M) + M̌_h(V) - (-log G - log M(e^{-V}))` with
/// `U = -log G`, `M̌_h(x, dy) ∝ M(x, dy) h(y)` and everything on the grid.
/// Nonnegative for every positive `h`; zero when `h ∝ e^{-V}`.
pub fn jensen_gap(op: &GridOperator, h: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if h.len() != op.len() || v.len() != op.len() {
        return invalid("h and V must be grid functions");
    }
    if h.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return invalid("h must be positive and finite");
    }
    Ok(op
        .kernel
        .outer_iter()
        .zip(&op.g_values)
        .map(|(row, &g)| {
            let m_row: Vec<f64> = row.iter().map(|k| k / g).collect();
            let mh: f64 = m_row.iter().zip(h).map(|(m, h)| m * h).sum();
            let mut kl = 0.0;
            let mut twisted_v = 0.0;
            let mut m_exp = 0.0;
            for j in 0..h.len() {
                let w = m_row[j] * h[j] / mh;
                if w > 0.0 {
                    kl += w * (h[j] / mh).ln();
                    twisted_v += w * v[j];
                }
                m_exp += m_row[j] * (-v[j]).exp();
            }
            let u = -g.ln();
            u + kl + twisted_v - (-g.ln() - m_exp.ln())
        })
        .collect())
}
