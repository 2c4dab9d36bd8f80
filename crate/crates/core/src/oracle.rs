//! Deterministic reference solver on a uniform quadrature grid.
//!
//! The kernel is discretised as a matrix of masses `K_ij ≈ Q(x_i, cell_j)`
//! where cell `j` is the trapezoid cell of node `j`. For models with a
//! pointwise density, each row is the trapezoid rule for `q(x_i, ·)` rescaled
//! so that the row sums to `G(x_i)` exactly; models whose density is singular
//! at the boundary supply exact cell masses instead.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::kernel::{linspace, EpsilonBounds, KernelModel};
use crate::models::RareEventModel;

#[derive(Debug, Clone)]
pub struct GridOperator {
    pub nodes: Vec<f64>,
    /// Trapezoid weights for `ν`, summing to 1.
    pub quad_weights: Vec<f64>,
    /// `q(x_i, x_j)`, or the cell-averaged density for cell-mass models.
    pub q_matrix: Array2<f64>,
    pub g_values: Vec<f64>,
    /// `K_ij`, rows summing to `G(x_i)`.
    pub kernel: Array2<f64>,
    pub bounds: Option<EpsilonBounds>,
}

/// Normalised composite trapezoid weights for `count` uniform nodes.
pub fn trapezoid_weights(count: usize) -> Vec<f64> {
    let interior = (count - 1) as f64;
    (0..count)
        .map(|k| if k == 0 || k == count - 1 { 0.5 / interior } else { 1.0 / interior })
        .collect()
}

/// Boundaries of the trapezoid cells around uniform `nodes`.
fn cell_edges(nodes: &[f64]) -> Vec<f64> {
    let mut edges = Vec::with_capacity(nodes.len() + 1);
    edges.push(nodes[0]);
    edges.extend(nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    edges.push(*nodes.last().expect("non-empty grid"));
    edges
}

/// Row `K(x, ·)` over the nodes together with the density row it came from.
fn discretised_row<M: KernelModel>(
    model: &M,
    nodes: &[f64],
    weights: &[f64],
    x: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(masses) = model.cell_masses(x, &cell_edges(nodes)) {
        let q = masses.iter().zip(weights).map(|(m, w)| m / w).collect();
        return Ok((masses, q));
    }
    let src = model.source(x);
    let q: Vec<f64> = nodes.iter().map(|&y| model.log_density_from(&src, y).exp()).collect();
    if let Some(bad) = q.iter().position(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::ModelEvaluation(format!(
            "q({x}, {}) = {} is not finite and positive",
            nodes[bad], q[bad]
        )));
    }
    let g = model.log_potential(x).exp();
    let total: f64 = q.iter().zip(weights).map(|(q, w)| q * w).sum();
    let row = q.iter().zip(weights).map(|(q, w)| q * w * g / total).collect();
    Ok((row, q))
}

pub fn build_grid_operator<M: KernelModel>(model: &M, grid_size: usize) -> Result<GridOperator> {
    if grid_size < 8 {
        return invalid(format!("grid size must be at least 8, got {grid_size}"));
    }
    let nodes = model.space().linspace(grid_size);
    let quad_weights = trapezoid_weights(grid_size);
    let rows: Vec<(Vec<f64>, Vec<f64>)> = nodes
        .par_iter()
        .map(|&x| discretised_row(model, &nodes, &quad_weights, x))
        .collect::<Result<_>>()?;
    let mut kernel = Array2::zeros((grid_size, grid_size));
    let mut q_matrix = Array2::zeros((grid_size, grid_size));
    for (i, (row, q)) in rows.into_iter().enumerate() {
        kernel.row_mut(i).assign(&Array1::from(row));
        q_matrix.row_mut(i).assign(&Array1::from(q));
    }
    let g_values = nodes.iter().map(|&x| model.log_potential(x).exp()).collect();
    Ok(GridOperator { nodes, quad_weights, q_matrix, g_values, kernel, bounds: model.epsilon_bounds() })
}

impl GridOperator {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `K(x, ·)` for an arbitrary state, built exactly like the matrix rows.
    pub fn row_at<M: KernelModel>(&self, model: &M, x: f64) -> Result<Vec<f64>> {
        model.space().check(x)?;
        Ok(discretised_row(model, &self.nodes, &self.quad_weights, x)?.0)
    }

    /// `ν` itself as a grid measure.
    pub fn reference_measure(&self) -> Vec<f64> {
        self.quad_weights.clone()
    }

    /// Unit mass on the node nearest to `x`.
    pub fn point_mass(&self, x: f64) -> Vec<f64> {
        let mut m = vec![0.0; self.len()];
        m[self.nearest_node(x)] = 1.0;
        m
    }

    pub fn nearest_node(&self, x: f64) -> usize {
        let lo = self.nodes[0];
        let step = self.nodes[1] - lo;
        (((x - lo) / step).round().max(0.0) as usize).min(self.len() - 1)
    }

    fn apply_left(&self, mu: &[f64]) -> Vec<f64> {
        Array1::from(mu.to_vec()).dot(&self.kernel).to_vec()
    }

    fn apply_right(&self, f: &[f64]) -> Vec<f64> {
        self.kernel.dot(&Array1::from(f.to_vec())).to_vec()
    }
}

/// Principal eigen-elements of the discretised kernel.
#[derive(Debug, Clone)]
pub struct GridEigenSystem {
    pub lambda_star: f64,
    /// Eigenfunction at the nodes, normalised by `η⋆(h⋆) = 1`.
    pub h_star: Vec<f64>,
    /// Eigen-measure as node masses summing to 1.
    pub eta_star: Vec<f64>,
    /// Twisted kernel `P⋆(i, j) = K_ij h_j / (λ⋆ h_i)`.
    pub p_star: Array2<f64>,
    pub rho: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Successive eigenvalue estimates.
    pub lambda_trace: Vec<f64>,
}

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Simultaneous power iteration for the left (measure) and right (function)
/// eigenvectors. Stops when the eigenvalue estimate (relatively), the normalised measure
/// (in `ℓ¹`) and the normalised function (relative sup norm) all move by
/// less than `tol` in one step.
pub fn power_iteration(op: &GridOperator, tol: f64, max_iter: usize) -> Result<GridEigenSystem> {
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let size = op.len();
    let mut eta = op.reference_measure();
    let mut h = vec![1.0; size];
    let mut lambda = f64::NAN;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < max_iter {
        iterations += 1;
        let mut next_eta = op.apply_left(&eta);
        let lam: f64 = next_eta.iter().sum();
        next_eta.iter_mut().for_each(|v| *v /= lam);
        let mut next_h = op.apply_right(&h);
        let scale = next_h.iter().copied().fold(0.0, f64::max);
        next_h.iter_mut().for_each(|v| *v /= scale);
        let d_eta: f64 = next_eta.iter().zip(&eta).map(|(a, b)| (a - b).abs()).sum();
        let d_h = next_h.iter().zip(&h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let d_lam = (lam - lambda).abs() / lam;
        change = d_lam.max(d_eta).max(d_h);
        eta = next_eta;
        h = next_h;
        lambda = lam;
        trace.push(lam);
        if change < tol {
            break;
        }
    }
    if change >= tol {
        return Err(Error::NonConvergence { iterations, residual: change });
    }
    let norm: f64 = eta.iter().zip(&h).map(|(e, h)| e * h).sum();
    h.iter_mut().for_each(|v| *v /= norm);

    let eta_k = op.apply_left(&eta);
    let kh = op.apply_right(&h);
    let left: f64 = eta_k.iter().zip(&eta).map(|(a, e)| (a - lambda * e).abs()).sum();
    let right = kh
        .iter()
        .zip(&h)
        .map(|(a, v)| (a - lambda * v).abs())
        .fold(0.0, f64::max);

    let mut p_star = op.kernel.clone();
    for (i, mut row) in p_star.axis_iter_mut(Axis(0)).enumerate() {
        row.iter_mut().zip(&h).for_each(|(v, hj)| *v *= hj);
        let s = kh[i];
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(GridEigenSystem {
        lambda_star: lambda,
        h_star: h,
        eta_star: eta,
        p_star,
        rho: op.bounds.map(|b| b.rho()),
        iterations,
        residual: left.max(right),
        lambda_trace: trace,
    })
}

impl GridEigenSystem {
    /// `η⋆` as a density with respect to `ν`.
    pub fn eta_density(&self, op: &GridOperator) -> Vec<f64> {
        self.eta_star.iter().zip(&op.quad_weights).map(|(e, w)| e / w).collect()
    }

    /// `h⋆(x) = Q(h⋆)(x) / λ⋆` at any state.
    pub fn h_at<M: KernelModel>(&self, model: &M, op: &GridOperator, x: f64) -> Result<f64> {
        let row = op.row_at(model, x)?;
        Ok(row.iter().zip(&self.h_star).map(|(k, h)| k * h).sum::<f64>() / self.lambda_star)
    }

    /// Invariant law of `P⋆`: `π⋆_i = η⋆_i h⋆_i`.
    pub fn twisted_invariant(&self) -> Vec<f64> {
        self.eta_star.iter().zip(&self.h_star).map(|(e, h)| e * h).collect()
    }
}

/// `d_n = max_i Σ_j |λ⋆^{-n} K^n_ij - h⋆_i η⋆_j|` for `n = 1..=n_max`.
pub fn met_decay_profile(op: &GridOperator, eig: &GridEigenSystem, n_max: usize) -> Vec<f64> {
    let a = &op.kernel / eig.lambda_star;
    let mut power = a.clone();
    let mut profile = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let d = power
            .axis_iter(Axis(0))
            .zip(&eig.h_star)
            .map(|(row, &hi)| {
                row.iter()
                    .zip(&eig.eta_star)
                    .map(|(v, e)| (v - hi * e).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        profile.push(d);
        if n < n_max {
            power = power.dot(&a);
        }
    }
    profile
}

/// `2 ρⁿ (ε⁺/ε⁻)²`.
pub fn met_bound(bounds: EpsilonBounds, n: usize) -> f64 {
    2.0 * bounds.rho().powi(n as i32) * bounds.ratio().powi(2)
}

/// Constants of the finite-horizon error bounds
/// `|η_n - η⋆| ≤ C_η ρⁿ`, `|h_{p,n} - h⋆| ≤ C_h ρ^{min(n-p, p)}` and the
/// corresponding bound for the twisted kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproximationConstants {
    pub c_eta: f64,
    pub c_h: f64,
    pub c_p: f64,
}

impl ApproximationConstants {
    pub fn from_bounds(bounds: EpsilonBounds) -> Self {
        let r = bounds.ratio();
        let c_eta = 4.0 * r.powi(3);
        let c_h = 2.0 * r * r * (1.0 + r + 2.0 * r.powi(3));
        let c_p = 2.0 * c_h * r * r + c_eta * r / bounds.rho();
        Self { c_eta, c_h, c_p }
    }
}

/// Normalised iterates `η_k = μ K^k / μ K^k(1)` for `k = 0..=n`, together with
/// `log λ_k = log η_k(G)` for `k < n`.
pub fn normalised_flow(op: &GridOperator, initial: &[f64], n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let total: f64 = initial.iter().sum();
    let mut eta: Vec<f64> = initial.iter().map(|v| v / total).collect();
    let mut flow = vec![eta.clone()];
    let mut log_lambda = Vec::with_capacity(n);
    for _ in 0..n {
        let mut next = op.apply_left(&eta);
        let lam: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= lam);
        log_lambda.push(lam.ln());
        eta = next;
        flow.push(eta.clone());
    }
    (flow, log_lambda)
}

/// `h_{p,n} = K^{n-p}(1) / η_p K^{n-p}(1)`.
pub fn deterministic_h_pn(op: &GridOperator, initial: &[f64], p: usize, n: usize) -> Result<Vec<f64>> {
    if p > n {
        return invalid(format!("p = {p} exceeds n = {n}"));
    }
    let (flow, _) = normalised_flow(op, initial, p);
    let mut f = vec![1.0; op.len()];
    for _ in p..n {
        f = op.apply_right(&f);
        let scale = f.iter().copied().fold(0.0, f64::max);
        f.iter_mut().for_each(|v| *v /= scale);
    }
    let norm: f64 = flow[p].iter().zip(&f).map(|(e, v)| e * v).sum();
    Ok(f.into_iter().map(|v| v / norm).collect())
}

/// `log μ K^n(φ)` for a non-negative grid function, tracking the mass in
/// log domain.
pub fn log_iterate_expectation(op: &GridOperator, initial: &[f64], phi: &[f64], n: usize) -> f64 {
    let (flow, log_lambda) = normalised_flow(op, initial, n);
    let total: f64 = initial.iter().sum();
    let last: f64 = flow[n].iter().zip(phi).map(|(e, f)| e * f).sum();
    total.ln() + log_lambda.iter().sum::<f64>() + last.ln()
}

/// `μ K^n(φ)`.
pub fn iterate_expectation(op: &GridOperator, initial: &[f64], phi: &[f64], n: usize) -> f64 {
    let (flow, log_lambda) = normalised_flow(op, initial, n);
    let total: f64 = initial.iter().sum();
    let last: f64 = flow[n].iter().zip(phi).map(|(e, f)| e * f).sum();
    total * log_lambda.iter().sum::<f64>().exp() * last
}

/// `δ_x Q^n(φ)` for an exact point start: the first step uses the row at `x`.
pub fn iterate_expectation_from<M: KernelModel>(
    model: &M,
    op: &GridOperator,
    x: f64,
    phi: &[f64],
    n: usize,
) -> Result<f64> {
    if n == 0 {
        return invalid("a point start needs at least one step on the grid");
    }
    let row = op.row_at(model, x)?;
    Ok(iterate_expectation(op, &row, phi, n - 1))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let nf = order as f64;
    for i in 0..(order + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if order == 0 { 1.0 } else { p1 };
            let pn1 = if order == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre rule on `[a, b]` with panels aligned to `breaks`.
pub fn composite_gauss(a: f64, b: f64, breaks: &[f64], panel_width: f64, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(order);
    let mut cuts = vec![a];
    cuts.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
    cuts.push(b);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for seg in cuts.windows(2) {
        let pieces = ((seg[1] - seg[0]) / panel_width).ceil().max(1.0) as usize;
        let h = (seg[1] - seg[0]) / pieces as f64;
        for k in 0..pieces {
            let lo = seg[0] + h * k as f64;
            for (x, w) in gx.iter().zip(&gw) {
                nodes.push(lo + 0.5 * h * (x + 1.0));
                weights.push(0.5 * h * w);
            }
        }
    }
    (nodes, weights)
}

/// Bracket `[lower, upper]` for `π_m(δ) = P_{x0}(Σ_{p=1}^m U(X_p) > mδ)` under
/// the untilted chain `M`.
///
/// The chain is propagated on a composite Gauss-Legendre discretisation of
/// the state space jointly with the partial sum on a lattice of spacing
/// `1/B`, `B = ⌈sum_bins / 2m⌉`. Rounding every increment down (up) gives
/// a partial sum below (above) the true one, hence a lower (upper) bound for
/// the probability of the discretised chain.
pub fn brute_force_deviation_prob(
    model: &RareEventModel,
    m: usize,
    delta: f64,
    x0: f64,
    sum_bins: usize,
) -> Result<(f64, f64)> {
    if m == 0 {
        return invalid("the horizon m must be at least 1");
    }
    if sum_bins < 64 {
        return invalid("at least 64 sum bins are required");
    }
    use crate::kernel::KernelModel as _;
    model.space().check(x0)?;
    let c = model.half_width;
    let (nodes, weights) = composite_gauss(-c, c, &[-1.0, 1.0], 0.125, 12);
    let per_unit = (sum_bins as f64 / (2.0 * m as f64)).ceil() as i64;
    let offset = m as i64 * per_unit;
    let width = (2 * offset + 1) as usize;
    let threshold = (m as f64 * delta * per_unit as f64).floor() as i64;
    if threshold >= offset {
        return Ok((0.0, 0.0));
    }
    let g = nodes.len();
    // transition[i][j] = w_i m(x_i, y_j)
    let mut transition = Array2::zeros((g, g));
    for (i, &x) in nodes.iter().enumerate() {
        for (j, &y) in nodes.iter().enumerate() {
            transition[[i, j]] = weights[i] * model.transition_density(x, y);
        }
    }
    let transition_t = transition.t().to_owned();
    let run = |shift: &dyn Fn(f64) -> i64| -> f64 {
        let shifts: Vec<i64> = nodes.iter().map(|&y| shift(model.observable(y))).collect();
        let mut f = Array2::<f64>::zeros((g, width));
        for (j, &y) in nodes.iter().enumerate() {
            f[[j, (offset + shifts[j]) as usize]] = model.transition_density(x0, y);
        }
        for _ in 1..m {
            let moved = transition_t.dot(&f);
            let mut next = Array2::<f64>::zeros((g, width));
            for j in 0..g {
                let s = shifts[j];
                let src = moved.row(j);
                let mut dst = next.row_mut(j);
                for k in 0..width {
                    let t = k as i64 + s;
                    if (0..width as i64).contains(&t) {
                        dst[t as usize] = src[k];
                    }
                }
            }
            f = next;
        }
        let first = (offset + threshold + 1) as usize;
        f.axis_iter(Axis(0))
            .zip(&weights)
            .map(|(row, w)| w * row.iter().skip(first).sum::<f64>())
            .sum::<f64>()
    };
    let b = per_unit as f64;
    let lower = run(&|u: f64| (u * b).floor() as i64);
    let upper = run(&|u: f64| (u * b).ceil() as i64);
    Ok((lower.clamp(0.0, 1.0), upper.clamp(0.0, 1.0)))
}

/// Uniform evaluation grid `[start, stop]` with `count` points.
pub fn evaluation_grid(start: f64, stop: f64, count: usize) -> Vec<f64> {
    linspace(start, stop, count)
}
