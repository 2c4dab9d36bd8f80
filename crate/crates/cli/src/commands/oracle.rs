use std::time::Instant;

use pfeigen::bellman::bellman_residual;
use pfeigen::kernel::KernelModel;
use pfeigen::oracle::{build_grid_operator, met_bound, met_decay_profile, power_iteration, DEFAULT_MAX_ITER, DEFAULT_TOL};
use pfeigen::with_model;
use serde::Serialize;

use super::Context;
use crate::error::CliResult;
use crate::output::num;
use crate::setup;

#[derive(Debug, Serialize)]
struct OracleSummary {
    model: String,
    grid_size: usize,
    lambda_star: f64,
    log_lambda_star: f64,
    iterations: usize,
    residual: f64,
    bellman_residual: f64,
    epsilon_lower: Option<f64>,
    epsilon_upper: Option<f64>,
    rho: Option<f64>,
    wall_clock_seconds: f64,
}

pub fn run(ctx: &Context) -> CliResult<()> {
    let cfg = &ctx.config;
    let started = Instant::now();
    let model = setup::model(cfg)?;
    let grid_size = cfg.count("grid_size", 512)?;
    let met_n: usize = cfg.get("met_n", 50)?;
    with_model!(&model, m => {
        let op = build_grid_operator(m, grid_size)?;
        let eig = power_iteration(&op, cfg.get("tol", DEFAULT_TOL)?, cfg.count("max_iter", DEFAULT_MAX_ITER)?)?;
        let density = eig.eta_density(&op);
        ctx.out.csv(
            "oracle_eigen.csv",
            &["x", "h_star", "eta_star_density"],
            op.nodes.iter().enumerate().map(|(i, x)| vec![num(*x), num(eig.h_star[i]), num(density[i])]),
        )?;
        let bounds = m.epsilon_bounds();
        if met_n > 0 {
            let profile = met_decay_profile(&op, &eig, met_n);
            ctx.out.csv(
                "met_profile.csv",
                &["n", "d_n", "bound"],
                profile.iter().enumerate().map(|(k, d)| {
                    vec![(k + 1).to_string(), num(*d), bounds.map(|b| num(met_bound(b, k + 1))).unwrap_or_default()]
                }),
            )?;
        }
        let summary = OracleSummary {
            model: m.label(),
            grid_size,
            lambda_star: eig.lambda_star,
            log_lambda_star: eig.lambda_star.ln(),
            iterations: eig.iterations,
            residual: eig.residual,
            bellman_residual: bellman_residual(&eig, &op),
            epsilon_lower: bounds.map(|b| b.lower),
            epsilon_upper: bounds.map(|b| b.upper),
            rho: eig.rho,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        };
        ctx.log(&format!("{}: λ⋆ = {:.10} after {} iterations", summary.model, summary.lambda_star, summary.iterations));
        ctx.out.json("summary.json", &summary)
    })
}
