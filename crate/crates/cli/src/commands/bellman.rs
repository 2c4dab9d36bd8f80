use std::time::Instant;

use pfeigen::backward::run_backward;
use pfeigen::bellman::{bellman_residual, estimate_value_function, jump_locations};
use pfeigen::forward::run_forward;
use pfeigen::kernel::KernelModel;
use pfeigen::oracle::{build_grid_operator, power_iteration, DEFAULT_MAX_ITER, DEFAULT_TOL};
use pfeigen::with_model;
use serde::Serialize;

use super::Context;
use crate::error::CliResult;
use crate::output::{num, opt};
use crate::setup;

#[derive(Debug, Serialize)]
struct BellmanSummary {
    model: String,
    n_particles: usize,
    n: usize,
    window: usize,
    varsigma_hat: f64,
    varsigma_oracle: Option<f64>,
    bellman_residual: Option<f64>,
    largest_jumps: Vec<f64>,
    seed: u64,
    wall_clock_seconds: f64,
}

pub fn run(ctx: &Context) -> CliResult<()> {
    let mut cfg = ctx.config.clone();
    cfg.default_value("model", "cir");
    if cfg.raw("model") == Some("cir") {
        cfg.default_value("eval_start", "4");
        cfg.default_value("eval_stop", "20");
        cfg.default_value("eval_count", "321");
    }
    let started = Instant::now();
    let model = setup::model(&cfg)?;
    let n_particles = cfg.count("n_particles", 200)?;
    let two_n = setup::horizon(&cfg, 200)?;
    let n = two_n / 2;
    let window = setup::window(&cfg, n)?;
    let initial = setup::initial_law(&cfg, &model)?;
    let points = setup::eval_points(&cfg, &model)?;
    with_model!(&model, m => {
        let traj = run_forward(m, n_particles, two_n, initial, ctx.seed)?;
        let backward = run_backward(m, &traj)?;
        let est = estimate_value_function(m, &traj, &backward, &points, window)?;
        let oracle = if ctx.oracle {
            let op = build_grid_operator(m, cfg.count("grid_size", 512)?)?;
            let eig = power_iteration(&op, cfg.get("tol", DEFAULT_TOL)?, cfg.count("max_iter", DEFAULT_MAX_ITER)?)?;
            let v: Vec<f64> = points
                .iter()
                .map(|&x| eig.h_at(m, &op, x).map(|h| -h.ln()))
                .collect::<pfeigen::Result<_>>()?;
            Some((-eig.lambda_star.ln(), bellman_residual(&eig, &op), v))
        } else {
            None
        };
        ctx.out.csv(
            "value_function.csv",
            &["x", "v_hat", "v_oracle"],
            points
                .iter()
                .enumerate()
                .map(|(k, x)| vec![num(*x), num(est.v_hat[k]), opt(oracle.as_ref().map(|o| o.2[k]))]),
        )?;
        let summary = BellmanSummary {
            model: m.label(),
            n_particles,
            n,
            window,
            varsigma_hat: est.varsigma_hat,
            varsigma_oracle: oracle.as_ref().map(|o| o.0),
            bellman_residual: oracle.as_ref().map(|o| o.1),
            largest_jumps: jump_locations(&points, &est.v_hat, 2),
            seed: ctx.seed,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        };
        ctx.log(&format!("{}: ς̂ = {:.6}, largest jumps at {:?}", summary.model, summary.varsigma_hat, summary.largest_jumps));
        ctx.out.json("summary.json", &summary)
    })
}
