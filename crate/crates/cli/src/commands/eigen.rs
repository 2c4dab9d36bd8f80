use std::time::Instant;

use pfeigen::backward::{run_backward, sample_twisted_chain, window_average_h};
use pfeigen::forward::{log_lambda_average, run_forward, InitialLaw};
use pfeigen::kernel::KernelModel;
use pfeigen::models::BuiltinModel;
use pfeigen::oracle::{build_grid_operator, power_iteration, DEFAULT_MAX_ITER, DEFAULT_TOL};
use pfeigen::rng::{stream, tag};
use pfeigen::with_model;
use serde::Serialize;

use super::Context;
use crate::error::CliResult;
use crate::output::{num, opt};
use crate::setup;

#[derive(Debug, Serialize)]
struct EigenSummary {
    model: String,
    n_particles: usize,
    n: usize,
    window: usize,
    log_lambda_hat: f64,
    lambda_hat: f64,
    oracle_lambda: Option<f64>,
    max_abs_error_vs_oracle: Option<f64>,
    seed: u64,
    wall_clock_seconds: f64,
}

struct Run {
    summary: EigenSummary,
    h_rows: Vec<Vec<String>>,
    lambda_rows: Vec<Vec<String>>,
    path_rows: Vec<Vec<String>>,
    trajectory_rows: Vec<Vec<String>>,
}

fn run_one(ctx: &Context, model: &BuiltinModel) -> CliResult<Run> {
    let cfg = &ctx.config;
    let started = Instant::now();
    let n_particles = cfg.count("n_particles", 250)?;
    let two_n = setup::horizon(cfg, 200)?;
    let n = two_n / 2;
    let window = setup::window(cfg, n)?;
    let initial = setup::initial_law(cfg, model)?;
    let points = setup::eval_points(cfg, model)?;
    let chain_length: usize = cfg.get("chain_length", 0)?;
    if chain_length > n {
        return Err(crate::error::CliError::Config(format!("chain_length = {chain_length} exceeds n = {n}")));
    }
    let dump = cfg.flag("dump_trajectory")?;

    with_model!(model, m => {
        let traj = run_forward(m, n_particles, two_n, initial, ctx.seed)?;
        let backward = run_backward(m, &traj)?;
        let h_hat: Vec<f64> = points
            .iter()
            .map(|&x| window_average_h(m, &traj, &backward, x, window))
            .collect::<pfeigen::Result<_>>()?;
        let oracle = if ctx.oracle {
            let op = build_grid_operator(m, cfg.count("grid_size", 512)?)?;
            let eig = power_iteration(&op, cfg.get("tol", DEFAULT_TOL)?, cfg.count("max_iter", DEFAULT_MAX_ITER)?)?;
            let h: Vec<f64> = points.iter().map(|&x| eig.h_at(m, &op, x)).collect::<pfeigen::Result<_>>()?;
            Some((eig.lambda_star, h))
        } else {
            None
        };
        let log_lambda_hat = log_lambda_average(&traj, n)?;
        let path_rows = if chain_length > 0 {
            let x0 = match initial {
                InitialLaw::Dirac(x) => x,
                InitialLaw::Uniform => traj.ensemble(n)[0],
            };
            let mut rng = stream(ctx.seed, tag::CHAIN, 0, 0);
            let path = sample_twisted_chain(m, &traj, &backward, x0, chain_length, &mut rng)?;
            path.states.iter().enumerate().map(|(k, x)| vec![k.to_string(), num(*x)]).collect()
        } else {
            Vec::new()
        };
        let trajectory_rows = if dump {
            traj.ensembles
                .iter()
                .enumerate()
                .flat_map(|(p, e)| e.iter().enumerate().map(move |(i, x)| vec![p.to_string(), i.to_string(), num(*x)]))
                .collect()
        } else {
            Vec::new()
        };
        let h_rows = points
            .iter()
            .enumerate()
            .map(|(k, x)| vec![num(*x), num(h_hat[k]), opt(oracle.as_ref().map(|o| o.1[k]))])
            .collect();
        let lambda_rows = traj
            .log_lambda
            .iter()
            .enumerate()
            .map(|(p, l)| vec![p.to_string(), num(*l)])
            .collect();
        let max_err = oracle
            .as_ref()
            .map(|o| h_hat.iter().zip(&o.1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        Ok(Run {
            summary: EigenSummary {
                model: m.label(),
                n_particles,
                n,
                window,
                log_lambda_hat,
                lambda_hat: log_lambda_hat.exp(),
                oracle_lambda: oracle.as_ref().map(|o| o.0),
                max_abs_error_vs_oracle: max_err,
                seed: ctx.seed,
                wall_clock_seconds: started.elapsed().as_secs_f64(),
            },
            h_rows,
            lambda_rows,
            path_rows,
            trajectory_rows,
        })
    })
}

pub fn run(ctx: &Context) -> CliResult<()> {
    let cfg = &ctx.config;
    let deltas: Vec<f64> = cfg.list("deltas", &[])?;
    let models: Vec<(String, BuiltinModel)> = if deltas.is_empty() {
        vec![(String::new(), setup::model(cfg)?)]
    } else {
        deltas
            .iter()
            .map(|&d| Ok((format!("_delta_{d}"), setup::model_with_delta(cfg, Some(d))?)))
            .collect::<CliResult<_>>()?
    };
    let mut summaries = Vec::new();
    for (suffix, model) in &models {
        let r = run_one(ctx, model)?;
        ctx.out.csv(&format!("h_estimate{suffix}.csv"), &["x", "h_window", "h_oracle"], r.h_rows)?;
        ctx.out.csv(&format!("lambda{suffix}.csv"), &["p", "log_lambda"], r.lambda_rows)?;
        if !r.path_rows.is_empty() {
            ctx.out.csv(&format!("twisted_path{suffix}.csv"), &["step", "state"], r.path_rows)?;
        }
        if !r.trajectory_rows.is_empty() {
            ctx.out.csv(&format!("trajectory{suffix}.csv"), &["p", "i", "state"], r.trajectory_rows)?;
        }
        ctx.log(&format!(
            "{}: log Λ̂ = {:.6}{}",
            r.summary.model,
            r.summary.log_lambda_hat,
            r.summary.oracle_lambda.map_or(String::new(), |l| format!(", oracle log λ⋆ = {:.6}", l.ln()))
        ));
        summaries.push(r.summary);
    }
    if summaries.len() == 1 {
        ctx.out.json("summary.json", &summaries[0])
    } else {
        ctx.out.json("summary.json", &summaries)
    }
}
