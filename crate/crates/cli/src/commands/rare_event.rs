use std::time::Instant;

use pfeigen::oracle::{build_grid_operator, power_iteration, DEFAULT_MAX_ITER, DEFAULT_TOL};
use pfeigen::rare_event::{
    lambda_curve, naive_is, rate_function, replicated_conditional_is, twisted_exact_is, ConditionalDesign, IsEstimate,
};
use pfeigen::rng::{derive_seed, tag};
use serde::Serialize;

use super::Context;
use crate::error::{CliError, CliResult};
use crate::output::{num, opt};
use crate::setup;

#[derive(Debug, Serialize)]
struct RareEventSummary {
    model: String,
    horizons: Vec<usize>,
    deviations: Vec<f64>,
    alphas: Vec<f64>,
    methods: Vec<String>,
    estimates: usize,
    curve_points: usize,
    seed: u64,
    wall_clock_seconds: f64,
}

fn row(e: &IsEstimate) -> Vec<String> {
    vec![
        e.method.clone(),
        e.m.to_string(),
        num(e.delta),
        num(e.alpha),
        num(e.mean),
        opt(e.relative_variance),
        e.replications.to_string(),
    ]
}

pub fn run(ctx: &Context) -> CliResult<()> {
    let mut cfg = ctx.config.clone();
    cfg.default_value("model", "rare-event");
    let cfg = cfg;
    let started = Instant::now();
    let base = setup::rare_event_model(&cfg)?;
    let alphas: Vec<f64> = cfg.list("alphas", &[base.alpha])?;
    let horizons: Vec<usize> = cfg.list("horizons", &[1, 2, 3, 4, 5])?;
    let deviations: Vec<f64> = cfg.list("deviations", &[0.8])?;
    let methods: Vec<String> = cfg.list("methods", &["conditional".to_string()])?;
    let x0: f64 = cfg.get("x0", 0.0)?;
    if let Some(bad) = methods.iter().find(|m| !["naive", "conditional", "twisted"].contains(&m.as_str())) {
        return Err(CliError::Config(format!("methods: unknown estimator {bad:?} (naive, conditional, twisted)")));
    }

    let mut estimates = Vec::new();
    if methods.iter().any(|m| m == "naive") {
        let reps = cfg.count("naive_replicates", 100_000)?;
        for &m in &horizons {
            for &delta in &deviations {
                let seed = derive_seed(ctx.seed, tag::NAIVE, m as u64);
                estimates.push(naive_is(&base, m, delta, reps, x0, seed)?);
            }
        }
    }
    for (k, &alpha) in alphas.iter().enumerate() {
        let model = base.with_alpha(alpha)?;
        if methods.iter().any(|m| m == "conditional") {
            let two_n = setup::horizon(&cfg, 2 * horizons.iter().copied().max().unwrap_or(1).max(1))?;
            let design = ConditionalDesign {
                n_particles: cfg.count("n_particles", 100)?,
                n: two_n / 2,
                systems: cfg.count("systems", 1000)?,
                chains: cfg.count("chains", 1)?,
                x0,
            };
            let seed = derive_seed(ctx.seed, tag::CHAIN, k as u64);
            estimates.extend(replicated_conditional_is(&model, design, &horizons, &deviations, seed)?);
        }
        if methods.iter().any(|m| m == "twisted") {
            let op = build_grid_operator(&model, cfg.count("grid_size", 401)?)?;
            let eig = power_iteration(&op, cfg.get("tol", DEFAULT_TOL)?, cfg.count("max_iter", DEFAULT_MAX_ITER)?)?;
            let reps = cfg.count("twisted_replicates", 100_000)?;
            for &m in &horizons {
                for &delta in &deviations {
                    let seed = derive_seed(ctx.seed, tag::TWISTED, (k * 1_000 + m) as u64);
                    estimates.push(twisted_exact_is(&model, &op, &eig, m, delta, reps, x0, seed)?);
                }
            }
        }
    }
    ctx.out.csv(
        "rare_event.csv",
        &["method", "m", "delta", "alpha", "mean", "relvar", "L"],
        estimates.iter().map(row),
    )?;

    let curve_alphas: Vec<f64> = cfg.list("curve_alphas", &[])?;
    let mut curve_points = 0;
    if !curve_alphas.is_empty() {
        let curve = lambda_curve(
            &base.with_alpha(0.0)?,
            &curve_alphas,
            cfg.count("curve_particles", 250)?,
            cfg.count("curve_n", 500)?,
            cfg.count("curve_seeds", 1)?,
            x0,
            derive_seed(ctx.seed, tag::REPLICATE, u64::MAX),
        )?;
        curve_points = curve.alphas.len();
        ctx.out.csv(
            "lambda_curve.csv",
            &["alpha", "lambda_hat", "stderr"],
            (0..curve.alphas.len())
                .map(|i| vec![num(curve.alphas[i]), num(curve.log_lambda_hat[i]), num(curve.std_errors[i])]),
        )?;
        let ts: Vec<f64> = cfg.list("t_values", &deviations)?;
        let rows = ts
            .iter()
            .map(|&t| {
                let (i, arg) = rate_function(&curve, t)?;
                Ok(vec![num(t), num(i), num(arg)])
            })
            .collect::<CliResult<Vec<_>>>()?;
        ctx.out.csv("rate_function.csv", &["t", "I", "argmax_alpha"], rows)?;
    }

    let summary = RareEventSummary {
        model: format!("rare-event(c={})", base.half_width),
        horizons,
        deviations,
        alphas,
        methods,
        estimates: estimates.len(),
        curve_points,
        seed: ctx.seed,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    ctx.log(&format!("{} estimates, {} curve points", summary.estimates, summary.curve_points));
    ctx.out.json("summary.json", &summary)
}
