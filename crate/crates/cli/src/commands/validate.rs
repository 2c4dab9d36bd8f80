use pfeigen::backward::{
    log_random_semigroup_apply, pathwise_ratio_diagnostic, run_backward, twisted_row, window_average_h, BackwardSolution,
    SemigroupStart,
};
use pfeigen::forward::{run_forward, ForwardTrajectory};
use pfeigen::kernel::KernelModel;
use pfeigen::oracle::{build_grid_operator, power_iteration, DEFAULT_MAX_ITER, DEFAULT_TOL};
use pfeigen::rng::{derive_seed, tag};
use pfeigen::stats::{linear_fit, mean};
use pfeigen::with_model;
use serde::Serialize;

use super::{Context, Corruption};
use crate::error::{CliError, CliResult};
use crate::output::num;
use crate::setup;

#[derive(Debug, Serialize)]
struct Check {
    name: String,
    value: f64,
    bound: f64,
    passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.to_string(), value, bound, passed: value <= bound }
    }
}

#[derive(Debug, Serialize)]
struct Report {
    model: String,
    seed: u64,
    checks: Vec<Check>,
    passed: bool,
}

fn identity_checks<M: KernelModel>(
    model: &M,
    traj: &ForwardTrajectory,
    backward: &BackwardSolution,
) -> CliResult<Vec<Check>> {
    let n = backward.n;
    let size = traj.n_particles() as f64;
    let eta = (n..=2 * n)
        .map(|p| (backward.layer(p).iter().sum::<f64>() / size - 1.0).abs())
        .fold(0.0, f64::max);
    let mut rows: f64 = 0.0;
    for p in n + 1..=2 * n {
        for &x in traj.ensemble(p - 1).iter().take(8) {
            let r = twisted_row(model, traj, backward, p, x)?;
            rows = rows.max((r.probabilities.iter().sum::<f64>() - 1.0).abs());
        }
    }
    let mut product: f64 = 0.0;
    for p in 0..n {
        let direct: f64 = traj.log_lambda[p..n].iter().sum();
        let via = log_random_semigroup_apply(model, traj, SemigroupStart::Empirical, p, n, |_| 1.0)?;
        product = product.max((via - direct).abs() / direct.abs().max(1.0));
    }
    let mut checks = vec![
        Check::at_most("eta_p(h_p) = 1", eta, 1e-10),
        Check::at_most("twisted rows sum to 1", rows, 1e-10),
        Check::at_most("log prod lambda = log eta_p Q_(p,n)(1)", product, 1e-10),
    ];
    if model.epsilon_bounds().is_some() {
        let space = model.space();
        let probes = space.linspace(9);
        let r = pathwise_ratio_diagnostic(model, traj, backward, &probes)?;
        checks.push(Check {
            name: "path-wise ratio bounds".to_string(),
            value: r.max_h,
            bound: r.upper_bound,
            passed: r.passed,
        });
    }
    Ok(checks)
}

pub fn run(ctx: &Context) -> CliResult<()> {
    let cfg = &ctx.config;
    let model = setup::model(cfg)?;
    let n_particles = cfg.count("n_particles", 100)?;
    let two_n = setup::horizon(cfg, 20)?;
    let initial = setup::initial_law(cfg, &model)?;
    let mut checks = with_model!(&model, m => {
        let traj = run_forward(m, n_particles, two_n, initial, ctx.seed)?;
        let mut backward = run_backward(m, &traj)?;
        if let Some(Corruption::H) = ctx.corrupt {
            backward = backward.scaled(1.5);
        }
        identity_checks(m, &traj, &backward)?
    });

    if cfg.flag("scaling")? {
        let sizes: Vec<usize> = cfg.list("scaling_particles", &[50, 100, 200, 400])?;
        let seeds = cfg.count("scaling_seeds", 40)?;
        if sizes.len() < 2 {
            return Err(CliError::Config("scaling_particles needs at least two sizes".into()));
        }
        let rows = with_model!(&model, m => {
            let space = m.space();
            let x: f64 = cfg.get("scaling_point", 0.5 * (space.lower + space.upper))?;
            let op = build_grid_operator(m, cfg.count("grid_size", 512)?)?;
            let eig = power_iteration(&op, cfg.get("tol", DEFAULT_TOL)?, cfg.count("max_iter", DEFAULT_MAX_ITER)?)?;
            let truth = eig.h_at(m, &op, x)?;
            let n = two_n / 2;
            let window = setup::window(cfg, n)?;
            sizes
                .iter()
                .map(|&size| {
                    let sq = (0..seeds)
                        .map(|s| {
                            let seed = derive_seed(ctx.seed, tag::REPLICATE, (size * 1_000_000 + s) as u64);
                            let traj = run_forward(m, size, two_n, initial, seed)?;
                            let b = run_backward(m, &traj)?;
                            Ok((window_average_h(m, &traj, &b, x, window)? - truth).powi(2))
                        })
                        .collect::<pfeigen::Result<Vec<f64>>>()?;
                    Ok((size, mean(&sq).sqrt()))
                })
                .collect::<CliResult<Vec<(usize, f64)>>>()?
        });
        ctx.out.csv(
            "scaling.csv",
            &["N", "rmse"],
            rows.iter().map(|(n, e)| vec![n.to_string(), num(*e)]),
        )?;
        let xs: Vec<f64> = rows.iter().map(|(n, _)| (*n as f64).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|(_, e)| e.ln()).collect();
        let (slope, _) = linear_fit(&xs, &ys);
        checks.push(Check {
            name: "RMSE log-log slope vs N (-0.5 +/- 0.15)".to_string(),
            value: slope,
            bound: 0.15,
            passed: (slope + 0.5).abs() <= 0.15,
        });
    }

    let passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        ctx.log(&format!(
            "{}: {} = {:.3e} (bound {:.3e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.bound
        ));
    }
    let report = Report { model: model.label(), seed: ctx.seed, checks, passed };
    ctx.out.json("validate.json", &report)?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Invariant("one or more validation checks failed".into()))
    }
}
