//! Turning a config into models, initial laws and evaluation grids.

use pfeigen::forward::InitialLaw;
use pfeigen::kernel::{linspace, KernelModel};
use pfeigen::models::{BuiltinModel, CirModel, NeutronModel, RareEventModel};
use pfeigen::with_model;

use crate::config::Config;
use crate::error::{CliError, CliResult};

pub fn model_with_delta(cfg: &Config, delta: Option<f64>) -> CliResult<BuiltinModel> {
    let name = cfg.raw("model").unwrap_or("neutron");
    let model = match name {
        "neutron" => BuiltinModel::Neutron(NeutronModel::new(
            cfg.get("length", std::f64::consts::FRAC_PI_2)?,
            cfg.get("rate", 1.0)?,
            delta.map_or_else(|| cfg.get("delta", 0.0), Ok)?,
        )?),
        "cir" => BuiltinModel::Cir(CirModel::new(
            cfg.get("theta", 2.0)?,
            cfg.get("mean_level", 10.0)?,
            cfg.get("sigma", 20.0)?,
            cfg.get("dt", 0.01)?,
            cfg.get("x_max", 500.0)?,
            delta.map_or_else(|| cfg.get("delta", 5.0), Ok)?,
        )?),
        "rare-event" => BuiltinModel::RareEvent(RareEventModel::new(cfg.get("half_width", 2.0)?, cfg.get("alpha", 0.0)?)?),
        other => {
            return Err(CliError::Config(format!(
                "model = {other:?}: expected one of neutron, cir, rare-event"
            )))
        }
    };
    Ok(model)
}

pub fn model(cfg: &Config) -> CliResult<BuiltinModel> {
    model_with_delta(cfg, None)
}

pub fn rare_event_model(cfg: &Config) -> CliResult<RareEventModel> {
    match model(cfg)? {
        BuiltinModel::RareEvent(m) => Ok(m),
        other => Err(CliError::Config(format!("this command needs model = rare-event, got {}", other.label()))),
    }
}

/// `initial = uniform` or `initial = dirac:<x>`; defaults to a point mass at
/// the left end (the well centre for CIR, 0 for the rare-event chain).
pub fn initial_law(cfg: &Config, model: &BuiltinModel) -> CliResult<InitialLaw> {
    let space = with_model!(model, m => m.space());
    let default = match model {
        BuiltinModel::Neutron(_) => 0.0,
        BuiltinModel::Cir(m) => m.well_center,
        BuiltinModel::RareEvent(_) => 0.0,
    };
    let law = match cfg.raw("initial") {
        None => InitialLaw::Dirac(default),
        Some("uniform") => InitialLaw::Uniform,
        Some(spec) => match spec.strip_prefix("dirac:").map(str::parse::<f64>) {
            Some(Ok(x)) => InitialLaw::Dirac(x),
            _ => return Err(CliError::Config(format!("initial = {spec:?}: expected uniform or dirac:<x>"))),
        },
    };
    if let InitialLaw::Dirac(x) = law {
        if !space.contains(x) {
            return Err(CliError::Config(format!("initial point {x} lies outside the state space")));
        }
    }
    Ok(law)
}

/// `eval_start..=eval_stop` with `eval_count` points, defaulting to the
/// whole state space with 150 points.
pub fn eval_points(cfg: &Config, model: &BuiltinModel) -> CliResult<Vec<f64>> {
    let space = with_model!(model, m => m.space());
    let start = cfg.get("eval_start", space.lower)?;
    let stop = cfg.get("eval_stop", space.upper)?;
    let count = cfg.count("eval_count", 150)?;
    if !(start < stop) || count < 2 {
        return Err(CliError::Config(format!(
            "evaluation range {start}..{stop} with {count} points is not well ordered"
        )));
    }
    if !space.contains(start) || !space.contains(stop) {
        return Err(CliError::Config(format!("evaluation range {start}..{stop} leaves the state space")));
    }
    Ok(linspace(start, stop, count))
}

/// `two_n`, which must be even.
pub fn horizon(cfg: &Config, default: usize) -> CliResult<usize> {
    let two_n = cfg.count("two_n", default)?;
    if two_n % 2 != 0 || two_n < 2 {
        return Err(CliError::Config(format!("two_n = {two_n} must be even and at least 2")));
    }
    Ok(two_n)
}

/// The `window` key, checked against `n`.
pub fn window(cfg: &Config, n: usize) -> CliResult<usize> {
    let m = cfg.count("window", (n / 10).max(1))?;
    if m > n {
        return Err(CliError::Config(format!("window = {m} exceeds n = {n}")));
    }
    Ok(m)
}
