//! The built-in kernels: neutron transport, a truncated CIR diffusion with a
//! well-shaped cost, and the tilted truncated-Gaussian chain.

pub mod bessel;
pub mod cir;
pub mod gaussian;
pub mod neutron;

pub use cir::CirModel;
pub use gaussian::{deviation_observable, RareEventModel};
pub use neutron::NeutronModel;

use std::f64::consts::FRAC_PI_2;

use crate::error::Result;

/// Closed set of models, used where the model is chosen at run time.
#[derive(Debug, Clone)]
pub enum BuiltinModel {
    Neutron(NeutronModel),
    Cir(CirModel),
    RareEvent(RareEventModel),
}

/// Runs `$body` with `$m` bound to the concrete model inside a
/// [`BuiltinModel`].
#[macro_export]
macro_rules! with_model {
    ($model:expr, $m:ident => $body:expr) => {
        match $model {
            $crate::models::BuiltinModel::Neutron($m) => $body,
            $crate::models::BuiltinModel::Cir($m) => $body,
            $crate::models::BuiltinModel::RareEvent($m) => $body,
        }
    };
}

impl BuiltinModel {
    pub fn label(&self) -> String {
        use crate::kernel::KernelModel;
        with_model!(self, m => m.label())
    }
}

/// Neutron kernel on `[0, π/2]` with unit rate.
pub fn neutron_preset(delta: f64) -> Result<NeutronModel> {
    NeutronModel::new(FRAC_PI_2, 1.0, delta)
}

/// The absorption strengths of the neutron study.
pub const NEUTRON_DELTAS: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 5.0];

/// The tilts compared in the rare-event study.
pub const RARE_EVENT_ALPHAS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];
