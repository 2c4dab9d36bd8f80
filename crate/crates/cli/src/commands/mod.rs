pub mod bellman;
pub mod eigen;
pub mod oracle;
pub mod rare_event;
pub mod validate;

use crate::config::Config;
use crate::output::OutDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corruption {
    H,
}

/// Everything a subcommand needs.
pub struct Context {
    pub config: Config,
    pub seed: u64,
    pub out: OutDir,
    pub oracle: bool,
    pub corrupt: Option<Corruption>,
    pub quiet: bool,
}

impl Context {
    pub fn log(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}
