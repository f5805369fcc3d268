//! Named experiments. Each returns a [`Report`] whose content depends only
//! on the configuration (and not on the thread count).

mod degree_chain;
mod duality;
mod ergodic;
mod generator;
mod simulate;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use fvre_core::estimate::SeedKey;

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::report::Report;

pub use degree_chain::run_degree_chain;
pub use duality::run_duality_check;
pub use ergodic::run_ergodic_limit;
pub use generator::run_generator_check;
pub use simulate::{run_dual_sim, run_moran_sim};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    DualityCheck,
    GeneratorCheck,
    DegreeChain,
    ErgodicLimit,
    MoranSim,
    DualSim,
}

impl ExperimentKind {
    pub const ALL: [Self; 6] = [
        Self::DualityCheck,
        Self::GeneratorCheck,
        Self::DegreeChain,
        Self::ErgodicLimit,
        Self::MoranSim,
        Self::DualSim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::DualityCheck => "duality-check",
            Self::GeneratorCheck => "generator-check",
            Self::DegreeChain => "degree-chain",
            Self::ErgodicLimit => "ergodic-limit",
            Self::MoranSim => "moran-sim",
            Self::DualSim => "dual-sim",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment {s:?}")))
    }
}

/// Runs `kind` on `config`, filling in the wall time.
pub fn run(kind: ExperimentKind, config: &ExperimentConfig) -> Result<Report, HarnessError> {
    if let Some(name) = &config.experiment {
        if name != kind.name() {
            return Err(HarnessError::Config(format!("config is for {name:?}, not {:?}", kind.name())));
        }
    }
    if config.replicates == 0 {
        return Err(HarnessError::Config("replicates must be >= 1".into()));
    }
    let start = Instant::now();
    let mut report = match kind {
        ExperimentKind::DualityCheck => run_duality_check(config),
        ExperimentKind::GeneratorCheck => run_generator_check(config),
        ExperimentKind::DegreeChain => run_degree_chain(config),
        ExperimentKind::ErgodicLimit => run_ergodic_limit(config),
        ExperimentKind::MoranSim => run_moran_sim(config),
        ExperimentKind::DualSim => run_dual_sim(config),
    }?;
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Master seed for one component of an experiment.
pub(crate) fn sub_seed(config: &ExperimentConfig, salt: u64) -> u64 {
    SeedKey::derived(config.seed, salt)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
