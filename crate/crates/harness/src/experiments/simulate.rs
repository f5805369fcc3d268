use fvre_core::dual::{dual_moment, simulate_dual, JumpKind};
use fvre_core::estimate::{SeedKey, Stream};
use fvre_core::moran::{simulate_moran, EventStreams};

use super::sub_seed;
use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::report::Report;

fn horizon(config: &ExperimentConfig) -> Result<f64, HarnessError> {
    let t = config.simulation.time;
    if !(t > 0.0 && t.is_finite()) {
        return Err(HarnessError::Config(format!("simulation.time must be positive, got {t}")));
    }
    Ok(t)
}

/// One forward trajectory, sampled on an even grid.
pub fn run_moran_sim(config: &ExperimentConfig) -> Result<Report, HarnessError> {
    let params = config.params()?;
    let env = config.environment()?;
    let init = config.initial_condition()?;
    let t = horizon(config)?;
    let samples = config.simulation.samples.max(2);
    let times: Vec<f64> = (0..samples).map(|i| t * i as f64 / (samples - 1) as f64).collect();

    let key = SeedKey::new(sub_seed(config, 40), 0);
    let path = env.sample_path(t, &mut key.rng(Stream::Environment))?;
    let state = init.realize(params.population(), config.alleles(), &mut key.rng(Stream::Initial))?;
    let traj = simulate_moran(&params, &path, state, t, &times, &mut EventStreams::from_key(key))?;

    let mut report = Report::new("moran-sim", config);
    let mut columns = vec!["time".to_string()];
    columns.extend((0..config.alleles()).map(|a| format!("count_{a}")));
    let columns: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows = traj
        .sample_times
        .iter()
        .zip(&traj.measures)
        .map(|(&s, m)| std::iter::once(s).chain(m.counts().iter().map(|&c| c as f64)).collect())
        .collect();
    report.table("trajectory", &columns, rows);
    report.count("environment_jumps", path.jump_times().len() as u64 - 1);
    let worst = traj
        .measures
        .iter()
        .map(|m| (m.population() as f64 - params.population() as f64).abs())
        .fold(0.0, f64::max);
    report.at_most("population_conserved", worst, 0.0, "counts sum to N at every sample");
    Ok(report)
}

/// One dual path from the configured function against a sampled environment.
pub fn run_dual_sim(config: &ExperimentConfig) -> Result<Report, HarnessError> {
    let params = config.params()?;
    let env = config.environment()?;
    let f = config.function()?;
    let t = horizon(config)?;
    let m0 = config.initial_measure()?;

    let key = SeedKey::new(sub_seed(config, 50), 0);
    let path = env.sample_path(t, &mut key.rng(Stream::Environment))?;
    let state = simulate_dual(&params, &path, t, f, &mut key.rng(Stream::Dual), config.simulation.degree_cap)?;

    let mut report = Report::new("dual-sim", config);
    report.count("jumps", state.log.len() as u64);
    report.count("absorbed", state.absorbed as u64);
    report.number("elapsed", state.elapsed);
    report.count("final_degree", state.f.degree() as u64);
    report.count("selection_events", state.selection_count() as u64);
    report.number("dual_moment", dual_moment(&m0, &state)?);
    let rows = state
        .log
        .iter()
        .map(|r| {
            let kind = match r.kind {
                JumpKind::Resampling => 0.0,
                JumpKind::ParentIndependentMutation => 1.0,
                JumpKind::ParentDependentMutation => 2.0,
                JumpKind::Selection => 3.0,
            };
            let j = r.second.map_or(-1.0, |j| j as f64);
            vec![r.time, kind, r.first as f64, j, r.degree_after as f64, r.sup_norm_after]
        })
        .collect();
    report.text("kind_codes", "0=resample,1=mutP,2=mutPP,3=select");
    report.table("jumps", &["time", "kind", "i", "j", "degree", "sup_norm"], rows);
    let violations = state.sup_norm_violations();
    report.at_most("sup_norm_monotone", violations as f64, 0.0, "no jump raises the sup norm");
    Ok(report)
}
