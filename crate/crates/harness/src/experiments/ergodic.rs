use fvre_core::dual::estimate_dual_limit;
use fvre_core::environment::{stationary_law, EnvironmentProcess};
use fvre_core::estimate::{run_replicates, Stream};
use fvre_core::moran::{measure_moment, simulate_moran, EventStreams, InitialCondition, MomentKind};
use fvre_core::typespace::{EmpiricalMeasure, FitnessVector, ModelParams};
use fvre_core::{DualFunction, Estimate};

use super::sub_seed;
use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::report::Report;

/// Long-time limit of `E<μ_t, f>`: dual absorption against the stationary
/// environment, checked against the neutral stationary law and against
/// forward runs from extreme initial measures.
pub fn run_ergodic_limit(config: &ExperimentConfig) -> Result<Report, HarnessError> {
    let section = &config.ergodic;
    let params = config.params()?;
    let env = config.environment()?;
    match &env {
        EnvironmentProcess::Schedule(_) => {
            return Err(HarnessError::Config("ergodic-limit needs a constant or Markov environment".into()))
        }
        EnvironmentProcess::MarkovJump(chain) if !chain.is_irreducible() => {
            return Err(HarnessError::Config("ergodic-limit needs an irreducible environment".into()))
        }
        _ => {}
    }
    if params.kernel().beta_prime() <= 0.0 {
        return Err(HarnessError::Config("ergodic-limit needs beta' > 0".into()));
    }
    let f = config.function()?;
    let k = config.alleles();
    let dual_reps = section.dual_replicates.unwrap_or(config.replicates);
    let forward_reps = section.forward_replicates.unwrap_or(config.replicates);
    let floor = section.numerical_floor;
    let n = params.population();

    let mut report = Report::new("ergodic-limit", config);
    report.number("numerical_floor", floor);

    let mut indicator_limits = Vec::with_capacity(k);
    for a in 0..k {
        let ind = DualFunction::indicator(k, a).expect("allele in range");
        let e = estimate_dual_limit(&params, &env, &ind, dual_reps, sub_seed(config, 10 + a as u64), section.degree_cap)?;
        report.estimate(format!("limit_indicator_{a}"), e);
        indicator_limits.push(e);
    }
    let total: f64 = indicator_limits.iter().map(|e| e.mean).sum();
    let total_se = indicator_limits.iter().map(|e| e.std_error().powi(2)).sum::<f64>().sqrt();
    report.number("limit_indicator_sum", total);
    report.at_most("indicator_limits_sum_to_one", (total - 1.0).abs(), 3.0 * total_se + floor, "|sum - 1| <= 3 SE + floor");

    if params.alpha() == 0.0 {
        let pi = stationary_law(&params.kernel().lineage_generator())?;
        for (a, e) in indicator_limits.iter().enumerate() {
            report.number(format!("mutation_stationary_{a}"), pi[a]);
            report.at_most(
                format!("neutral_limit_{a}"),
                (e.mean - pi[a]).abs(),
                3.0 * e.std_error() + floor,
                "|dual limit - lineage stationary law| <= 3 SE + floor",
            );
        }
    }

    let limit = estimate_dual_limit(&params, &env, &f, dual_reps, sub_seed(config, 20), section.degree_cap)?;
    report.estimate("limit_function", limit);

    if forward_reps > 0 {
        let allowance = section.bias_coefficient / n as f64;
        report.number("forward_time", section.time);
        report.number("bias_allowance", allowance);
        let times = sample_times(section.time, &section.stabilization_times)?;
        let states = match &env {
            EnvironmentProcess::MarkovJump(chain) => chain.states().to_vec(),
            _ => Vec::new(),
        };
        let mut starts = vec![0, k - 1];
        starts.dedup();
        for a in starts {
            let mut counts = vec![0u64; k];
            counts[a] = n as u64;
            let init = InitialCondition::Counts(EmpiricalMeasure::new(counts)?);
            let runs = forward_runs(&params, &env, &init, &f, &times, &states, forward_reps, sub_seed(config, 30 + a as u64))?;
            let column = |i: usize, h: &dyn Fn(usize) -> f64| {
                let values: Vec<f64> = runs.iter().map(|r| r.moments[i] * h(r.states[i])).collect();
                Estimate::from_samples(&values)
            };
            let last = times.len() - 1;
            let fwd = column(last, &|_| 1.0);
            let diff = (fwd.mean - limit.mean).abs();
            let se = fwd.pooled_std_error(&limit);
            report.estimate(format!("forward_from_point_mass_{a}"), fwd);
            report.at_most(
                format!("forward_matches_limit_from_{a}"),
                diff,
                3.0 * se + allowance + floor,
                "|forward - dual limit| <= 3 pooled SE + c/N + floor",
            );

            if times.len() > 1 && !states.is_empty() {
                let rows = times
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| {
                        let mut row = vec![t, column(i, &|_| 1.0).mean];
                        row.extend((0..states.len()).map(|j| column(i, &|s| f64::from(u8::from(s == j))).mean));
                        row
                    })
                    .collect();
                let mut columns = vec!["time".to_string(), "moment".to_string()];
                columns.extend((0..states.len()).map(|j| format!("joint_state_{j}")));
                let columns: Vec<&str> = columns.iter().map(String::as_str).collect();
                report.table(format!("joint_moments_from_{a}"), &columns, rows);
                for j in 0..states.len() {
                    let h = |s: usize| f64::from(u8::from(s == j));
                    let late = column(last, &h);
                    let earlier = column(last - 1, &h);
                    report.at_most(
                        format!("joint_moment_stable_from_{a}_state_{j}"),
                        (late.mean - earlier.mean).abs(),
                        3.0 * late.pooled_std_error(&earlier) + floor,
                        "|E[<mu_t,f> 1{e_t=j}] at the last two times| <= 3 pooled SE + floor",
                    );
                }
            }
        }
    }
    Ok(report)
}

/// Sorted sample times ending at `horizon`.
fn sample_times(horizon: f64, extra: &[f64]) -> Result<Vec<f64>, HarnessError> {
    if let Some(t) = extra.iter().find(|&&t| !(t > 0.0 && t < horizon)) {
        return Err(HarnessError::Config(format!("stabilization time {t} must lie in (0, {horizon})")));
    }
    let mut times = extra.to_vec();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times.push(horizon);
    Ok(times)
}

struct ForwardRun {
    moments: Vec<f64>,
    states: Vec<usize>,
}

/// Annealed forward runs recording `<μ_t, f>` and the environment state at
/// each sample time. Streams match `estimate_moran_moment`.
#[allow(clippy::too_many_arguments)]
fn forward_runs(
    params: &ModelParams,
    env: &EnvironmentProcess,
    init: &InitialCondition,
    f: &DualFunction,
    times: &[f64],
    states: &[FitnessVector],
    replicates: usize,
    master: u64,
) -> Result<Vec<ForwardRun>, HarnessError> {
    let k = params.alleles();
    let horizon = *times.last().expect("at least one time");
    let runs = run_replicates(master, replicates, |key| {
        let state = init.realize(params.population(), k, &mut key.rng(Stream::Initial))?;
        let path = env.sample_path(horizon, &mut key.rng(Stream::Environment))?;
        let traj = simulate_moran(params, &path, state, horizon, times, &mut EventStreams::from_key(key))?;
        let moments = traj
            .measures
            .iter()
            .map(|m| measure_moment(m, f, MomentKind::WithReplacement))
            .collect::<fvre_core::Result<Vec<_>>>()?;
        let states = times
            .iter()
            .map(|&t| {
                let w = path.evaluate(t)?;
                Ok(states.iter().position(|s| s == w).unwrap_or(0))
            })
            .collect::<fvre_core::Result<Vec<_>>>()?;
        Ok(ForwardRun { moments, states })
    })?;
    Ok(runs)
}
