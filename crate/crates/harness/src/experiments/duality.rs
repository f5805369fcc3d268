use fvre_core::dual::estimate_dual_moment;
use fvre_core::moran::{estimate_moran_moment, quenched_path, EnvironmentSource, MomentKind};

use super::sub_seed;
use crate::config::{DualityMode, ExperimentConfig, MomentChoice};
use crate::error::HarnessError;
use crate::report::Report;

/// Forward Moran against backward dual estimates of `E<μ_t^{⊗n}, f>`.
pub fn run_duality_check(config: &ExperimentConfig) -> Result<Report, HarnessError> {
    let section = &config.duality;
    let params = config.params()?;
    let env = config.environment()?;
    let init = config.initial_condition()?;
    let m0 = config.initial_measure()?;
    let f = config.function()?;
    let t = section.time;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(HarnessError::Config(format!("duality.time must be finite and >= 0, got {t}")));
    }
    let forward_reps = config.replicates;
    let dual_reps = section.dual_replicates.unwrap_or(config.replicates);
    let kind = match section.moment {
        MomentChoice::WithReplacement => MomentKind::WithReplacement,
        MomentChoice::WithoutReplacement => MomentKind::WithoutReplacement,
    };

    let mut report = Report::new("duality-check", config);
    report.text("mode", format!("{:?}", section.mode).to_lowercase());
    let path;
    let source = match section.mode {
        DualityMode::Quenched => {
            path = quenched_path(&env, t.max(f64::MIN_POSITIVE), sub_seed(config, 0))?;
            report.count("environment_jumps", path.jump_times().len() as u64 - 1);
            EnvironmentSource::Quenched(&path)
        }
        DualityMode::Annealed => EnvironmentSource::Annealed(&env),
    };

    let forward = estimate_moran_moment(&params, source, &init, &f, t, forward_reps, sub_seed(config, 1), kind)?;
    let backward = estimate_dual_moment(&params, source, &m0, &f, t, dual_reps, sub_seed(config, 2), section.degree_cap)?;
    let diff = (forward.mean - backward.mean).abs();
    let se = forward.pooled_std_error(&backward);
    let allowance = section.bias_coefficient / params.population() as f64;
    report.estimate("forward", forward);
    report.estimate("backward", backward);
    report.number("abs_difference", diff);
    report.number("pooled_std_error", se);
    report.number("bias_allowance", allowance);
    report.at_most("duality", diff, 3.0 * se + allowance, "|forward - backward| <= 3 pooled SE + c/N");
    Ok(report)
}
