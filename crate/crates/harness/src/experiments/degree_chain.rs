use fvre_core::dual::run_to_absorption;
use fvre_core::environment::EnvironmentProcess;
use fvre_core::estimate::run_replicates;
use fvre_core::{DualFunction, Error, Estimate};

use super::sub_seed;
use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::report::Report;

#[derive(Debug, Clone, Copy, Default)]
struct Outcome {
    /// First degree change was a death; `None` if the cap was hit first.
    first_death: Option<bool>,
    /// Absorption time; `None` if the cap was hit.
    tau: Option<f64>,
    violations: usize,
    max_degree: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Degree-1 function with distinct values, so that selection always adds a
/// variable.
fn generic_degree_one(k: usize) -> DualFunction {
    DualFunction::new(k, 1, (0..k).map(|a| (a + 1) as f64 / (k + 1) as f64).collect()).expect("sized")
}

/// Birth–death structure of the dual degree: first move from degree one,
/// absorption, and sup-norm monotonicity.
pub fn run_degree_chain(config: &ExperimentConfig) -> Result<Report, HarnessError> {
    let section = &config.degree_chain;
    let env = config.environment()?;
    if matches!(env, EnvironmentProcess::Schedule(_)) {
        return Err(HarnessError::Config("degree-chain needs a constant or Markov environment".into()));
    }
    let init = config.function()?;
    let k = config.alleles();
    let first_init = if init.degree() == 1 { init.clone() } else { generic_degree_one(k) };
    let cases = if section.cases.is_empty() {
        vec![[config.model.beta_prime, config.model.alpha]]
    } else {
        section.cases.clone()
    };
    let reps = config.replicates;

    let mut report = Report::new("degree-chain", config);
    report.count("initial_degree", init.degree() as u64);
    let mut total_violations = 0u64;
    for (c, &[bp, alpha]) in cases.iter().enumerate() {
        if bp <= 0.0 {
            return Err(HarnessError::Config(format!("degree_chain case {c}: beta' must be > 0")));
        }
        let params = config.params_with(bp, alpha)?;
        let label = format!("beta'={bp},alpha={alpha}");
        let run = |f: &DualFunction, salt: u64| {
            run_replicates(sub_seed(config, salt), reps, |key| {
                match run_to_absorption(&params, &env, f.clone(), key, section.degree_cap) {
                    Ok(state) => {
                        let degrees = state.degree_sequence();
                        let start = degrees[0];
                        let first_death = degrees.iter().find(|&&d| d != start).map(|&d| d < start);
                        Ok(Outcome {
                            first_death,
                            tau: state.absorption_time(),
                            violations: state.sup_norm_violations(),
                            max_degree: degrees.into_iter().max().unwrap_or(0),
                        })
                    }
                    Err(Error::DegreeCapExceeded { .. }) => Ok(Outcome::default()),
                    Err(e) => Err(e),
                }
            })
        };

        let first = run(&first_init, 100 + 2 * c as u64)?;
        let deaths = first.iter().filter(|o| o.first_death == Some(true)).count() as f64;
        let fraction = deaths / reps as f64;
        let p = bp / (bp + alpha);
        let sigma = (p * (1.0 - p) / reps as f64).sqrt();
        report.number(format!("first_move_death_fraction({label})"), fraction);
        report.number(format!("first_move_death_probability({label})"), p);
        report.at_most(
            format!("first_move_death({label})"),
            (fraction - p).abs(),
            3.0 * sigma,
            "|death fraction - beta'/(beta'+alpha)| <= 3 binomial sigma",
        );

        let absorb = run(&init, 101 + 2 * c as u64)?;
        let mut taus: Vec<f64> = absorb.iter().filter_map(|o| o.tau).collect();
        let absorbed = taus.len() as f64 / reps as f64;
        taus.sort_by(f64::total_cmp);
        let stats = Estimate::from_samples(&taus);
        report.number(format!("absorbed_fraction({label})"), absorbed);
        report.estimate(format!("tau({label})"), stats);
        report.number(format!("tau_min({label})"), taus.first().copied().unwrap_or(f64::NAN));
        report.number(format!("tau_median({label})"), quantile(&taus, 0.5));
        report.number(format!("tau_p90({label})"), quantile(&taus, 0.9));
        report.number(format!("tau_max({label})"), taus.last().copied().unwrap_or(f64::NAN));
        report.count(
            format!("max_degree({label})"),
            absorb.iter().chain(&first).map(|o| o.max_degree).max().unwrap_or(0) as u64,
        );
        report.at_most(format!("absorption({label})"), 1.0 - absorbed, 0.0, "every replicate absorbs");
        if let (Some(&lo), Some(&hi)) = (taus.first(), taus.last()) {
            let bins = section.histogram_bins.max(1);
            let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
            let mut counts = vec![0u64; bins];
            for &t in &taus {
                counts[(((t - lo) / width) as usize).min(bins - 1)] += 1;
            }
            let rows = counts
                .iter()
                .enumerate()
                .map(|(i, &n)| vec![lo + i as f64 * width, lo + (i + 1) as f64 * width, n as f64])
                .collect();
            report.table(format!("tau_histogram({label})"), &["lower", "upper", "count"], rows);
        }
        total_violations += first.iter().chain(&absorb).map(|o| o.violations as u64).sum::<u64>();
    }
    report.count("sup_norm_violations", total_violations);
    report.at_most("sup_norm_monotone", total_violations as f64, 0.0, "no jump raises the sup norm");
    Ok(report)
}
