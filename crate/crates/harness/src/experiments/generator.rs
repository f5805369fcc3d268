use fvre_core::estimate::SimRng;
use fvre_core::generators::{fv_generator_apply, generator_bound, generator_duality_gap, moran_generator_apply};
use fvre_core::typespace::{
    extension_gap, EmpiricalMeasure, FitnessVector, ModelParams, MutationKernel, ProbVector, StochasticMatrix,
};
use fvre_core::DualFunction;
use rand::{Rng, SeedableRng};

use super::{log_log_slope, sub_seed};
use crate::config::ExperimentConfig;
use crate::error::{config_error, HarnessError};
use crate::report::Report;

fn random_prob(k: usize, rng: &mut SimRng) -> ProbVector {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let head: f64 = p[..k - 1].iter().sum();
    p[k - 1] = (1.0 - head).max(0.0);
    ProbVector::new(p).expect("normalised")
}

fn random_instance(rng: &mut SimRng, max_k: usize, max_n: usize) -> (ModelParams, FitnessVector, DualFunction, ProbVector) {
    let k = rng.random_range(2..=max_k);
    let n = rng.random_range(0..=max_n);
    let q = StochasticMatrix::new((0..k).map(|_| random_prob(k, rng).as_slice().to_vec()).collect())
        .expect("stochastic rows");
    let kernel =
        MutationKernel::new(rng.random_range(0.05..2.0), rng.random_range(0.0..2.0), random_prob(k, rng), q)
            .expect("valid kernel");
    let params = ModelParams::new(rng.random_range(0.05..3.0), rng.random_range(0.0..3.0), 100, kernel)
        .expect("valid params");
    let w = FitnessVector::new((0..k).map(|_| rng.random::<f64>()).collect()).expect("in [0,1]");
    let values = (0..k.pow(n as u32)).map(|_| rng.random_range(-1.0..1.0)).collect();
    let f = DualFunction::new(k, n, values).expect("sized");
    (params, w, f, random_prob(k, rng))
}

/// Default sweep measure: multiples of 1/10 as even as possible.
fn default_frequencies(k: usize) -> Vec<f64> {
    let each = (10 / k) as f64 / 10.0;
    let mut p = vec![each; k];
    p[k - 1] = 1.0 - each * (k - 1) as f64;
    p
}

/// The FV/dual generator identity on random instances, and the Moran→FV
/// convergence rate over a population sweep.
pub fn run_generator_check(config: &ExperimentConfig) -> Result<Report, HarnessError> {
    let section = &config.generator;
    if section.max_alleles < 2 || section.max_degree > 6 {
        return Err(HarnessError::Config("generator.max_alleles must be >= 2 and max_degree <= 6".into()));
    }
    let mut report = Report::new("generator-check", config);
    let mut rng = SimRng::seed_from_u64(sub_seed(config, 3));

    let mut worst_gap: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..section.instances {
        let (params, w, f, m) = random_instance(&mut rng, section.max_alleles, section.max_degree);
        worst_gap = worst_gap.max(generator_duality_gap(&params, &w, &f, &m)?);
        let bound = generator_bound(&params, &f);
        let value = fv_generator_apply(&params, &w, &f, &m)?.abs();
        if bound > 0.0 {
            worst_ratio = worst_ratio.max(value / bound);
        } else if value > 0.0 {
            worst_ratio = f64::INFINITY;
        }
    }
    report.count("instances", section.instances as u64);
    report.number("max_duality_gap", worst_gap);
    report.number("max_value_over_bound", worst_ratio);
    report.at_most("generator_identity", worst_gap, section.gap_tolerance, "max |FV - dual generator| <= tolerance");
    report.at_most("generator_bound", worst_ratio, 1.0, "max |FV generator| / bound <= 1");

    if section.populations.len() >= 2 {
        let k = config.alleles();
        let f = match config.function()? {
            f if f.degree() == 2 => f,
            _ => DualFunction::new(k, 2, (0..k * k).map(|_| rng.random_range(-1.0..1.0)).collect())
                .expect("sized"),
        };
        let w = config.fitness_at_zero()?;
        let p = ProbVector::new(section.frequencies.clone().unwrap_or_else(|| default_frequencies(k)))
            .map_err(config_error("generator.frequencies"))?;
        let base = config.params()?;
        let fv = fv_generator_apply(&base, &w, &f, &p)?;
        let mut rows = Vec::new();
        for &n in &section.populations {
            let em = EmpiricalMeasure::from_frequencies(&p, n).map_err(config_error("generator.frequencies"))?;
            let params = base.with_population(n).map_err(config_error("generator.populations"))?;
            let moran_gap = (moran_generator_apply(&params, &w, &f, &em)? - fv).abs();
            let ext_gap = extension_gap(&em, &f)?;
            rows.push(vec![n as f64, moran_gap, ext_gap, n as f64 * moran_gap, n as f64 * ext_gap]);
        }
        let ns: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let moran_gaps: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        let ext_gaps: Vec<f64> = rows.iter().map(|r| r[2]).collect();
        let moran_slope = log_log_slope(&ns, &moran_gaps);
        let ext_slope = log_log_slope(&ns, &ext_gaps);
        report.number("fv_generator_value", fv);
        report.number("moran_gap_slope", moran_slope);
        report.number("extension_gap_slope", ext_slope);
        report.table(
            "population_sweep",
            &["population", "moran_fv_gap", "extension_gap", "scaled_moran_gap", "scaled_extension_gap"],
            rows,
        );
        let rule = format!("log-log slope in [{}, {}]", section.slope_min, section.slope_max);
        report.within("moran_fv_slope", moran_slope, section.slope_min, section.slope_max, rule.clone());
        report.within("extension_gap_slope", ext_slope, section.slope_min, section.slope_max, rule);
    }
    Ok(report)
}
