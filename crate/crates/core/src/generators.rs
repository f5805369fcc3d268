//! Exact generator evaluation on polynomials `m ↦ <m^{⊗n}, f>`.
//!
//! Fleming–Viot and dual generators act on product measures and are
//! evaluated by tensor contraction. The Moran generator acts on the
//! empirical measure of `N` particles, with moments taken without
//! replacement; exchangeability collapses the `N²` pair sums to pairs
//! inside the first `n` variables plus one representative pair with a fresh
//! particle, weighted by `N - n`.

use crate::dual::{resampling_raw, selection_raw};
use crate::error::{Error, Result};
use crate::function::DualFunction;
use crate::numeric::CompensatedSum;
use crate::typespace::{
    moment_without_replacement, product_moment, EmpiricalMeasure, FitnessVector, ModelParams, ProbVector,
};

fn check_dims(params: &ModelParams, w: &FitnessVector, f: &DualFunction, k: usize) -> Result<()> {
    for found in [w.len(), f.alleles(), k] {
        if found != params.alleles() {
            return Err(Error::DimensionMismatch { expected: params.alleles(), found });
        }
    }
    Ok(())
}

/// Mutation part, shared by all three generators.
fn mutation_part(
    params: &ModelParams,
    f: &DualFunction,
    base: f64,
    moment: &impl Fn(&DualFunction) -> Result<f64>,
) -> Result<f64> {
    let kernel = params.kernel();
    let mut pi = CompensatedSum::new();
    let mut pd = CompensatedSum::new();
    for i in 0..f.degree() {
        if kernel.beta_prime() > 0.0 {
            pi.add(moment(&f.contract(i, kernel.q_prime())?)? - base);
        }
        if kernel.beta_double_prime() > 0.0 {
            pd.add(moment(&f.apply_kernel(i, kernel.q_double_prime())?)? - base);
        }
    }
    Ok(kernel.beta_prime() * pi.value() + kernel.beta_double_prime() * pd.value())
}

/// Fleming–Viot generator at the product measure `m`, fitness `w`.
pub fn fv_generator_apply(params: &ModelParams, w: &FitnessVector, f: &DualFunction, m: &ProbVector) -> Result<f64> {
    check_dims(params, w, f, m.len())?;
    let n = f.degree();
    let moment = |g: &DualFunction| product_moment(m, g);
    let base = moment(f)?;

    let mut resampling = CompensatedSum::new();
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            resampling.add(moment(&f.tie(i, j)?)? - base);
        }
    }

    let mut selection = CompensatedSum::new();
    if n > 0 {
        let lifted = f.insert_dummy(n)?.scale_by_fitness(n, w)?;
        let last = moment(&lifted)?;
        for i in 0..n {
            selection.add(moment(&f.scale_by_fitness(i, w)?)? - last);
        }
    }

    Ok(params.gamma() / 2.0 * resampling.value()
        + mutation_part(params, f, base, &moment)?
        + params.alpha() * selection.value())
}

/// Dual generator at the product measure `m`, with the environment value
/// `w` seen by the selection jumps.
pub fn dual_generator_apply(params: &ModelParams, w: &FitnessVector, f: &DualFunction, m: &ProbVector) -> Result<f64> {
    check_dims(params, w, f, m.len())?;
    let n = f.degree();
    let moment = |g: &DualFunction| product_moment(m, g);
    let base = moment(f)?;

    let mut resampling = CompensatedSum::new();
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            resampling.add(moment(&resampling_raw(f, i, j)?)? - base);
        }
    }

    let mut selection = CompensatedSum::new();
    for i in 0..n {
        selection.add(moment(&selection_raw(f, i, w)?)? - base);
    }

    Ok(params.gamma() / 2.0 * resampling.value()
        + mutation_part(params, f, base, &moment)?
        + params.alpha() * selection.value())
}

/// `f` with variable `j` replaced by a fresh variable appended at the end.
fn replace_with_fresh(f: &DualFunction, j: usize) -> Result<DualFunction> {
    let n = f.degree();
    f.insert_dummy(n)?.tie(n, j)
}

/// Moran generator of the `N`-particle system with empirical measure `m`,
/// applied to `f` viewed as a function of the first `n` of `N` particles.
pub fn moran_generator_apply(
    params: &ModelParams,
    w: &FitnessVector,
    f: &DualFunction,
    m: &EmpiricalMeasure,
) -> Result<f64> {
    check_dims(params, w, f, m.alleles())?;
    let n = f.degree();
    let pop = m.population() as usize;
    if n > pop {
        return Err(Error::DegreeExceedsPopulation { degree: n, population: pop });
    }
    let moment = |g: &DualFunction| moment_without_replacement(m, g);
    let base = moment(f)?;
    let outside = (pop - n) as f64;

    let mut res_inside = CompensatedSum::new();
    let mut sel_inside = CompensatedSum::new();
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let diff = f.tie(i, j)?.combine(1.0, f, -1.0)?;
            res_inside.add(moment(&diff)?);
            sel_inside.add(moment(&diff.scale_by_fitness(i, w)?)?);
        }
    }

    let mut res_outside = CompensatedSum::new();
    let mut sel_outside = CompensatedSum::new();
    if n > 0 && n < pop {
        let lifted = f.insert_dummy(n)?;
        for j in 0..n {
            let diff = replace_with_fresh(f, j)?.combine(1.0, &lifted, -1.0)?;
            res_outside.add(moment(&diff)?);
            sel_outside.add(moment(&diff.scale_by_fitness(n, w)?)?);
        }
    }

    let resampling = res_inside.value() + outside * res_outside.value();
    let selection = sel_inside.value() + outside * sel_outside.value();
    Ok(params.gamma() / 2.0 * resampling
        + mutation_part(params, f, base, &moment)?
        + params.alpha() / pop as f64 * selection)
}

/// `|FV generator - dual generator|` on identical inputs.
pub fn generator_duality_gap(params: &ModelParams, w: &FitnessVector, f: &DualFunction, m: &ProbVector) -> Result<f64> {
    Ok((fv_generator_apply(params, w, f, m)? - dual_generator_apply(params, w, f, m)?).abs())
}

/// Uniform bound on `|fv_generator_apply|` over measures and fitness
/// vectors: `γ n(n-1)‖f‖ + 4βn‖f‖ + 2nα‖f‖`.
pub fn generator_bound(params: &ModelParams, f: &DualFunction) -> f64 {
    let n = f.degree() as f64;
    let norm = f.sup_norm();
    (params.gamma() * n * (n - 1.0) + 4.0 * params.kernel().beta() * n + 2.0 * n * params.alpha()) * norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typespace::{MutationKernel, StochasticMatrix};

    fn params(alpha: f64) -> ModelParams {
        let kernel = MutationKernel::new(
            0.7,
            0.4,
            ProbVector::new(vec![0.2, 0.5, 0.3]).unwrap(),
            StochasticMatrix::new(vec![vec![0.1, 0.6, 0.3], vec![0.5, 0.5, 0.0], vec![0.2, 0.2, 0.6]]).unwrap(),
        )
        .unwrap();
        ModelParams::new(1.3, alpha, 50, kernel).unwrap()
    }

    fn sample_f() -> DualFunction {
        DualFunction::from_fn(3, 2, |x| ((x[0] * 7 + x[1] * 3) % 5) as f64 / 4.0 - 0.3)
    }

    #[test]
    fn constant_function_is_annihilated() {
        let p = params(2.0);
        let w = FitnessVector::new(vec![0.1, 0.9, 0.4]).unwrap();
        let c = DualFunction::constant(3, 0.8);
        let m = ProbVector::new(vec![0.3, 0.3, 0.4]).unwrap();
        assert_eq!(fv_generator_apply(&p, &w, &c, &m).unwrap(), 0.0);
        assert_eq!(dual_generator_apply(&p, &w, &c, &m).unwrap(), 0.0);
        let em = EmpiricalMeasure::new(vec![3, 3, 4]).unwrap();
        assert_eq!(moran_generator_apply(&p, &w, &c, &em).unwrap(), 0.0);
        assert!(generator_bound(&p, &c) >= 0.0);
    }

    #[test]
    fn constant_fitness_has_no_selection_effect() {
        let m = ProbVector::new(vec![0.3, 0.3, 0.4]).unwrap();
        let w = FitnessVector::constant(3, 0.6).unwrap();
        let f = sample_f();
        let with = fv_generator_apply(&params(3.0), &w, &f, &m).unwrap();
        let without = fv_generator_apply(&params(0.0), &w, &f, &m).unwrap();
        assert!((with - without).abs() < 1e-14);
    }

    #[test]
    fn fv_and_dual_agree() {
        let p = params(2.5);
        let w = FitnessVector::new(vec![0.1, 0.9, 0.4]).unwrap();
        let m = ProbVector::new(vec![0.25, 0.15, 0.6]).unwrap();
        let f = DualFunction::from_fn(3, 3, |x| (x[0] as f64 - 1.0) * (x[1] + 2 * x[2]) as f64 / 6.0);
        assert!(generator_duality_gap(&p, &w, &f, &m).unwrap() < 1e-12);
    }

    #[test]
    fn degree_one_bound() {
        let p = params(2.0);
        let f = DualFunction::indicator(3, 1).unwrap();
        assert!((generator_bound(&p, &f) - (4.0 * 1.1 + 2.0 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn moran_rejects_degree_above_population() {
        let p = params(1.0);
        let w = FitnessVector::constant(3, 0.5).unwrap();
        let f = DualFunction::from_fn(3, 3, |x| x[0] as f64 + x[2] as f64);
        let em = EmpiricalMeasure::new(vec![1, 1, 0]).unwrap();
        assert_eq!(
            moran_generator_apply(&p, &w, &f, &em).unwrap_err(),
            Error::DegreeExceedsPopulation { degree: 3, population: 2 }
        );
    }

    #[test]
    fn dimension_mismatch() {
        let p = params(1.0);
        let w = FitnessVector::constant(2, 0.5).unwrap();
        let m = ProbVector::uniform(3);
        assert!(fv_generator_apply(&p, &w, &sample_f(), &m).is_err());
    }
}
