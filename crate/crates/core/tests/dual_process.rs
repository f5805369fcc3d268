mod common;

use common::{random_fitness, random_prob, random_stochastic, random_tensor, rng};
use fvre_core::dual::{
    estimate_dual_limit, estimate_dual_moment, run_to_absorption, simulate_dual, simulate_dual_in, ConstantFitness,
    JumpKind, DEFAULT_DEGREE_CAP,
};
use fvre_core::environment::{EnvironmentPath, EnvironmentProcess, MarkovEnvironment};
use fvre_core::estimate::{SeedKey, Stream};
use fvre_core::moran::{estimate_moran_moment, quenched_path, EnvironmentSource, InitialCondition, MomentKind};
use fvre_core::typespace::{FitnessVector, ModelParams, MutationKernel, ProbVector, StochasticMatrix};
use fvre_core::DualFunction;
use proptest::prelude::*;

fn fitness(v: &[f64]) -> FitnessVector {
    FitnessVector::new(v.to_vec()).unwrap()
}

fn kernel(bp: f64, bpp: f64) -> MutationKernel {
    MutationKernel::new(
        bp,
        bpp,
        ProbVector::new(vec![0.3, 0.7]).unwrap(),
        StochasticMatrix::new(vec![vec![0.6, 0.4], vec![0.25, 0.75]]).unwrap(),
    )
    .unwrap()
}

fn two_state_chain() -> MarkovEnvironment {
    MarkovEnvironment::new(
        vec![fitness(&[0.9, 0.2]), fitness(&[0.1, 0.6])],
        vec![vec![-1.5, 1.5], vec![0.5, -0.5]],
        ProbVector::new(vec![0.5, 0.5]).unwrap(),
    )
    .unwrap()
}

/// Stationary law of a rate matrix by power iteration of its uniformised chain.
fn stationary_by_iteration(q: &[Vec<f64>]) -> Vec<f64> {
    let k = q.len();
    let lambda = 1.0 + q.iter().enumerate().map(|(i, r)| -r[i]).fold(0.0, f64::max);
    let mut pi = vec![1.0 / k as f64; k];
    for _ in 0..100_000 {
        let next: Vec<f64> = (0..k)
            .map(|j| (0..k).map(|i| pi[i] * (if i == j { 1.0 } else { 0.0 } + q[i][j] / lambda)).sum())
            .collect();
        pi = next;
    }
    pi
}

#[test]
fn quenched_duality_small_population() {
    let n = 100;
    let params = ModelParams::new(1.0, 1.0, n, kernel(1.0, 0.5)).unwrap();
    let proc = EnvironmentProcess::MarkovJump(two_state_chain());
    let t = 0.5;
    let path = quenched_path(&proc, t, 7).unwrap();
    let f = DualFunction::indicator(2, 0).unwrap();
    let m0 = ProbVector::new(vec![0.4, 0.6]).unwrap();
    let init = InitialCondition::Iid(m0.clone());
    let src = EnvironmentSource::Quenched(&path);
    let fwd = estimate_moran_moment(&params, src, &init, &f, t, 4000, 1, MomentKind::WithReplacement).unwrap();
    let bwd = estimate_dual_moment(&params, src, &m0, &f, t, 4000, 2, DEFAULT_DEGREE_CAP).unwrap();
    let band = 3.0 * fwd.pooled_std_error(&bwd) + 0.5 / n as f64;
    assert!((fwd.mean - bwd.mean).abs() <= band, "{fwd:?} vs {bwd:?}");
}

#[test]
fn annealed_duality_degree_two() {
    let n = 100;
    let params = ModelParams::new(1.0, 2.0, n, kernel(0.8, 0.3)).unwrap();
    let proc = EnvironmentProcess::MarkovJump(two_state_chain());
    let f = DualFunction::new(2, 2, vec![1.0, 0.2, 0.2, 0.0]).unwrap();
    let m0 = ProbVector::new(vec![0.5, 0.5]).unwrap();
    let init = InitialCondition::Counts(fvre_core::typespace::EmpiricalMeasure::new(vec![50, 50]).unwrap());
    let src = EnvironmentSource::Annealed(&proc);
    let fwd = estimate_moran_moment(&params, src, &init, &f, 0.4, 4000, 3, MomentKind::WithReplacement).unwrap();
    let bwd = estimate_dual_moment(&params, src, &m0, &f, 0.4, 4000, 4, DEFAULT_DEGREE_CAP).unwrap();
    let band = 3.0 * fwd.pooled_std_error(&bwd) + 1.0 / n as f64;
    assert!((fwd.mean - bwd.mean).abs() <= band, "{fwd:?} vs {bwd:?}");
}

#[test]
fn dual_at_time_zero_is_exact() {
    let params = ModelParams::new(1.0, 1.0, 10, kernel(1.0, 0.0)).unwrap();
    let path = EnvironmentPath::constant(fitness(&[0.3, 0.8]), 1.0).unwrap();
    let f = DualFunction::new(2, 2, vec![0.1, 0.5, 0.9, 0.2]).unwrap();
    let m0 = ProbVector::new(vec![0.25, 0.75]).unwrap();
    let e = estimate_dual_moment(&params, EnvironmentSource::Quenched(&path), &m0, &f, 0.0, 10, 5, 8).unwrap();
    let exact = 0.25 * 0.25 * 0.1 + 0.25 * 0.75 * (0.5 + 0.9) + 0.75 * 0.75 * 0.2;
    assert!((e.mean - exact).abs() < 1e-15);
    assert_eq!(e.variance, 0.0);
}

fn first_move_is_death(params: &ModelParams, seed: u64) -> bool {
    let path = EnvironmentPath::constant(fitness(&[0.8, 0.35]), 1e6).unwrap();
    let f = DualFunction::new(2, 1, vec![0.9, 0.1]).unwrap();
    let mut r = SeedKey::new(seed, 0).rng(Stream::Dual);
    let state = simulate_dual(params, &path, 1e6, f, &mut r, DEFAULT_DEGREE_CAP).unwrap();
    state.log.iter().find(|j| j.degree_after != 1).expect("degree changes").degree_after == 0
}

#[test]
fn first_degree_change_from_one() {
    for (bp, alpha) in [(1.0, 1.0), (3.0, 1.0)] {
        let params = ModelParams::new(1.0, alpha, 10, kernel(bp, 0.7)).unwrap();
        let reps = 4000;
        let deaths = (0..reps).filter(|&s| first_move_is_death(&params, s)).count() as f64;
        let p = bp / (bp + alpha);
        let sigma = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((deaths / reps as f64 - p).abs() <= 3.0 * sigma, "{bp} {alpha}: {deaths}");
    }
}

#[test]
fn all_replicates_absorb() {
    let params = ModelParams::new(1.0, 2.0, 10, kernel(1.0, 0.5)).unwrap();
    let env = EnvironmentProcess::MarkovJump(two_state_chain());
    let f = DualFunction::new(2, 2, vec![1.0, 0.0, 0.5, 0.25]).unwrap();
    for rep in 0..1000 {
        let s = run_to_absorption(&params, &env, f.clone(), SeedKey::new(9, rep), DEFAULT_DEGREE_CAP).unwrap();
        assert!(s.absorbed && s.f.degree() == 0);
        assert!(s.absorption_time().unwrap() > 0.0);
    }
}

#[test]
fn jump_skeleton_ignores_generic_environments() {
    let params = ModelParams::new(1.0, 1.5, 10, kernel(0.5, 0.5)).unwrap();
    let f = DualFunction::new(2, 2, vec![0.9, 0.1, 0.4, 0.7]).unwrap();
    for seed in 0..200 {
        let run = |w: &[f64]| {
            let mut r = SeedKey::new(seed, 0).rng(Stream::Dual);
            simulate_dual_in(&params, &mut ConstantFitness(fitness(w)), 5.0, f.clone(), &mut r, 16).unwrap()
        };
        let (a, b) = (run(&[0.83, 0.27]), run(&[0.15, 0.64]));
        let skeleton = |s: &fvre_core::dual::DualState| {
            s.log.iter().map(|j| (j.time, j.kind, j.first, j.second, j.degree_after)).collect::<Vec<_>>()
        };
        assert_eq!(skeleton(&a), skeleton(&b));
    }
}

#[test]
fn neutral_limit_is_the_lineage_stationary_law() {
    let k = kernel(1.0, 1.5);
    let params = ModelParams::new(1.0, 0.0, 10, k.clone()).unwrap();
    let pi = stationary_by_iteration(&k.lineage_generator());
    let env = EnvironmentProcess::Constant(fitness(&[0.5, 0.5]));
    for a in 0..2 {
        let f = DualFunction::indicator(2, a).unwrap();
        let e = estimate_dual_limit(&params, &env, &f, 10_000, 11 + a as u64, DEFAULT_DEGREE_CAP).unwrap();
        assert!((e.mean - pi[a]).abs() <= 3.0 * e.std_error(), "allele {a}: {e:?} vs {}", pi[a]);
    }
}

#[test]
fn ergodic_limit_rejects_missing_parent_independent_mutation() {
    let params = ModelParams::new(1.0, 1.0, 10, kernel(0.0, 1.0)).unwrap();
    let env = EnvironmentProcess::MarkovJump(two_state_chain());
    assert!(estimate_dual_limit(&params, &env, &DualFunction::indicator(2, 0).unwrap(), 10, 1, 8).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dual_paths_respect_invariants(
        seed in any::<u64>(),
        k in 2usize..=3,
        n in 0usize..=3,
        gamma in 0.1f64..3.0,
        alpha in 0.0f64..3.0,
        bp in 0.05f64..2.0,
        bpp in 0.0f64..2.0,
        horizon in 0.1f64..5.0,
    ) {
        let mut r = rng(seed);
        let kernel = MutationKernel::new(bp, bpp, random_prob(k, &mut r), random_stochastic(k, &mut r)).unwrap();
        let params = ModelParams::new(gamma, alpha, 10, kernel).unwrap();
        let path = EnvironmentPath::new(
            vec![0.0, horizon / 3.0],
            vec![random_fitness(k, &mut r), random_fitness(k, &mut r)],
            horizon,
        ).unwrap();
        let f = random_tensor(k, n, &mut r).canonicalize();
        let state = match simulate_dual(&params, &path, horizon, f, &mut r, 10) {
            Err(fvre_core::Error::DegreeCapExceeded { .. }) => return Err(TestCaseError::reject("degree cap")),
            other => other.unwrap(),
        };
        prop_assert_eq!(state.sup_norm_violations(), 0);
        prop_assert_eq!(state.absorbed, state.f.degree() == 0);
        prop_assert!(state.elapsed <= horizon);
        let degrees = state.degree_sequence();
        for (jump, pair) in state.log.iter().zip(degrees.windows(2)) {
            let limit = match jump.kind {
                JumpKind::Resampling | JumpKind::ParentIndependentMutation => pair[0] - 1,
                JumpKind::ParentDependentMutation => pair[0],
                JumpKind::Selection => pair[0] + 1,
            };
            prop_assert!(pair[1] <= limit);
            prop_assert!(jump.time < horizon);
        }
        let times: Vec<f64> = state.log.iter().map(|j| j.time).collect();
        prop_assert!(times.windows(2).all(|w| w[0] < w[1]));
    }
}
