//! Event-driven simulation of the particle Moran process in a quenched
//! fitness environment, and Monte Carlo estimation of its moments.
//!
//! Resampling, mutation and candidate selection are three independent
//! Poisson clocks with state-independent total rates
//! `N(N-1)γ/2`, `Nβ` and `N(N-1)α/N`; each clock owns its random stream,
//! and within a stream every event draws its waiting time, then its
//! individual(s), then any acceptance/mutation uniforms. The environment
//! only enters through selection acceptance.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::environment::{EnvironmentPath, EnvironmentProcess};
use crate::error::{invalid, Error, Result};
use crate::estimate::{run_replicates, Estimate, SeedKey, SimRng, Stream};
use crate::function::DualFunction;
use crate::typespace::{moment_without_replacement, product_moment, EmpiricalMeasure, ModelParams, ProbVector};

/// Types of the `N` individuals at time `time`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticleState {
    alleles: Vec<usize>,
    time: f64,
}

impl ParticleState {
    pub fn new(alleles: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&a) = alleles.iter().find(|&&a| a >= k) {
            return Err(Error::IndexOutOfRange { index: a, degree: k });
        }
        Ok(Self { alleles, time: 0.0 })
    }

    pub fn alleles(&self) -> &[usize] {
        &self.alleles
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn measure(&self, k: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::from_alleles(&self.alleles, k).expect("alleles validated at construction")
    }
}

/// How the initial population is produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum InitialCondition {
    /// Explicit allele of every individual.
    Alleles(Vec<usize>),
    /// Deterministic counts, individuals laid out in allele order.
    Counts(EmpiricalMeasure),
    /// Every individual drawn independently from a distribution.
    Iid(ProbVector),
}

impl InitialCondition {
    pub fn realize<R: Rng + ?Sized>(&self, population: usize, k: usize, rng: &mut R) -> Result<ParticleState> {
        let alleles = match self {
            Self::Alleles(a) => a.clone(),
            Self::Counts(m) => {
                if m.alleles() != k {
                    return Err(Error::DimensionMismatch { expected: k, found: m.alleles() });
                }
                m.counts().iter().enumerate().flat_map(|(a, &c)| std::iter::repeat_n(a, c as usize)).collect()
            }
            Self::Iid(p) => {
                if p.len() != k {
                    return Err(Error::DimensionMismatch { expected: k, found: p.len() });
                }
                let table = Categorical::new(p.as_slice());
                (0..population).map(|_| table.sample(rng)).collect()
            }
        };
        if alleles.len() != population {
            return Err(Error::DimensionMismatch { expected: population, found: alleles.len() });
        }
        ParticleState::new(alleles, k)
    }

    /// `m_0` as a probability vector when the initial state is deterministic.
    pub fn deterministic_measure(&self, k: usize) -> Option<ProbVector> {
        match self {
            Self::Alleles(a) => EmpiricalMeasure::from_alleles(a, k).ok().map(|m| m.frequencies()),
            Self::Counts(m) => Some(m.frequencies()),
            Self::Iid(_) => None,
        }
    }
}

/// Empirical measures recorded at the requested times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoranTrajectory {
    pub sample_times: Vec<f64>,
    pub measures: Vec<EmpiricalMeasure>,
}

impl MoranTrajectory {
    /// Delimited table: `time,count_0,..,count_{K-1}`.
    pub fn to_table(&self) -> String {
        let k = self.measures.first().map_or(0, EmpiricalMeasure::alleles);
        let mut out = String::from("time");
        for a in 0..k {
            let _ = write!(out, ",count_{a}");
        }
        out.push('\n');
        for (t, m) in self.sample_times.iter().zip(&self.measures) {
            let _ = write!(out, "{t}");
            for c in m.counts() {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

/// The three event clocks' random streams.
#[derive(Debug, Clone)]
pub struct EventStreams {
    pub resampling: SimRng,
    pub mutation: SimRng,
    pub selection: SimRng,
}

impl EventStreams {
    pub fn from_key(key: SeedKey) -> Self {
        Self {
            resampling: key.rng(Stream::Resampling),
            mutation: key.rng(Stream::Mutation),
            selection: key.rng(Stream::Selection),
        }
    }
}

#[derive(Debug, Clone)]
struct Categorical {
    cumulative: Vec<f64>,
}

impl Categorical {
    fn new(p: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = p
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let u = rng.random::<f64>() * total;
        self.cumulative.iter().position(|&c| u < c).unwrap_or(self.cumulative.len() - 1)
    }
}

fn waiting_time<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    if rate > 0.0 {
        Distribution::<f64>::sample(&Exp1, rng) / rate
    } else {
        f64::INFINITY
    }
}

#[inline]
fn ordered_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

#[derive(Clone, Copy)]
enum Clock {
    Resampling,
    Mutation,
    Selection,
}

/// Simulates from `init` up to `horizon`, recording the empirical measure at
/// each of `sample_times` (sorted, within `[init.time, horizon]`).
pub fn simulate_moran(
    params: &ModelParams,
    env: &EnvironmentPath,
    init: ParticleState,
    horizon: f64,
    sample_times: &[f64],
    streams: &mut EventStreams,
) -> Result<MoranTrajectory> {
    let k = params.alleles();
    let n = params.population();
    if init.alleles.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: init.alleles.len() });
    }
    if env.alleles() != k {
        return Err(Error::DimensionMismatch { expected: k, found: env.alleles() });
    }
    if horizon > env.horizon() {
        return Err(Error::TimeOutOfRange { t: horizon, horizon: env.horizon() });
    }
    if horizon < init.time {
        return Err(invalid("horizon precedes the initial time"));
    }
    if sample_times.windows(2).any(|w| w[1] < w[0])
        || sample_times.iter().any(|&s| s < init.time || s > horizon)
    {
        return Err(invalid("sample times must be sorted and inside [start, horizon]"));
    }

    let kernel = params.kernel();
    let nf = n as f64;
    let resampling_rate = nf * (nf - 1.0) * params.gamma() / 2.0;
    let mutation_rate = nf * kernel.beta();
    let selection_rate = (nf - 1.0) * params.alpha();
    let independent_share = kernel.beta_prime() / kernel.beta();
    let q_prime = Categorical::new(kernel.q_prime().as_slice());
    let q_rows: Vec<Categorical> =
        (0..k).map(|a| Categorical::new(kernel.q_double_prime().row(a))).collect();

    let mut alleles = init.alleles;
    let start = init.time;
    let mut next = [
        start + waiting_time(resampling_rate, &mut streams.resampling),
        start + waiting_time(mutation_rate, &mut streams.mutation),
        start + waiting_time(selection_rate, &mut streams.selection),
    ];
    let mut measures = Vec::with_capacity(sample_times.len());
    let mut pending = sample_times.iter().copied().peekable();

    loop {
        let (clock, t) = [Clock::Resampling, Clock::Mutation, Clock::Selection]
            .into_iter()
            .zip(next)
            .fold((Clock::Resampling, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
        while pending.next_if(|&s| s < t).is_some() {
            measures.push(EmpiricalMeasure::from_alleles(&alleles, k)?);
        }
        if t > horizon {
            break;
        }
        match clock {
            Clock::Resampling => {
                let rng = &mut streams.resampling;
                let (i, j) = ordered_pair(n, rng);
                alleles[j] = alleles[i];
                next[0] = t + waiting_time(resampling_rate, rng);
            }
            Clock::Mutation => {
                let rng = &mut streams.mutation;
                let i = rng.random_range(0..n);
                alleles[i] = if rng.random::<f64>() < independent_share {
                    q_prime.sample(rng)
                } else {
                    q_rows[alleles[i]].sample(rng)
                };
                next[1] = t + waiting_time(mutation_rate, rng);
            }
            Clock::Selection => {
                let rng = &mut streams.selection;
                let (i, j) = ordered_pair(n, rng);
                let accept = rng.random::<f64>();
                if accept < env.evaluate(t)?[alleles[i]] {
                    alleles[j] = alleles[i];
                }
                next[2] = t + waiting_time(selection_rate, rng);
            }
        }
    }
    Ok(MoranTrajectory { sample_times: sample_times.to_vec(), measures })
}

/// Which moment of the empirical measure a replicate reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MomentKind {
    /// `<μ^{⊗n}, f>`
    WithReplacement,
    /// `<μ^{(N)}, f>`
    WithoutReplacement,
}

/// Environment used by a batch of replicates.
#[derive(Debug, Clone, Copy)]
pub enum EnvironmentSource<'a> {
    /// One realised path shared by every replicate.
    Quenched(&'a EnvironmentPath),
    /// A fresh path per replicate, from that replicate's environment stream.
    Annealed(&'a EnvironmentProcess),
}

impl EnvironmentSource<'_> {
    pub fn alleles(&self) -> usize {
        match self {
            Self::Quenched(p) => p.alleles(),
            Self::Annealed(p) => p.alleles(),
        }
    }

    pub(crate) fn path_for(&self, key: SeedKey, horizon: f64) -> Result<EnvironmentPath> {
        match self {
            Self::Quenched(p) => Ok((*p).clone()),
            Self::Annealed(proc) => proc.sample_path(horizon, &mut key.rng(Stream::Environment)),
        }
    }
}

/// Samples the single path used for a quenched experiment under `master`.
pub fn quenched_path(proc: &EnvironmentProcess, horizon: f64, master: u64) -> Result<EnvironmentPath> {
    let key = SeedKey::new(SeedKey::derived(master, 0x51_7E_4C_4E), 0);
    proc.sample_path(horizon, &mut key.rng(Stream::Environment))
}

pub fn measure_moment(m: &EmpiricalMeasure, f: &DualFunction, kind: MomentKind) -> Result<f64> {
    match kind {
        MomentKind::WithReplacement => product_moment(&m.frequencies(), f),
        MomentKind::WithoutReplacement => moment_without_replacement(m, f),
    }
}

/// Monte Carlo estimate of `E[<μ_N(t), f>]` over `replicates` runs.
#[allow(clippy::too_many_arguments)]
pub fn estimate_moran_moment(
    params: &ModelParams,
    env: EnvironmentSource<'_>,
    init: &InitialCondition,
    f: &DualFunction,
    t: f64,
    replicates: usize,
    master: u64,
    kind: MomentKind,
) -> Result<Estimate> {
    let samples = moran_samples(params, env, init, f, t, replicates, master, kind)?;
    Ok(Estimate::from_samples(&samples))
}

/// Per-replicate moment values, in replicate order.
#[allow(clippy::too_many_arguments)]
pub fn moran_samples(
    params: &ModelParams,
    env: EnvironmentSource<'_>,
    init: &InitialCondition,
    f: &DualFunction,
    t: f64,
    replicates: usize,
    master: u64,
    kind: MomentKind,
) -> Result<Vec<f64>> {
    let k = params.alleles();
    if replicates == 0 {
        return Err(invalid("need at least one replicate"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be finite and >= 0, got {t}")));
    }
    if f.alleles() != k || env.alleles() != k {
        return Err(Error::DimensionMismatch { expected: k, found: f.alleles().max(env.alleles()) });
    }
    if kind == MomentKind::WithoutReplacement && f.degree() > params.population() {
        return Err(Error::DegreeExceedsPopulation { degree: f.degree(), population: params.population() });
    }
    if let Some(c) = f.constant_value() {
        return Ok(vec![c; replicates]);
    }
    run_replicates(master, replicates, |key| {
        let state = init.realize(params.population(), k, &mut key.rng(Stream::Initial))?;
        if t == 0.0 {
            return measure_moment(&state.measure(k), f, kind);
        }
        let path = env.path_for(key, t)?;
        let traj = simulate_moran(params, &path, state, t, &[t], &mut EventStreams::from_key(key))?;
        measure_moment(&traj.measures[0], f, kind)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typespace::{FitnessVector, MutationKernel, StochasticMatrix};

    fn params(n: usize, gamma: f64, alpha: f64, kernel: MutationKernel) -> ModelParams {
        ModelParams::new(gamma, alpha, n, kernel).unwrap()
    }

    fn const_env(w: &[f64], horizon: f64) -> EnvironmentPath {
        EnvironmentPath::constant(FitnessVector::new(w.to_vec()).unwrap(), horizon).unwrap()
    }

    #[test]
    fn population_is_conserved() {
        let kernel = MutationKernel::parent_independent(0.5, ProbVector::uniform(3)).unwrap();
        let p = params(30, 1.0, 2.0, kernel);
        let env = const_env(&[0.9, 0.1, 0.5], 5.0);
        let init = ParticleState::new((0..30).map(|i| i % 3).collect(), 3).unwrap();
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5).collect();
        let traj = simulate_moran(&p, &env, init, 5.0, &times, &mut EventStreams::from_key(SeedKey::new(3, 0)))
            .unwrap();
        assert_eq!(traj.measures.len(), times.len());
        assert!(traj.measures.iter().all(|m| m.population() == 30));
    }

    #[test]
    fn one_way_mutation_fixes_allele_zero() {
        let kernel = MutationKernel::parent_independent(1.0, ProbVector::point_mass(2, 0).unwrap()).unwrap();
        let p = params(10, 1.0, 0.0, kernel);
        let env = const_env(&[0.5, 0.5], 50.0);
        let init = ParticleState::new(vec![1; 10], 2).unwrap();
        let traj = simulate_moran(&p, &env, init, 50.0, &[40.0, 50.0], &mut EventStreams::from_key(SeedKey::new(1, 0)))
            .unwrap();
        for m in &traj.measures {
            assert_eq!(m.counts(), &[10, 0]);
        }
    }

    #[test]
    fn two_individuals_coalesce_under_drift() {
        let kernel = MutationKernel::parent_independent(1e-9, ProbVector::uniform(2)).unwrap();
        let p = params(2, 1.0, 0.0, kernel);
        let env = const_env(&[0.5, 0.5], 20.0);
        for seed in 0..20 {
            let init = ParticleState::new(vec![0, 1], 2).unwrap();
            let traj =
                simulate_moran(&p, &env, init, 20.0, &[20.0], &mut EventStreams::from_key(SeedKey::new(seed, 0)))
                    .unwrap();
            let c = traj.measures[0].counts();
            assert!(c == [2, 0] || c == [0, 2], "seed {seed}: {c:?}");
        }
    }

    #[test]
    fn neutral_environment_does_not_matter() {
        let kernel = MutationKernel::new(
            0.4,
            0.6,
            ProbVector::new(vec![0.2, 0.3, 0.5]).unwrap(),
            StochasticMatrix::new(vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap(),
        )
        .unwrap();
        let p = params(25, 1.0, 0.0, kernel);
        let a = const_env(&[1.0, 0.0, 0.3], 3.0);
        let b = EnvironmentPath::new(
            vec![0.0, 1.0],
            vec![FitnessVector::new(vec![0.1, 0.9, 0.0]).unwrap(), FitnessVector::new(vec![0.5; 3]).unwrap()],
            3.0,
        )
        .unwrap();
        let init = ParticleState::new((0..25).map(|i| i % 3).collect(), 3).unwrap();
        let times = [0.5, 1.0, 2.0, 3.0];
        let key = SeedKey::new(11, 2);
        let ta = simulate_moran(&p, &a, init.clone(), 3.0, &times, &mut EventStreams::from_key(key)).unwrap();
        let tb = simulate_moran(&p, &b, init, 3.0, &times, &mut EventStreams::from_key(key)).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn zero_fitness_selection_is_a_no_op() {
        let kernel = MutationKernel::parent_independent(0.8, ProbVector::uniform(2)).unwrap();
        let env = const_env(&[0.0, 0.0], 4.0);
        let init = ParticleState::new((0..40).map(|i| i % 2).collect(), 2).unwrap();
        let times = [1.0, 2.0, 4.0];
        let key = SeedKey::new(5, 9);
        let neutral = simulate_moran(
            &params(40, 1.0, 0.0, kernel.clone()),
            &env,
            init.clone(),
            4.0,
            &times,
            &mut EventStreams::from_key(key),
        )
        .unwrap();
        let selective =
            simulate_moran(&params(40, 1.0, 3.0, kernel), &env, init, 4.0, &times, &mut EventStreams::from_key(key))
                .unwrap();
        assert_eq!(neutral, selective);
    }

    #[test]
    fn horizon_beyond_environment_rejected() {
        let kernel = MutationKernel::parent_independent(1.0, ProbVector::uniform(2)).unwrap();
        let env = const_env(&[0.5, 0.5], 1.0);
        let init = ParticleState::new(vec![0, 1, 0], 2).unwrap();
        let err =
            simulate_moran(&params(3, 1.0, 0.0, kernel), &env, init, 2.0, &[], &mut EventStreams::from_key(SeedKey::new(0, 0)));
        assert!(matches!(err, Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn constant_function_has_zero_variance() {
        let kernel = MutationKernel::parent_independent(1.0, ProbVector::uniform(2)).unwrap();
        let p = params(10, 1.0, 1.0, kernel);
        let proc = EnvironmentProcess::Constant(FitnessVector::new(vec![1.0, 0.0]).unwrap());
        let init = InitialCondition::Iid(ProbVector::uniform(2));
        let e = estimate_moran_moment(
            &p,
            EnvironmentSource::Annealed(&proc),
            &init,
            &DualFunction::constant(2, 0.3),
            1.0,
            20,
            1,
            MomentKind::WithReplacement,
        )
        .unwrap();
        assert_eq!((e.mean, e.variance, e.count), (0.3, 0.0, 20));
    }

    #[test]
    fn time_zero_returns_initial_moment() {
        let kernel = MutationKernel::parent_independent(1.0, ProbVector::uniform(2)).unwrap();
        let p = params(10, 1.0, 1.0, kernel);
        let proc = EnvironmentProcess::Constant(FitnessVector::new(vec![1.0, 0.0]).unwrap());
        let m0 = EmpiricalMeasure::new(vec![3, 7]).unwrap();
        let f = DualFunction::from_fn(2, 2, |x| (x[0] + 2 * x[1]) as f64);
        let e = estimate_moran_moment(
            &p,
            EnvironmentSource::Annealed(&proc),
            &InitialCondition::Counts(m0.clone()),
            &f,
            0.0,
            5,
            1,
            MomentKind::WithReplacement,
        )
        .unwrap();
        assert_eq!(e.mean, product_moment(&m0.frequencies(), &f).unwrap());
        assert_eq!(e.variance, 0.0);
    }

    #[test]
    fn trajectory_table_layout() {
        let traj = MoranTrajectory {
            sample_times: vec![0.0, 1.5],
            measures: vec![EmpiricalMeasure::new(vec![2, 1]).unwrap(), EmpiricalMeasure::new(vec![0, 3]).unwrap()],
        };
        assert_eq!(traj.to_table(), "time,count_0,count_1\n0,2,1\n1.5,0,3\n");
    }
}
