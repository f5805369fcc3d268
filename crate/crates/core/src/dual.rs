//! The function-valued dual process.
//!
//! From a degree-`n` state the dual jumps by
//! * resampling, rate `γ/2` per ordered pair `i ≠ j`: variable `j` is
//!   identified with variable `i` and removed;
//! * parent-independent mutation, rate `β'` per variable: the variable is
//!   integrated against `q'`;
//! * parent-dependent mutation, rate `β''` per variable: `q''` acts on it;
//! * selection, rate `α` per variable `i`: `w[x_i] f + (1 - w[x_i]) f∘del_i`
//!   with `w` the environment at dual time `s`, read backwards from the
//!   horizon as the left limit `e((t - s)-)`.
//!
//! Every jump result is canonicalised, so the degree counts the variables
//! the function genuinely depends on and constants are absorbing.

use std::fmt::{self, Write as _};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::environment::{ChainWalker, EnvironmentPath, EnvironmentProcess, MarkovEnvironment};
use crate::error::{invalid, Error, Result};
use crate::estimate::{run_replicates, Estimate, SeedKey, SimRng, Stream};
use crate::function::DualFunction;
use crate::moran::EnvironmentSource;
use crate::typespace::{product_moment, FitnessVector, ModelParams, ProbVector, StochasticMatrix};

/// Default ceiling on the dual degree.
pub const DEFAULT_DEGREE_CAP: usize = 32;

/// Largest tensor a selection jump may create; births beyond it are
/// reported as [`Error::DegreeCapExceeded`] at the corresponding degree.
pub const MAX_TENSOR_ENTRIES: usize = 1 << 26;

/// The degree cap actually enforced for `alleles` types.
pub fn effective_degree_cap(alleles: usize, degree_cap: usize) -> usize {
    let mut degree = 0;
    let mut size = 1usize;
    while degree < degree_cap {
        match size.checked_mul(alleles) {
            Some(next) if next <= MAX_TENSOR_ENTRIES => {
                size = next;
                degree += 1;
            }
            _ => break,
        }
    }
    degree
}

/// Slack allowed when checking that a jump does not raise the sup norm.
pub const SUP_NORM_SLACK: f64 = 1e-12;

fn require_degree(f: &DualFunction, min: usize) -> Result<()> {
    if f.degree() < min {
        return Err(invalid(format!("jump needs degree >= {min}, function has degree {}", f.degree())));
    }
    Ok(())
}

/// Resampling jump: identify variable `j` with variable `i`, then drop `j`.
pub fn apply_resampling(f: &DualFunction, i: usize, j: usize) -> Result<DualFunction> {
    require_degree(f, 2)?;
    Ok(resampling_raw(f, i, j)?.canonicalize())
}

pub(crate) fn resampling_raw(f: &DualFunction, i: usize, j: usize) -> Result<DualFunction> {
    if i == j {
        return Err(invalid("resampling needs two distinct variables"));
    }
    f.tie(i, j)?.restrict(j, 0)
}

/// Parent-independent mutation of variable `i`.
pub fn apply_parent_indep_mutation(f: &DualFunction, i: usize, q_prime: &ProbVector) -> Result<DualFunction> {
    require_degree(f, 1)?;
    Ok(f.contract(i, q_prime)?.canonicalize())
}

/// Parent-dependent mutation of variable `i`.
pub fn apply_parent_dep_mutation(f: &DualFunction, i: usize, q: &StochasticMatrix) -> Result<DualFunction> {
    require_degree(f, 1)?;
    Ok(f.apply_kernel(i, q)?.canonicalize())
}

/// Selection jump on variable `i`; the result has one more variable.
pub fn apply_selection(f: &DualFunction, i: usize, w: &FitnessVector) -> Result<DualFunction> {
    require_degree(f, 1)?;
    Ok(selection_raw(f, i, w)?.canonicalize())
}

pub(crate) fn selection_raw(f: &DualFunction, i: usize, w: &FitnessVector) -> Result<DualFunction> {
    if i >= f.degree() {
        return Err(Error::IndexOutOfRange { index: i, degree: f.degree() });
    }
    if w.len() != f.alleles() {
        return Err(Error::DimensionMismatch { expected: f.alleles(), found: w.len() });
    }
    // f(x_1..x_n) with x_{n+1} unused, and f(x_1..x_{i-1}, x_{i+1}..x_{n+1})
    let kept = f.insert_dummy(f.degree())?;
    let shifted = f.insert_dummy(i)?;
    // written as shifted + w (kept - shifted) so that constants stay exact
    let diff = kept.combine(1.0, &shifted, -1.0)?;
    shifted.combine(1.0, &diff.scale_by_fitness(i, w)?, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JumpKind {
    Resampling,
    ParentIndependentMutation,
    ParentDependentMutation,
    Selection,
}

impl fmt::Display for JumpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Resampling => "resample",
            Self::ParentIndependentMutation => "mutP",
            Self::ParentDependentMutation => "mutPP",
            Self::Selection => "select",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpRecord {
    pub time: f64,
    pub kind: JumpKind,
    pub first: usize,
    pub second: Option<usize>,
    pub degree_after: usize,
    pub sup_norm_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualState {
    pub f: DualFunction,
    pub horizon: f64,
    pub elapsed: f64,
    pub log: Vec<JumpRecord>,
    pub absorbed: bool,
    pub initial_degree: usize,
    pub initial_sup_norm: f64,
}

impl DualState {
    /// Time of absorption, if it happened.
    pub fn absorption_time(&self) -> Option<f64> {
        if !self.absorbed {
            return None;
        }
        Some(self.log.last().map_or(0.0, |r| r.time))
    }

    /// Degree after each jump, starting with the initial degree.
    pub fn degree_sequence(&self) -> Vec<usize> {
        std::iter::once(self.initial_degree).chain(self.log.iter().map(|r| r.degree_after)).collect()
    }

    /// Jumps that raised the sup norm beyond [`SUP_NORM_SLACK`].
    pub fn sup_norm_violations(&self) -> usize {
        let mut prev = self.initial_sup_norm;
        let mut violations = 0;
        for r in &self.log {
            if r.sup_norm_after > prev * (1.0 + SUP_NORM_SLACK) {
                violations += 1;
            }
            prev = r.sup_norm_after;
        }
        violations
    }

    pub fn selection_count(&self) -> usize {
        self.log.iter().filter(|r| r.kind == JumpKind::Selection).count()
    }

    /// Delimited table: `time,kind,i,j,degree,sup_norm`.
    pub fn log_table(&self) -> String {
        let mut out = String::from("time,kind,i,j,degree,sup_norm\n");
        for r in &self.log {
            let j = r.second.map(|j| j.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{},{}", r.time, r.kind, r.first, j, r.degree_after, r.sup_norm_after);
        }
        out
    }
}

/// Fitness seen by the dual at dual time `s`; queried at increasing `s`.
pub trait DualEnvironment {
    fn fitness_at(&mut self, s: f64) -> Result<FitnessVector>;
}

/// A fixed fitness vector at all times.
#[derive(Debug, Clone)]
pub struct ConstantFitness(pub FitnessVector);

impl DualEnvironment for ConstantFitness {
    fn fitness_at(&mut self, _s: f64) -> Result<FitnessVector> {
        Ok(self.0.clone())
    }
}

/// A realised path read backwards from `horizon`: `e((horizon - s)-)`.
#[derive(Debug, Clone)]
pub struct ReversedPath<'a> {
    path: &'a EnvironmentPath,
    horizon: f64,
}

impl<'a> ReversedPath<'a> {
    pub fn new(path: &'a EnvironmentPath, horizon: f64) -> Result<Self> {
        if horizon > path.horizon() {
            return Err(Error::TimeOutOfRange { t: horizon, horizon: path.horizon() });
        }
        Ok(Self { path, horizon })
    }
}

impl DualEnvironment for ReversedPath<'_> {
    fn fitness_at(&mut self, s: f64) -> Result<FitnessVector> {
        self.path.evaluate_left(self.horizon - s).cloned()
    }
}

/// The stationary environment seen backwards from a far-away horizon,
/// generated on demand as the time-reversed stationary chain.
pub struct StationaryBackward<'a> {
    walker: ChainWalker<'a>,
    rng: SimRng,
}

impl<'a> StationaryBackward<'a> {
    /// `reversed` must come from [`MarkovEnvironment::time_reversed`].
    pub fn new(reversed: &'a MarkovEnvironment, mut rng: SimRng) -> Self {
        let walker = reversed.walker(&mut rng);
        Self { walker, rng }
    }
}

impl DualEnvironment for StationaryBackward<'_> {
    fn fitness_at(&mut self, s: f64) -> Result<FitnessVector> {
        Ok(self.walker.value_at(s, &mut self.rng).clone())
    }
}

/// Runs the dual from `init` for dual time `horizon` (which may be infinite:
/// then it runs until absorption).
pub fn simulate_dual_in<E: DualEnvironment + ?Sized>(
    params: &ModelParams,
    env: &mut E,
    horizon: f64,
    init: DualFunction,
    rng: &mut SimRng,
    degree_cap: usize,
) -> Result<DualState> {
    let kernel = params.kernel();
    if init.alleles() != params.alleles() {
        return Err(Error::DimensionMismatch { expected: params.alleles(), found: init.alleles() });
    }
    if !(horizon >= 0.0) {
        return Err(invalid(format!("dual horizon must be >= 0, got {horizon}")));
    }
    if horizon.is_infinite() && kernel.beta_prime() <= 0.0 {
        return Err(invalid("running to absorption needs beta' > 0"));
    }
    let init = init.canonicalize();
    let degree_cap = effective_degree_cap(params.alleles(), degree_cap);
    if init.degree() > degree_cap {
        return Err(Error::DegreeCapExceeded { cap: degree_cap });
    }
    let initial_degree = init.degree();
    let initial_sup_norm = init.sup_norm();
    let mut state = DualState {
        f: init,
        horizon,
        elapsed: 0.0,
        log: Vec::new(),
        absorbed: false,
        initial_degree,
        initial_sup_norm,
    };
    let (gamma, alpha) = (params.gamma(), params.alpha());
    let (beta_p, beta_pp) = (kernel.beta_prime(), kernel.beta_double_prime());
    let mut s = 0.0;
    loop {
        let n = state.f.degree();
        if n == 0 {
            state.absorbed = true;
            break;
        }
        let nf = n as f64;
        let rates = [nf * (nf - 1.0) * gamma / 2.0, nf * beta_p, nf * beta_pp, nf * alpha];
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            break;
        }
        s += Distribution::<f64>::sample(&Exp1, rng) / total;
        if s >= horizon {
            break;
        }
        let mut u = rng.random::<f64>() * total;
        let mut kind = 3;
        for (idx, &r) in rates.iter().enumerate() {
            if u < r {
                kind = idx;
                break;
            }
            u -= r;
        }
        // rounding can leave u past the last positive rate
        if rates[kind] == 0.0 {
            kind = rates.iter().rposition(|&r| r > 0.0).expect("total > 0");
        }
        let before = state.f.sup_norm();
        let (next, kind, first, second) = match kind {
            0 => {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                (apply_resampling(&state.f, i, j)?, JumpKind::Resampling, i, Some(j))
            }
            1 => {
                let i = rng.random_range(0..n);
                (apply_parent_indep_mutation(&state.f, i, kernel.q_prime())?, JumpKind::ParentIndependentMutation, i, None)
            }
            2 => {
                let i = rng.random_range(0..n);
                (
                    apply_parent_dep_mutation(&state.f, i, kernel.q_double_prime())?,
                    JumpKind::ParentDependentMutation,
                    i,
                    None,
                )
            }
            _ => {
                let i = rng.random_range(0..n);
                if n + 1 > degree_cap {
                    return Err(Error::DegreeCapExceeded { cap: degree_cap });
                }
                let w = env.fitness_at(s)?;
                (apply_selection(&state.f, i, &w)?, JumpKind::Selection, i, None)
            }
        };
        let after = next.sup_norm();
        debug_assert!(
            after <= before * (1.0 + SUP_NORM_SLACK),
            "{kind} jump raised sup norm from {before} to {after}"
        );
        state.log.push(JumpRecord {
            time: s,
            kind,
            first,
            second,
            degree_after: next.degree(),
            sup_norm_after: after,
        });
        state.f = next;
    }
    state.elapsed = if state.absorbed { s.min(horizon) } else { horizon };
    Ok(state)
}

/// The dual over `[0, horizon]` against a realised environment path.
pub fn simulate_dual(
    params: &ModelParams,
    env: &EnvironmentPath,
    horizon: f64,
    init: DualFunction,
    rng: &mut SimRng,
    degree_cap: usize,
) -> Result<DualState> {
    if !horizon.is_finite() {
        return Err(invalid("a path-driven dual needs a finite horizon"));
    }
    let mut backward = ReversedPath::new(env, horizon)?;
    simulate_dual_in(params, &mut backward, horizon, init, rng, degree_cap)
}

/// Runs the dual until absorption in the stationary version of `env`.
pub fn run_to_absorption(
    params: &ModelParams,
    env: &EnvironmentProcess,
    init: DualFunction,
    key: SeedKey,
    degree_cap: usize,
) -> Result<DualState> {
    let mut rng = key.rng(Stream::Dual);
    match env {
        EnvironmentProcess::Constant(w) => {
            simulate_dual_in(params, &mut ConstantFitness(w.clone()), f64::INFINITY, init, &mut rng, degree_cap)
        }
        EnvironmentProcess::MarkovJump(chain) => {
            let reversed = chain.time_reversed()?;
            let mut backward = StationaryBackward::new(&reversed, key.rng(Stream::DualEnvironment));
            simulate_dual_in(params, &mut backward, f64::INFINITY, init, &mut rng, degree_cap)
        }
        EnvironmentProcess::Schedule(_) => {
            Err(invalid("a finite schedule cannot be extended; use a constant or Markov environment"))
        }
    }
}

/// `<m0^{⊗n}, ψ>` for a finished dual state.
pub fn dual_moment(m0: &ProbVector, state: &DualState) -> Result<f64> {
    product_moment(m0, &state.f)
}

/// Per-replicate dual values `<m0^{⊗n}, ψ_t>`, in replicate order.
#[allow(clippy::too_many_arguments)]
pub fn dual_samples(
    params: &ModelParams,
    env: EnvironmentSource<'_>,
    m0: &ProbVector,
    f: &DualFunction,
    t: f64,
    replicates: usize,
    master: u64,
    degree_cap: usize,
) -> Result<Vec<f64>> {
    if replicates == 0 {
        return Err(invalid("need at least one replicate"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be finite and >= 0, got {t}")));
    }
    if t == 0.0 {
        let v = product_moment(m0, f)?;
        return Ok(vec![v; replicates]);
    }
    run_replicates(master, replicates, |key| {
        let path = env.path_for(key, t)?;
        let state = simulate_dual(params, &path, t, f.clone(), &mut key.rng(Stream::Dual), degree_cap)?;
        dual_moment(m0, &state)
    })
}

/// Monte Carlo estimate of `E[<m0^{⊗n}, ψ_t>]`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_dual_moment(
    params: &ModelParams,
    env: EnvironmentSource<'_>,
    m0: &ProbVector,
    f: &DualFunction,
    t: f64,
    replicates: usize,
    master: u64,
    degree_cap: usize,
) -> Result<Estimate> {
    Ok(Estimate::from_samples(&dual_samples(params, env, m0, f, t, replicates, master, degree_cap)?))
}

/// Estimates `lim_{t→∞} E[ψ_t^{t,e}]`: the mean absorbed constant of duals
/// run against the stationary environment.
pub fn estimate_dual_limit(
    params: &ModelParams,
    env: &EnvironmentProcess,
    init: &DualFunction,
    replicates: usize,
    master: u64,
    degree_cap: usize,
) -> Result<Estimate> {
    if params.kernel().beta_prime() <= 0.0 {
        return Err(invalid("the ergodic limit needs a parent-independent mutation component"));
    }
    if let EnvironmentProcess::MarkovJump(chain) = env {
        if !chain.is_irreducible() {
            return Err(Error::ReducibleChain);
        }
    }
    if replicates == 0 {
        return Err(invalid("need at least one replicate"));
    }
    let values = run_replicates(master, replicates, |key| {
        let state = run_to_absorption(params, env, init.clone(), key, degree_cap)?;
        Ok(state.f.constant_value().expect("absorbed state is constant"))
    })?;
    Ok(Estimate::from_samples(&values))
}
