//! Fitness environments: piecewise-constant càdlàg paths over a finite set
//! of fitness vectors, and the processes that generate them.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::typespace::{FitnessVector, ProbVector};

/// Tolerance on generator row sums.
const RATE_ROW_TOLERANCE: f64 = 1e-12;
/// Maximum `‖π Q‖∞` accepted from the stationary solve.
pub const STATIONARY_RESIDUAL_TOLERANCE: f64 = 1e-10;

/// A right-continuous step function on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvironmentPath {
    jump_times: Vec<f64>,
    values: Vec<FitnessVector>,
    horizon: f64,
}

impl EnvironmentPath {
    pub fn new(jump_times: Vec<f64>, values: Vec<FitnessVector>, horizon: f64) -> Result<Self> {
        if jump_times.is_empty() || jump_times.len() != values.len() {
            return Err(invalid("path needs one fitness vector per segment"));
        }
        if jump_times[0] != 0.0 {
            return Err(invalid("first segment must start at time 0"));
        }
        if jump_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("jump times must be strictly increasing"));
        }
        if !(horizon > 0.0) || jump_times.last().is_some_and(|&t| t > horizon) {
            return Err(invalid(format!("invalid horizon {horizon}")));
        }
        let k = values[0].len();
        if let Some(v) = values.iter().find(|v| v.len() != k) {
            return Err(Error::DimensionMismatch { expected: k, found: v.len() });
        }
        Ok(Self { jump_times, values, horizon })
    }

    pub fn constant(value: FitnessVector, horizon: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![value], horizon)
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[FitnessVector] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn alleles(&self) -> usize {
        self.values[0].len()
    }

    /// `e(t)`: value of the segment containing `t` (right-continuous).
    pub fn evaluate(&self, t: f64) -> Result<&FitnessVector> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon });
        }
        let seg = self.jump_times.partition_point(|&s| s <= t) - 1;
        Ok(&self.values[seg])
    }

    /// `e(t-)`: left limit; at a jump time this is the previous segment.
    pub fn evaluate_left(&self, t: f64) -> Result<&FitnessVector> {
        if !(t > 0.0 && t <= self.horizon) {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon });
        }
        let seg = self.jump_times.partition_point(|&s| s < t) - 1;
        Ok(&self.values[seg])
    }

    /// The same path restricted to `[0, horizon]`.
    pub fn truncated(&self, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon <= self.horizon) {
            return Err(Error::TimeOutOfRange { t: horizon, horizon: self.horizon });
        }
        let keep = self.jump_times.partition_point(|&s| s <= horizon);
        Self::new(self.jump_times[..keep].to_vec(), self.values[..keep].to_vec(), horizon)
    }

    /// Plain-text table: a `# horizon <h>` line, then one row per segment
    /// holding the start time followed by the `K` fitness values.
    pub fn to_table(&self) -> String {
        let mut out = format!("# horizon {}\n", self.horizon);
        for (t, w) in self.jump_times.iter().zip(&self.values) {
            let _ = write!(out, "{t}");
            for x in w.as_slice() {
                let _ = write!(out, " {x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut horizon = None;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let parse_err = |message: String| Error::Parse { line: lineno + 1, message };
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let mut words = comment.split_whitespace();
                if words.next() == Some("horizon") {
                    let h = words.next().ok_or_else(|| parse_err("missing horizon value".into()))?;
                    horizon = Some(h.parse::<f64>().map_err(|e| parse_err(e.to_string()))?);
                }
                continue;
            }
            let nums = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(e.to_string()))?;
            if nums.len() < 3 {
                return Err(parse_err("expected a time and at least two fitness values".into()));
            }
            times.push(nums[0]);
            values.push(FitnessVector::new(nums[1..].to_vec()).map_err(|e| parse_err(e.to_string()))?);
        }
        let horizon = horizon.ok_or(Error::Parse { line: 0, message: "missing '# horizon' line".into() })?;
        Self::new(times, values, horizon)
    }
}

fn rates_irreducible(rates: &[Vec<f64>]) -> bool {
    let s = rates.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; s];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..s {
                let r = if forward { rates[i][j] } else { rates[j][i] };
                if i != j && r > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|x| x)
    };
    s > 0 && reach(true) && reach(false)
}

/// Stationary law of an irreducible rate matrix, by a direct linear solve.
pub fn stationary_law(rates: &[Vec<f64>]) -> Result<ProbVector> {
    let s = rates.len();
    validate_rate_matrix(rates, s)?;
    if !rates_irreducible(rates) {
        return Err(Error::ReducibleChain);
    }
    // Qᵀ πᵀ = 0 with the last equation swapped for the normalisation.
    let mut a = DMatrix::<f64>::from_fn(s, s, |i, j| rates[j][i]);
    for j in 0..s {
        a[(s - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(s);
    b[s - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or(Error::ReducibleChain)?;
    let mut pi: Vec<f64> = pi.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= total);
    let residual = (0..s)
        .map(|j| (0..s).map(|i| pi[i] * rates[i][j]).sum::<f64>().abs())
        .fold(0.0, f64::max);
    if residual > STATIONARY_RESIDUAL_TOLERANCE {
        return Err(invalid(format!("stationary solve residual {residual:e} too large")));
    }
    ProbVector::new(pi)
}

/// Finite-state continuous-time Markov chain over fitness vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovEnvironment {
    states: Vec<FitnessVector>,
    rates: Vec<Vec<f64>>,
    initial: ProbVector,
}

impl MarkovEnvironment {
    pub fn new(states: Vec<FitnessVector>, rates: Vec<Vec<f64>>, initial: ProbVector) -> Result<Self> {
        let s = states.len();
        if s == 0 {
            return Err(invalid("Markov environment needs at least one state"));
        }
        let k = states[0].len();
        if let Some(v) = states.iter().find(|v| v.len() != k) {
            return Err(Error::DimensionMismatch { expected: k, found: v.len() });
        }
        if initial.len() != s {
            return Err(Error::DimensionMismatch { expected: s, found: initial.len() });
        }
        validate_rate_matrix(&rates, s)?;
        Ok(Self { states, rates, initial })
    }

    /// Same chain, started from its stationary distribution.
    pub fn stationary(states: Vec<FitnessVector>, rates: Vec<Vec<f64>>) -> Result<Self> {
        let s = states.len();
        let chain = Self::new(states, rates, ProbVector::uniform(s.max(1)))?;
        let pi = chain.stationary_distribution()?;
        Ok(Self { initial: pi, ..chain })
    }

    pub fn states(&self) -> &[FitnessVector] {
        &self.states
    }

    pub fn rates(&self) -> &[Vec<f64>] {
        &self.rates
    }

    pub fn initial(&self) -> &ProbVector {
        &self.initial
    }

    pub fn alleles(&self) -> usize {
        self.states[0].len()
    }

    pub fn exit_rate(&self, state: usize) -> f64 {
        -self.rates[state][state]
    }

    pub fn is_irreducible(&self) -> bool {
        rates_irreducible(&self.rates)
    }

    /// Unique `π` with `π Q = 0`, `Σ π = 1`.
    pub fn stationary_distribution(&self) -> Result<ProbVector> {
        stationary_law(&self.rates)
    }

    /// The stationary time reversal, `q̂(i,j) = π_j q(j,i) / π_i`, started
    /// from `π`.
    pub fn time_reversed(&self) -> Result<Self> {
        let pi = self.stationary_distribution()?;
        let s = self.states.len();
        let rates = (0..s)
            .map(|i| {
                (0..s)
                    .map(|j| if i == j { self.rates[i][i] } else { pi[j] * self.rates[j][i] / pi[i] })
                    .collect()
            })
            .collect();
        Ok(Self { states: self.states.clone(), rates, initial: pi })
    }

    /// Walks the chain forward from a state drawn from `initial`.
    pub fn walker<R: Rng + ?Sized>(&self, rng: &mut R) -> ChainWalker<'_> {
        let state = sample_index(self.initial.as_slice(), rng);
        let mut walker = ChainWalker { chain: self, state, entered_at: 0.0, leaves_at: 0.0 };
        walker.leaves_at = walker.holding_time(rng);
        walker
    }
}

fn validate_rate_matrix(rates: &[Vec<f64>], s: usize) -> Result<()> {
    if rates.len() != s {
        return Err(Error::DimensionMismatch { expected: s, found: rates.len() });
    }
    for (i, row) in rates.iter().enumerate() {
        if row.len() != s {
            return Err(Error::DimensionMismatch { expected: s, found: row.len() });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(invalid("rate matrix has a non-finite entry"));
        }
        if row.iter().enumerate().any(|(j, &x)| j != i && x < 0.0) {
            return Err(invalid(format!("row {i} of rate matrix has a negative off-diagonal rate")));
        }
        let sum: f64 = row.iter().sum();
        if sum.abs() > RATE_ROW_TOLERANCE {
            return Err(invalid(format!("row {i} of rate matrix sums to {sum}, not 0")));
        }
    }
    Ok(())
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // rounding: last state with positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Incremental sampler of a Markov chain path; queries must be made at
/// non-decreasing times.
#[derive(Debug, Clone)]
pub struct ChainWalker<'a> {
    chain: &'a MarkovEnvironment,
    state: usize,
    entered_at: f64,
    leaves_at: f64,
}

impl ChainWalker<'_> {
    fn holding_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let rate = self.chain.exit_rate(self.state);
        if rate > 0.0 {
            self.entered_at + Distribution::<f64>::sample(&Exp1, rng) / rate
        } else {
            f64::INFINITY
        }
    }

    fn jump<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let row: Vec<f64> = self.chain.rates[self.state]
            .iter()
            .enumerate()
            .map(|(j, &r)| if j == self.state { 0.0 } else { r })
            .collect();
        self.state = sample_index(&row, rng);
        self.entered_at = self.leaves_at;
        self.leaves_at = self.holding_time(rng);
    }

    /// State occupied at time `t` (right-continuous).
    pub fn state_at<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> usize {
        debug_assert!(t >= self.entered_at, "walker queried backwards in time");
        while self.leaves_at <= t {
            self.jump(rng);
        }
        self.state
    }

    pub fn value_at<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> &FitnessVector {
        let s = self.state_at(t, rng);
        &self.chain.states[s]
    }

    pub fn current_state(&self) -> usize {
        self.state
    }

    /// Start time of the current segment and the time it ends.
    pub fn current_segment(&self) -> (f64, f64) {
        (self.entered_at, self.leaves_at)
    }
}

/// The law of a fitness trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EnvironmentProcess {
    Constant(FitnessVector),
    Schedule(EnvironmentPath),
    MarkovJump(MarkovEnvironment),
}

impl EnvironmentProcess {
    pub fn alleles(&self) -> usize {
        match self {
            Self::Constant(w) => w.len(),
            Self::Schedule(p) => p.alleles(),
            Self::MarkovJump(m) => m.alleles(),
        }
    }

    /// True when every trajectory is the same path.
    pub fn is_deterministic(&self) -> bool {
        match self {
            Self::Constant(_) | Self::Schedule(_) => true,
            Self::MarkovJump(m) => m.states.len() == 1,
        }
    }

    /// One trajectory on `[0, horizon]`.
    pub fn sample_path<R: Rng + ?Sized>(&self, horizon: f64, rng: &mut R) -> Result<EnvironmentPath> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid(format!("horizon must be positive and finite, got {horizon}")));
        }
        match self {
            Self::Constant(w) => EnvironmentPath::constant(w.clone(), horizon),
            Self::Schedule(path) => path.truncated(horizon),
            Self::MarkovJump(chain) => {
                let mut walker = chain.walker(rng);
                let mut times = vec![0.0];
                let mut values = vec![chain.states[walker.current_state()].clone()];
                loop {
                    let (_, next) = walker.current_segment();
                    if next > horizon {
                        break;
                    }
                    let s = walker.state_at(next, rng);
                    times.push(next);
                    values.push(chain.states[s].clone());
                }
                EnvironmentPath::new(times, values, horizon)
            }
        }
    }
}
