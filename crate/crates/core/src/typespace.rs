//! Finite allele space, probability vectors, mutation kernels, empirical
//! measures, and the two moment functionals that turn a tensor into a
//! polynomial on measures.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::function::DualFunction;
use crate::numeric::{compensated_sum, CompensatedSum};

/// Absolute tolerance for simplex and row-stochasticity checks.
pub const PROB_TOLERANCE: f64 = 1e-12;

/// The allele set `{0, .., K-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TypeSpace {
    alleles: usize,
}

impl TypeSpace {
    pub fn new(alleles: usize) -> Result<Self> {
        if alleles < 2 {
            return Err(invalid(format!("type space needs at least 2 alleles, got {alleles}")));
        }
        Ok(Self { alleles })
    }

    pub fn alleles(&self) -> usize {
        self.alleles
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("{what} contains a non-finite entry")));
    }
    Ok(())
}

/// A probability vector over the alleles (or over environment states).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(invalid("probability vector is empty"));
        }
        check_finite(&p, "probability vector")?;
        if p.iter().any(|&x| x < 0.0) {
            return Err(invalid("probability vector has a negative entry"));
        }
        let total = compensated_sum(p.iter().copied());
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return Err(invalid(format!("probability vector sums to {total}, not 1")));
        }
        Ok(Self(p))
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    pub fn point_mass(len: usize, at: usize) -> Result<Self> {
        if at >= len {
            return Err(Error::IndexOutOfRange { index: at, degree: len });
        }
        let mut p = vec![0.0; len];
        p[at] = 1.0;
        Ok(Self(p))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Fitness of every allele, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct FitnessVector(Vec<f64>);

impl FitnessVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(invalid("fitness vector is empty"));
        }
        check_finite(&w, "fitness vector")?;
        if let Some(bad) = w.iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
            return Err(invalid(format!("fitness value {bad} outside [0, 1]")));
        }
        Ok(Self(w))
    }

    pub fn constant(alleles: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; alleles])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for FitnessVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Row-stochastic `K x K` matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StochasticMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl StochasticMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return Err(invalid("stochastic matrix is empty"));
        }
        let mut entries = Vec::with_capacity(size * size);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(Error::DimensionMismatch { expected: size, found: row.len() });
            }
            ProbVector::new(row.clone())
                .map_err(|e| invalid(format!("row {r} of stochastic matrix: {e}")))?;
            entries.extend_from_slice(row);
        }
        Ok(Self { size, entries })
    }

    pub fn identity(size: usize) -> Self {
        let mut entries = vec![0.0; size * size];
        for i in 0..size {
            entries[i * size + i] = 1.0;
        }
        Self { size, entries }
    }

    /// Matrix whose every row equals `row`.
    pub fn rank_one(row: &ProbVector) -> Self {
        let size = row.len();
        let entries = (0..size).flat_map(|_| row.as_slice().iter().copied()).collect();
        Self { size, entries }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.entries[r * self.size..(r + 1) * self.size]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.size + c]
    }
}

/// `β q(x, dy) = β' q'(dy) + β'' q''(x, dy)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MutationKernel {
    beta_prime: f64,
    beta_double_prime: f64,
    q_prime: ProbVector,
    q_double_prime: StochasticMatrix,
}

impl MutationKernel {
    pub fn new(
        beta_prime: f64,
        beta_double_prime: f64,
        q_prime: ProbVector,
        q_double_prime: StochasticMatrix,
    ) -> Result<Self> {
        for (name, rate) in [("beta'", beta_prime), ("beta''", beta_double_prime)] {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(invalid(format!("{name} must be a finite rate >= 0, got {rate}")));
            }
        }
        if beta_prime + beta_double_prime <= 0.0 {
            return Err(invalid("total mutation rate beta' + beta'' must be positive"));
        }
        if q_prime.len() != q_double_prime.size() {
            return Err(Error::DimensionMismatch {
                expected: q_prime.len(),
                found: q_double_prime.size(),
            });
        }
        TypeSpace::new(q_prime.len())?;
        Ok(Self { beta_prime, beta_double_prime, q_prime, q_double_prime })
    }

    /// Parent-independent mutation only.
    pub fn parent_independent(beta_prime: f64, q_prime: ProbVector) -> Result<Self> {
        let k = q_prime.len();
        Self::new(beta_prime, 0.0, q_prime, StochasticMatrix::identity(k))
    }

    pub fn alleles(&self) -> usize {
        self.q_prime.len()
    }

    pub fn beta_prime(&self) -> f64 {
        self.beta_prime
    }

    pub fn beta_double_prime(&self) -> f64 {
        self.beta_double_prime
    }

    pub fn beta(&self) -> f64 {
        self.beta_prime + self.beta_double_prime
    }

    pub fn q_prime(&self) -> &ProbVector {
        &self.q_prime
    }

    pub fn q_double_prime(&self) -> &StochasticMatrix {
        &self.q_double_prime
    }

    /// Generator of the single-lineage mutation chain,
    /// `β'(1 q' - I) + β''(q'' - I)`, row-major.
    pub fn lineage_generator(&self) -> Vec<Vec<f64>> {
        let k = self.alleles();
        (0..k)
            .map(|x| {
                (0..k)
                    .map(|y| {
                        let diag = if x == y { self.beta() } else { 0.0 };
                        self.beta_prime * self.q_prime[y]
                            + self.beta_double_prime * self.q_double_prime.get(x, y)
                            - diag
                    })
                    .collect()
            })
            .collect()
    }
}

/// Resampling rate `γ`, selection rate `α`, population size `N`, mutation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelParams {
    gamma: f64,
    alpha: f64,
    population: usize,
    kernel: MutationKernel,
}

impl ModelParams {
    pub fn new(gamma: f64, alpha: f64, population: usize, kernel: MutationKernel) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(invalid(format!("gamma must be positive, got {gamma}")));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(invalid(format!("alpha must be >= 0, got {alpha}")));
        }
        if population < 2 {
            return Err(invalid(format!("population size must be >= 2, got {population}")));
        }
        Ok(Self { gamma, alpha, population, kernel })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn population(&self) -> usize {
        self.population
    }

    pub fn kernel(&self) -> &MutationKernel {
        &self.kernel
    }

    pub fn alleles(&self) -> usize {
        self.kernel.alleles()
    }

    pub fn with_population(&self, population: usize) -> Result<Self> {
        Self::new(self.gamma, self.alpha, population, self.kernel.clone())
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.gamma, alpha, self.population, self.kernel.clone())
    }
}

/// Allele counts of `N` individuals; `m(a) = counts[a] / N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct EmpiricalMeasure {
    counts: Vec<u64>,
    total: u64,
}

impl EmpiricalMeasure {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        TypeSpace::new(counts.len())?;
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(invalid("empirical measure has no individuals"));
        }
        Ok(Self { counts, total })
    }

    pub fn from_alleles(alleles: &[usize], k: usize) -> Result<Self> {
        let mut counts = vec![0u64; k];
        for &a in alleles {
            if a >= k {
                return Err(Error::IndexOutOfRange { index: a, degree: k });
            }
            counts[a] += 1;
        }
        Self::new(counts)
    }

    /// Exact counts `N p`; fails unless every `N p[a]` is an integer.
    pub fn from_frequencies(p: &ProbVector, population: usize) -> Result<Self> {
        let counts = p
            .as_slice()
            .iter()
            .map(|&x| {
                let c = x * population as f64;
                let r = c.round();
                if (c - r).abs() > 1e-9 {
                    Err(invalid(format!(
                        "frequency {x} is not a multiple of 1/{population}"
                    )))
                } else {
                    Ok(r as u64)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let m = Self::new(counts)?;
        if m.total != population as u64 {
            return Err(invalid("frequencies do not produce the requested population"));
        }
        Ok(m)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn population(&self) -> u64 {
        self.total
    }

    pub fn alleles(&self) -> usize {
        self.counts.len()
    }

    pub fn frequencies(&self) -> ProbVector {
        let n = self.total as f64;
        ProbVector(self.counts.iter().map(|&c| c as f64 / n).collect())
    }
}

/// `<m^{⊗n}, f>`: contraction of every index of `f` against `m`.
pub fn product_moment(m: &ProbVector, f: &DualFunction) -> Result<f64> {
    if m.len() != f.alleles() {
        return Err(Error::DimensionMismatch { expected: f.alleles(), found: m.len() });
    }
    let k = f.alleles();
    let w = m.as_slice();
    let mut current: Vec<f64> = f.values().to_vec();
    while current.len() > 1 {
        current = current
            .chunks_exact(k)
            .map(|block| compensated_sum(block.iter().zip(w).map(|(v, p)| v * p)))
            .collect();
    }
    Ok(current[0])
}

/// `<m^{(N)}, f>`: ordered sampling of `deg f` individuals without replacement.
pub fn moment_without_replacement(m: &EmpiricalMeasure, f: &DualFunction) -> Result<f64> {
    if m.alleles() != f.alleles() {
        return Err(Error::DimensionMismatch { expected: f.alleles(), found: m.alleles() });
    }
    if f.degree() as u64 > m.population() {
        return Err(Error::DegreeExceedsPopulation {
            degree: f.degree(),
            population: m.population() as usize,
        });
    }
    let mut remaining = m.counts().to_vec();
    Ok(sample_without_replacement(f.values(), f.alleles(), &mut remaining, m.population()))
}

// Peels off the leading variable: the block for allele `a` is weighted by the
// conditional probability `remaining[a] / left` and the count is decremented.
fn sample_without_replacement(block: &[f64], k: usize, remaining: &mut [u64], left: u64) -> f64 {
    if block.len() == 1 {
        return block[0];
    }
    let sub = block.len() / k;
    let mut acc = CompensatedSum::new();
    for a in 0..k {
        let c = remaining[a];
        if c == 0 {
            continue;
        }
        remaining[a] -= 1;
        let inner = sample_without_replacement(&block[a * sub..(a + 1) * sub], k, remaining, left - 1);
        remaining[a] += 1;
        acc.add(c as f64 / left as f64 * inner);
    }
    acc.value()
}

/// `|<m^{(N)}, f> - <(m/N)^{⊗n}, f>|`.
pub fn extension_gap(m: &EmpiricalMeasure, f: &DualFunction) -> Result<f64> {
    let without = moment_without_replacement(m, f)?;
    let with = product_moment(&m.frequencies(), f)?;
    Ok((without - with).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn same_allele(k: usize) -> DualFunction {
        DualFunction::from_fn(k, 2, |x| if x[0] == x[1] { 1.0 } else { 0.0 })
    }

    fn distinct_alleles(k: usize) -> DualFunction {
        DualFunction::from_fn(k, 2, |x| if x[0] != x[1] { 1.0 } else { 0.0 })
    }

    #[test]
    fn type_space_needs_two_alleles() {
        assert!(TypeSpace::new(1).is_err());
        assert_eq!(TypeSpace::new(3).unwrap().alleles(), 3);
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ProbVector::new(vec![0.1; 10]).is_ok());
    }

    #[test]
    fn fitness_range_enforced() {
        assert!(FitnessVector::new(vec![0.0, 1.0]).is_ok());
        assert!(FitnessVector::new(vec![1.01, 0.0]).is_err());
        assert!(FitnessVector::new(vec![-0.1, 0.0]).is_err());
    }

    #[test]
    fn kernel_requires_positive_rate_and_stochastic_rows() {
        let q = ProbVector::uniform(2);
        assert!(MutationKernel::new(0.0, 0.0, q.clone(), StochasticMatrix::identity(2)).is_err());
        assert!(StochasticMatrix::new(vec![vec![0.5, 0.4], vec![0.0, 1.0]]).is_err());
        assert!(MutationKernel::new(0.0, 1.0, q, StochasticMatrix::identity(3)).is_err());
    }

    #[test]
    fn params_validation() {
        let kernel = MutationKernel::parent_independent(1.0, ProbVector::uniform(2)).unwrap();
        assert!(ModelParams::new(0.0, 1.0, 10, kernel.clone()).is_err());
        assert!(ModelParams::new(1.0, -1.0, 10, kernel.clone()).is_err());
        assert!(ModelParams::new(1.0, 0.0, 1, kernel.clone()).is_err());
        assert!(ModelParams::new(1.0, 0.0, 2, kernel).is_ok());
    }

    #[test]
    fn lineage_generator_rows_sum_to_zero() {
        let kernel = MutationKernel::new(
            0.7,
            1.3,
            ProbVector::new(vec![0.2, 0.3, 0.5]).unwrap(),
            StochasticMatrix::new(vec![
                vec![0.0, 0.5, 0.5],
                vec![1.0, 0.0, 0.0],
                vec![0.25, 0.25, 0.5],
            ])
            .unwrap(),
        )
        .unwrap();
        for row in kernel.lineage_generator() {
            assert!(row.iter().sum::<f64>().abs() < 1e-14);
        }
    }

    #[test]
    fn product_moment_constant() {
        let f = DualFunction::constant(3, 2.5);
        let m = ProbVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(product_moment(&m, &f).unwrap(), 2.5);
    }

    #[test]
    fn product_moment_indicator() {
        let p = 0.37;
        let m = ProbVector::new(vec![p, 1.0 - p]).unwrap();
        let f = DualFunction::indicator(2, 0).unwrap();
        assert!((product_moment(&m, &f).unwrap() - p).abs() < 1e-15);
    }

    #[test]
    fn product_moment_pair_identity() {
        let m = ProbVector::uniform(2);
        assert!((product_moment(&m, &same_allele(2)).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn product_moment_dimension_mismatch() {
        let m = ProbVector::uniform(3);
        let f = DualFunction::indicator(2, 0).unwrap();
        assert!(matches!(product_moment(&m, &f), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn without_replacement_constant() {
        let m = EmpiricalMeasure::new(vec![3, 4]).unwrap();
        assert_eq!(moment_without_replacement(&m, &DualFunction::constant(2, -1.5)).unwrap(), -1.5);
    }

    #[test]
    fn without_replacement_distinct_pair_is_one() {
        let m = EmpiricalMeasure::new(vec![1, 1]).unwrap();
        assert_eq!(moment_without_replacement(&m, &distinct_alleles(2)).unwrap(), 1.0);
    }

    #[test]
    fn without_replacement_brute_force_value() {
        // individuals {0, 0, 1}: ordered distinct pairs both of allele 0 are 2 of 6
        let m = EmpiricalMeasure::new(vec![2, 1]).unwrap();
        let f = DualFunction::from_fn(2, 2, |x| if x == [0, 0] { 1.0 } else { 0.0 });
        assert!((moment_without_replacement(&m, &f).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn without_replacement_degree_too_large() {
        let m = EmpiricalMeasure::new(vec![1, 1]).unwrap();
        let f = DualFunction::from_fn(2, 3, |_| 1.0);
        assert!(matches!(
            moment_without_replacement(&m, &f),
            Err(Error::DegreeExceedsPopulation { degree: 3, population: 2 })
        ));
    }

    #[test]
    fn extension_gap_low_degree_vanishes() {
        let m = EmpiricalMeasure::new(vec![3, 5, 2]).unwrap();
        assert_eq!(extension_gap(&m, &DualFunction::constant(3, 1.0)).unwrap(), 0.0);
        let f = DualFunction::new(3, 1, vec![0.3, -1.0, 2.0]).unwrap();
        assert!(extension_gap(&m, &f).unwrap() < 1e-15);
    }

    #[test]
    fn extension_gap_distinct_pair() {
        let m = EmpiricalMeasure::new(vec![1, 1]).unwrap();
        assert!((extension_gap(&m, &distinct_alleles(2)).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn extension_gap_decays_like_one_over_n() {
        // f = 1{x1 = x2}: gap = (1 - sum p^2) / (N - 1) exactly
        let f = same_allele(2);
        let p = ProbVector::new(vec![0.3, 0.7]).unwrap();
        let mut gaps = Vec::new();
        for n in [10usize, 100, 1000] {
            let m = EmpiricalMeasure::from_frequencies(&p, n).unwrap();
            let gap = extension_gap(&m, &f).unwrap();
            let exact = (1.0 - 0.09 - 0.49) / (n as f64 - 1.0);
            assert!((gap - exact).abs() < 1e-14);
            gaps.push(gap);
        }
        for w in gaps.windows(2) {
            let ratio = w[0] / w[1];
            assert!((9.0..11.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn from_frequencies_requires_integral_counts() {
        let p = ProbVector::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(EmpiricalMeasure::from_frequencies(&p, 10).unwrap().counts(), &[3, 7]);
        assert!(EmpiricalMeasure::from_frequencies(&p, 5).is_err());
    }
}
