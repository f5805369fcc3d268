//! Dense test functions on allele tuples.
//!
//! A degree-`n` function over `K` alleles is a row-major tensor of `K^n`
//! values; variable 0 is the most significant index. Variables are
//! 0-based throughout the crate.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numeric::CompensatedSum;
use crate::typespace::{FitnessVector, ProbVector, StochasticMatrix};

/// Relative tolerance under which two slices count as equal when
/// detecting variables the function does not depend on.
pub const CANONICAL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualFunction {
    alleles: usize,
    degree: usize,
    values: Vec<f64>,
}

fn checked_len(alleles: usize, degree: usize) -> Result<usize> {
    u32::try_from(degree)
        .ok()
        .and_then(|d| alleles.checked_pow(d))
        .ok_or_else(|| invalid(format!("tensor of degree {degree} over {alleles} alleles is too large")))
}

impl DualFunction {
    pub fn new(alleles: usize, degree: usize, values: Vec<f64>) -> Result<Self> {
        if alleles < 2 {
            return Err(invalid(format!("need at least 2 alleles, got {alleles}")));
        }
        let len = checked_len(alleles, degree)?;
        if values.len() != len {
            return Err(Error::DimensionMismatch { expected: len, found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("function has a non-finite value"));
        }
        Ok(Self { alleles, degree, values })
    }

    pub fn constant(alleles: usize, value: f64) -> Self {
        Self { alleles, degree: 0, values: vec![value] }
    }

    /// `x ↦ 1{x = allele}` as a degree-1 function.
    pub fn indicator(alleles: usize, allele: usize) -> Result<Self> {
        if allele >= alleles {
            return Err(Error::IndexOutOfRange { index: allele, degree: alleles });
        }
        let mut values = vec![0.0; alleles];
        values[allele] = 1.0;
        Self::new(alleles, 1, values)
    }

    /// Tabulates `g` on every point of `{0..K}^degree`.
    pub fn from_fn(alleles: usize, degree: usize, mut g: impl FnMut(&[usize]) -> f64) -> Self {
        let len = alleles.pow(degree as u32);
        let mut point = vec![0usize; degree];
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push(g(&point));
            for slot in point.iter_mut().rev() {
                *slot += 1;
                if *slot < alleles {
                    break;
                }
                *slot = 0;
            }
        }
        Self { alleles, degree, values }
    }

    pub fn alleles(&self) -> usize {
        self.alleles
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_constant(&self) -> bool {
        self.degree == 0
    }

    pub fn constant_value(&self) -> Option<f64> {
        self.is_constant().then(|| self.values[0])
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Value at the point `x` (length must equal the degree).
    pub fn value_at(&self, x: &[usize]) -> f64 {
        assert_eq!(x.len(), self.degree, "point has wrong arity");
        let idx = x.iter().fold(0usize, |acc, &a| {
            debug_assert!(a < self.alleles);
            acc * self.alleles + a
        });
        self.values[idx]
    }

    fn check_var(&self, var: usize) -> Result<()> {
        if var >= self.degree {
            return Err(Error::IndexOutOfRange { index: var, degree: self.degree });
        }
        Ok(())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.alleles {
            return Err(Error::DimensionMismatch { expected: self.alleles, found: len });
        }
        Ok(())
    }

    // (outer, inner) block sizes around variable `var` for a tensor of `degree`.
    fn blocks(&self, degree: usize, var: usize) -> (usize, usize) {
        (self.alleles.pow(var as u32), self.alleles.pow((degree - 1 - var) as u32))
    }

    fn with_values(&self, degree: usize, values: Vec<f64>) -> Self {
        Self { alleles: self.alleles, degree, values }
    }

    /// `f ∘ σ`: the degree-`n` function with variable `to` overwritten by
    /// variable `from`.
    pub fn tie(&self, from: usize, to: usize) -> Result<Self> {
        self.check_var(from)?;
        self.check_var(to)?;
        if from == to {
            return Ok(self.clone());
        }
        let k = self.alleles;
        let stride = |v: usize| k.pow((self.degree - 1 - v) as u32);
        let (s_from, s_to) = (stride(from), stride(to));
        let values = (0..self.values.len())
            .map(|idx| {
                let x_from = (idx / s_from) % k;
                let x_to = (idx / s_to) % k;
                self.values[idx - x_to * s_to + x_from * s_to]
            })
            .collect();
        Ok(self.with_values(self.degree, values))
    }

    /// Restriction to `x_var = allele`, dropping that variable.
    pub fn restrict(&self, var: usize, allele: usize) -> Result<Self> {
        self.check_var(var)?;
        if allele >= self.alleles {
            return Err(Error::IndexOutOfRange { index: allele, degree: self.alleles });
        }
        let (outer, inner) = self.blocks(self.degree, var);
        let k = self.alleles;
        let mut values = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let start = (o * k + allele) * inner;
            values.extend_from_slice(&self.values[start..start + inner]);
        }
        Ok(self.with_values(self.degree - 1, values))
    }

    /// Inserts a variable the function ignores at position `pos` (`0..=n`).
    pub fn insert_dummy(&self, pos: usize) -> Result<Self> {
        if pos > self.degree {
            return Err(Error::IndexOutOfRange { index: pos, degree: self.degree + 1 });
        }
        let k = self.alleles;
        let degree = self.degree + 1;
        let (outer, inner) = self.blocks(degree, pos);
        let mut values = Vec::with_capacity(self.values.len() * k);
        for o in 0..outer {
            let src = &self.values[o * inner..(o + 1) * inner];
            for _ in 0..k {
                values.extend_from_slice(src);
            }
        }
        Ok(self.with_values(degree, values))
    }

    /// Integrates variable `var` against `weights`, dropping it.
    pub fn contract(&self, var: usize, weights: &ProbVector) -> Result<Self> {
        self.check_var(var)?;
        self.check_len(weights.len())?;
        let k = self.alleles;
        let (outer, inner) = self.blocks(self.degree, var);
        let mut values = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for r in 0..inner {
                let mut acc = CompensatedSum::new();
                for u in 0..k {
                    acc.add(weights[u] * self.values[(o * k + u) * inner + r]);
                }
                values.push(acc.value());
            }
        }
        Ok(self.with_values(self.degree - 1, values))
    }

    /// `g(.., x_var, ..) = Σ_u kernel[x_var][u] f(.., u, ..)`.
    pub fn apply_kernel(&self, var: usize, kernel: &StochasticMatrix) -> Result<Self> {
        self.check_var(var)?;
        self.check_len(kernel.size())?;
        let k = self.alleles;
        let (outer, inner) = self.blocks(self.degree, var);
        let mut values = vec![0.0; self.values.len()];
        for o in 0..outer {
            for a in 0..k {
                let row = kernel.row(a);
                for r in 0..inner {
                    let mut acc = CompensatedSum::new();
                    for (u, q) in row.iter().enumerate() {
                        acc.add(q * self.values[(o * k + u) * inner + r]);
                    }
                    values[(o * k + a) * inner + r] = acc.value();
                }
            }
        }
        Ok(self.with_values(self.degree, values))
    }

    /// Pointwise product with `w[x_var]`.
    pub fn scale_by_fitness(&self, var: usize, w: &FitnessVector) -> Result<Self> {
        self.check_var(var)?;
        self.check_len(w.len())?;
        let k = self.alleles;
        let (_, inner) = self.blocks(self.degree, var);
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(idx, v)| v * w[(idx / inner) % k])
            .collect();
        Ok(self.with_values(self.degree, values))
    }

    /// `a·self + b·other`; both operands must share alleles and degree.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if other.alleles != self.alleles {
            return Err(Error::DimensionMismatch { expected: self.alleles, found: other.alleles });
        }
        if other.degree != self.degree {
            return Err(Error::DimensionMismatch { expected: self.degree, found: other.degree });
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(self.with_values(self.degree, values))
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.with_values(self.degree, self.values.iter().map(|v| c * v).collect())
    }

    /// True when every slice along `var` agrees with slice 0 within `tol`.
    pub fn ignores(&self, var: usize, tol: f64) -> bool {
        if var >= self.degree {
            return false;
        }
        let k = self.alleles;
        let (outer, inner) = self.blocks(self.degree, var);
        (0..outer).all(|o| {
            let base = &self.values[o * k * inner..(o * k + 1) * inner];
            (1..k).all(|a| {
                let slice = &self.values[(o * k + a) * inner..(o * k + a + 1) * inner];
                slice.iter().zip(base).all(|(x, y)| (x - y).abs() <= tol)
            })
        })
    }

    /// Removes every variable the function does not depend on (within
    /// [`CANONICAL_TOLERANCE`] relative to the sup norm), so the degree is
    /// the number of variables the function genuinely depends on.
    pub fn canonicalize(self) -> Self {
        let tol = CANONICAL_TOLERANCE * self.sup_norm();
        let mut f = self;
        let mut var = 0;
        while var < f.degree {
            if f.ignores(var, tol) {
                f = f.restrict(var, 0).expect("variable index checked");
            } else {
                var += 1;
            }
        }
        f
    }
}
