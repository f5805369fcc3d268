#![allow(dead_code)]

use fvre_core::estimate::SimRng;
use fvre_core::typespace::{FitnessVector, ProbVector, StochasticMatrix};
use fvre_core::DualFunction;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Every point of `{0..k}^n`, first coordinate most significant.
pub fn lattice(k: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn random_tensor(k: usize, n: usize, rng: &mut SimRng) -> DualFunction {
    let values = (0..k.pow(n as u32)).map(|_| rng.random_range(-1.0..1.0)).collect();
    DualFunction::new(k, n, values).unwrap()
}

pub fn random_prob(k: usize, rng: &mut SimRng) -> ProbVector {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let head: f64 = p[..k - 1].iter().sum();
    p[k - 1] = 1.0 - head;
    ProbVector::new(p).unwrap()
}

pub fn random_stochastic(k: usize, rng: &mut SimRng) -> StochasticMatrix {
    StochasticMatrix::new((0..k).map(|_| random_prob(k, rng).as_slice().to_vec()).collect()).unwrap()
}

pub fn random_fitness(k: usize, rng: &mut SimRng) -> FitnessVector {
    FitnessVector::new((0..k).map(|_| rng.random::<f64>()).collect()).unwrap()
}

/// `<m^{⊗n}, g>` by summing over every lattice point.
pub fn brute_product_moment(m: &[f64], n: usize, g: impl Fn(&[usize]) -> f64) -> f64 {
    lattice(m.len(), n)
        .iter()
        .map(|x| x.iter().map(|&a| m[a]).product::<f64>() * g(x))
        .sum()
}
