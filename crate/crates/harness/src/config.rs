//! Experiment configuration, read from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use fvre_core::environment::{EnvironmentPath, EnvironmentProcess, MarkovEnvironment};
use fvre_core::moran::InitialCondition;
use fvre_core::typespace::{
    EmpiricalMeasure, FitnessVector, ModelParams, MutationKernel, ProbVector, StochasticMatrix,
};
use fvre_core::DualFunction;
use serde::{Deserialize, Serialize};

use crate::error::{config_error, HarnessError};

fn default_replicates() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; when present it must match the subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub model: ModelSection,
    pub environment: EnvironmentSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<FunctionSection>,
    #[serde(default)]
    pub duality: DualitySection,
    #[serde(default)]
    pub generator: GeneratorSection,
    #[serde(default)]
    pub degree_chain: DegreeChainSection,
    #[serde(default)]
    pub ergodic: ErgodicSection,
    #[serde(default)]
    pub simulation: SimulationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub gamma: f64,
    pub alpha: f64,
    pub population: usize,
    pub beta_prime: f64,
    #[serde(default)]
    pub beta_double_prime: f64,
    pub q_prime: Vec<f64>,
    /// Defaults to the identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_double_prime: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvironmentSection {
    Constant {
        fitness: Vec<f64>,
    },
    Schedule {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
        horizon: f64,
    },
    /// A schedule stored as a delimited table.
    ScheduleFile {
        path: PathBuf,
    },
    Markov {
        states: Vec<Vec<f64>>,
        rates: Vec<Vec<f64>>,
        /// Defaults to the stationary distribution.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSection {
    Counts { counts: Vec<u64> },
    Frequencies { frequencies: Vec<f64> },
    Alleles { alleles: Vec<usize> },
    Iid { probabilities: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionSection {
    Indicator { allele: usize },
    Constant { value: f64 },
    Tensor { degree: usize, values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualityMode {
    Quenched,
    Annealed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentChoice {
    WithReplacement,
    WithoutReplacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualitySection {
    pub time: f64,
    pub mode: DualityMode,
    pub moment: MomentChoice,
    /// Allowance `c / N` for the finite population standing in for the limit.
    pub bias_coefficient: f64,
    pub degree_cap: usize,
    /// Dual replicates; defaults to the top-level count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dual_replicates: Option<usize>,
}

impl Default for DualitySection {
    fn default() -> Self {
        Self {
            time: 1.0,
            mode: DualityMode::Quenched,
            moment: MomentChoice::WithReplacement,
            bias_coefficient: 0.5,
            degree_cap: fvre_core::dual::DEFAULT_DEGREE_CAP,
            dual_replicates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub instances: usize,
    pub max_alleles: usize,
    pub max_degree: usize,
    pub gap_tolerance: f64,
    pub populations: Vec<usize>,
    /// Measure used in the population sweep; every `N p` must be integral.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<f64>>,
    pub slope_min: f64,
    pub slope_max: f64,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        Self {
            instances: 200,
            max_alleles: 4,
            max_degree: 4,
            gap_tolerance: 1e-10,
            populations: vec![10, 100, 1000, 10_000],
            frequencies: None,
            slope_min: -1.3,
            slope_max: -0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegreeChainSection {
    /// `(β', α)` pairs; empty means the model's own values.
    pub cases: Vec<[f64; 2]>,
    pub degree_cap: usize,
    pub histogram_bins: usize,
}

impl Default for DegreeChainSection {
    fn default() -> Self {
        Self { cases: Vec::new(), degree_cap: fvre_core::dual::DEFAULT_DEGREE_CAP, histogram_bins: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErgodicSection {
    /// Forward time standing in for `t → ∞`.
    pub time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forward_replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dual_replicates: Option<usize>,
    /// Allowance `c / N` on the forward/backward comparison.
    pub bias_coefficient: f64,
    /// Absolute slack added to every band, printed in the report.
    pub numerical_floor: f64,
    pub degree_cap: usize,
    /// Earlier forward times at which `E[<μ_t, f> 1{e_t = j}]` is also
    /// recorded; the last one is compared with `time`.
    pub stabilization_times: Vec<f64>,
}

impl Default for ErgodicSection {
    fn default() -> Self {
        Self {
            time: 30.0,
            forward_replicates: None,
            dual_replicates: None,
            bias_coefficient: 1.0,
            numerical_floor: 1e-12,
            degree_cap: fvre_core::dual::DEFAULT_DEGREE_CAP,
            stabilization_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub time: f64,
    /// Number of equally spaced sample times, both ends included.
    pub samples: usize,
    pub degree_cap: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self { time: 1.0, samples: 11, degree_cap: fvre_core::dual::DEFAULT_DEGREE_CAP }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn alleles(&self) -> usize {
        self.model.q_prime.len()
    }

    pub fn kernel(&self, beta_prime: f64) -> Result<MutationKernel, HarnessError> {
        let k = self.alleles();
        let q_prime = ProbVector::new(self.model.q_prime.clone()).map_err(config_error("model.q_prime"))?;
        let q_double_prime = match &self.model.q_double_prime {
            Some(rows) => StochasticMatrix::new(rows.clone()).map_err(config_error("model.q_double_prime"))?,
            None => StochasticMatrix::identity(k),
        };
        MutationKernel::new(beta_prime, self.model.beta_double_prime, q_prime, q_double_prime)
            .map_err(config_error("model"))
    }

    pub fn params(&self) -> Result<ModelParams, HarnessError> {
        self.params_with(self.model.beta_prime, self.model.alpha)
    }

    pub fn params_with(&self, beta_prime: f64, alpha: f64) -> Result<ModelParams, HarnessError> {
        ModelParams::new(self.model.gamma, alpha, self.model.population, self.kernel(beta_prime)?)
            .map_err(config_error("model"))
    }

    pub fn environment(&self) -> Result<EnvironmentProcess, HarnessError> {
        let fitness = |v: &Vec<f64>| FitnessVector::new(v.clone()).map_err(config_error("environment"));
        let env = match &self.environment {
            EnvironmentSection::Constant { fitness: w } => EnvironmentProcess::Constant(fitness(w)?),
            EnvironmentSection::Schedule { times, values, horizon } => {
                let values = values.iter().map(fitness).collect::<Result<Vec<_>, _>>()?;
                EnvironmentProcess::Schedule(
                    EnvironmentPath::new(times.clone(), values, *horizon).map_err(config_error("environment"))?,
                )
            }
            EnvironmentSection::ScheduleFile { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
                EnvironmentProcess::Schedule(EnvironmentPath::from_table(&text).map_err(config_error("environment"))?)
            }
            EnvironmentSection::Markov { states, rates, initial } => {
                let states = states.iter().map(fitness).collect::<Result<Vec<_>, _>>()?;
                let chain = match initial {
                    Some(p) => MarkovEnvironment::new(
                        states,
                        rates.clone(),
                        ProbVector::new(p.clone()).map_err(config_error("environment.initial"))?,
                    ),
                    None => MarkovEnvironment::stationary(states, rates.clone()),
                }
                .map_err(config_error("environment"))?;
                EnvironmentProcess::MarkovJump(chain)
            }
        };
        if env.alleles() != self.alleles() {
            return Err(HarnessError::Config(format!(
                "environment has {} alleles, model has {}",
                env.alleles(),
                self.alleles()
            )));
        }
        Ok(env)
    }

    /// Fitness at time zero (the first state of a Markov chain).
    pub fn fitness_at_zero(&self) -> Result<FitnessVector, HarnessError> {
        Ok(match self.environment()? {
            EnvironmentProcess::Constant(w) => w,
            EnvironmentProcess::Schedule(p) => p.values()[0].clone(),
            EnvironmentProcess::MarkovJump(m) => m.states()[0].clone(),
        })
    }

    /// Initial condition; defaults to iid draws from the uniform law.
    pub fn initial_condition(&self) -> Result<InitialCondition, HarnessError> {
        let k = self.alleles();
        let n = self.model.population;
        let init = match &self.initial {
            None => InitialCondition::Iid(ProbVector::uniform(k)),
            Some(InitialSection::Counts { counts }) => {
                InitialCondition::Counts(EmpiricalMeasure::new(counts.clone()).map_err(config_error("initial"))?)
            }
            Some(InitialSection::Frequencies { frequencies }) => {
                let p = ProbVector::new(frequencies.clone()).map_err(config_error("initial"))?;
                InitialCondition::Counts(EmpiricalMeasure::from_frequencies(&p, n).map_err(config_error("initial"))?)
            }
            Some(InitialSection::Alleles { alleles }) => InitialCondition::Alleles(alleles.clone()),
            Some(InitialSection::Iid { probabilities }) => {
                InitialCondition::Iid(ProbVector::new(probabilities.clone()).map_err(config_error("initial"))?)
            }
        };
        let (len, population) = match &init {
            InitialCondition::Counts(m) => (m.alleles(), m.population() as usize),
            InitialCondition::Alleles(a) => (k, a.len()),
            InitialCondition::Iid(p) => (p.len(), n),
        };
        if len != k || population != n {
            return Err(HarnessError::Config(format!(
                "initial condition describes {population} individuals over {len} alleles, model has {n} over {k}"
            )));
        }
        if let InitialCondition::Alleles(a) = &init {
            if a.iter().any(|&x| x >= k) {
                return Err(HarnessError::Config("initial allele out of range".into()));
            }
        }
        Ok(init)
    }

    /// `m_0` as seen by the dual: the deterministic initial measure, or the
    /// sampling law of an iid start.
    pub fn initial_measure(&self) -> Result<ProbVector, HarnessError> {
        Ok(match self.initial_condition()? {
            InitialCondition::Iid(p) => p,
            other => other.deterministic_measure(self.alleles()).expect("deterministic start"),
        })
    }

    /// Test function; defaults to the indicator of allele 0.
    pub fn function(&self) -> Result<DualFunction, HarnessError> {
        let k = self.alleles();
        match &self.function {
            None => Ok(DualFunction::indicator(k, 0).expect("k >= 2")),
            Some(FunctionSection::Indicator { allele }) => {
                DualFunction::indicator(k, *allele).map_err(config_error("function"))
            }
            Some(FunctionSection::Constant { value }) => Ok(DualFunction::constant(k, *value)),
            Some(FunctionSection::Tensor { degree, values }) => {
                DualFunction::new(k, *degree, values.clone()).map_err(config_error("function"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
[model]
gamma = 1.0
alpha = 1.0
population = 20
beta_prime = 1.0
q_prime = [0.5, 0.5]
[environment]
kind = "constant"
fitness = [1.0, 0.0]
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.replicates, 1000);
        assert_eq!(cfg.duality, DualitySection::default());
        assert!(cfg.params().is_ok());
        assert_eq!(cfg.function().unwrap(), DualFunction::indicator(2, 0).unwrap());
        assert!(matches!(cfg.initial_condition().unwrap(), InitialCondition::Iid(_)));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[duality]\ntime = 1.0\nhorizon = 3.0\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
        let text = MINIMAL.replace("fitness = [1.0, 0.0]", "fitness = [1.0, 0.0]\nrate = 2.0");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("seed = 3", "")).is_err());
    }

    #[test]
    fn markov_environment_defaults_to_stationary_start() {
        let text = MINIMAL.replace(
            "kind = \"constant\"\nfitness = [1.0, 0.0]",
            "kind = \"markov\"\nstates = [[1.0, 0.0], [0.0, 1.0]]\nrates = [[-1.0, 1.0], [3.0, -3.0]]",
        );
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        match cfg.environment().unwrap() {
            EnvironmentProcess::MarkovJump(m) => assert!((m.initial()[0] - 0.75).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimension_checks() {
        let cfg = ExperimentConfig::from_toml(&MINIMAL.replace("fitness = [1.0, 0.0]", "fitness = [1.0, 0.0, 0.5]"))
            .unwrap();
        assert!(cfg.environment().is_err());
        let text = format!("{MINIMAL}\n[initial]\nkind = \"counts\"\ncounts = [5, 5]\n");
        assert!(ExperimentConfig::from_toml(&text).unwrap().initial_condition().is_err());
        let text = format!("{MINIMAL}\n[initial]\nkind = \"frequencies\"\nfrequencies = [0.25, 0.75]\n");
        assert!(ExperimentConfig::from_toml(&text).unwrap().initial_condition().is_ok());
    }
}
