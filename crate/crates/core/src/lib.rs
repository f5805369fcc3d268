//! Moran and Fleming–Viot population dynamics in random, time-varying
//! fitness environments.
//!
//! * [`typespace`]: alleles, measures, mutation kernels, moment functionals.
//! * [`function`]: dense tensors used as test functions and dual states.
//! * [`environment`]: piecewise-constant fitness paths and their laws.
//! * [`moran`]: forward particle simulation.
//! * [`dual`]: the function-valued dual process.
//! * [`generators`]: exact generator evaluation on polynomials.
//! * [`estimate`]: seeded streams and Monte Carlo summaries.

pub mod dual;
pub mod environment;
pub mod error;
pub mod estimate;
pub mod function;
pub mod generators;
pub mod moran;
pub mod numeric;
pub mod typespace;

pub use error::{Error, Result};
pub use estimate::{Estimate, SeedKey};
pub use function::DualFunction;
