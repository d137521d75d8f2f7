//! Exit, overshoot and killed-occupation laws for a Markov-modulated
//! compound Poisson process whose upward jumps are exponential, between two
//! barriers; plus the bounded-reserve risk and dividend transforms and a
//! Monte Carlo cross-check.

pub mod error;
pub mod linalg;
pub mod model;
pub mod presets;
pub mod transforms;
pub mod factorization;
pub mod two_boundary;
pub mod risk;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{Model, ModelSpec};
