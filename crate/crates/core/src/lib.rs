//! Operational quantum probability as a partially exchangeable Bayesian
//! model.
//!
//! - [`hilbert`]: density matrices, POVMs, Kraus maps and the trace formula.
//! - [`gpt`]: real-vector embedding of states and effects, classical and
//!   custom systems, perfect distinguishability.
//! - [`knowledge`]: mixtures and dithers of preparations and measurements.
//! - [`prior`]: seeded particle ensembles over state spaces and products of
//!   simplices.
//! - [`inference`]: likelihoods, predictive probabilities and posterior
//!   reweighting, with closed-form Dirichlet-multinomial checks.
//! - [`scenario`]: JSON scenario files and the report pipeline behind the
//!   `exchange-q` binary.

pub mod error;
pub mod gpt;
pub mod hilbert;
pub mod inference;
pub mod knowledge;
pub mod matrix;
pub mod numeric;
pub mod prior;
pub mod scenario;
pub mod tolerance;

pub use error::{Error, Result};
pub use matrix::ComplexMatrix;
