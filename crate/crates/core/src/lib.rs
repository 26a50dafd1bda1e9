//! Locally differentially private collection of key-value data.
//!
//! Every user holds a set of `⟨key, value⟩` pairs with values in `[-1, 1]`.
//! A user pads the set to a fixed length with dummy keys, samples a single
//! pair, discretizes its value to `±1` and perturbs key and value together
//! so that the value perturbation depends on the key perturbation. The
//! server aggregates support counts and recovers per-key frequency and
//! value-mean estimates.
//!
//! Module map:
//!
//! - [`model`]: records, datasets and ground-truth statistics
//! - [`datagen`]: synthetic generators and rating-file ingestion
//! - [`budget`]: budget composition, allocation strategies and perturbation probabilities
//! - [`sampling`]: padding-and-sampling with value discretization
//! - [`mechanisms`]: the unary-encoding and generalized randomized response
//!   mechanisms, the single-iteration PrivKV baseline and exact output
//!   distributions
//! - [`estimation`]: aggregation, baseline and corrected estimators
//! - [`theory`]: closed-form error predictors, allocation objective scan and
//!   the mechanism-choice rule
//! - [`audit`]: exhaustive verification of the privacy-ratio bounds
//! - [`experiment`]: end-to-end runs and metrics

pub mod audit;
pub mod budget;
pub mod datagen;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod mechanisms;
pub mod model;
pub mod rng;
pub mod sampling;
pub mod theory;

pub use budget::{BudgetSpec, Mechanism, PerturbProbs, Strategy};
pub use error::{Error, Result};
pub use model::{Dataset, KvPair, TrueStats, UserRecord};

/// Absolute tolerance used when comparing results of budget algebra.
pub const BUDGET_TOL: f64 = 1e-12;
