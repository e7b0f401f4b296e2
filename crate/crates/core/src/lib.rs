//! Bayesian estimation of time-varying customer arrival rates and choice
//! behavior from sales transactions that are censored by stockouts.
//!
//! Arrivals follow a nonhomogeneous Poisson process per store. Each arrival
//! belongs to a latent segment and picks among the items currently in stock
//! according to a choice model. Purchases are the thinned arrival process,
//! so stockouts both hide demand and redirect it. The crate provides the
//! likelihood of observed purchase times, a stochastic-gradient Riemannian
//! Langevin sampler over the posterior, a simulator, and posterior predictive
//! tools for sales and lost-sales estimates.

pub mod baseline;
pub mod choice;
pub mod domain;
pub mod error;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod predictive;
pub mod rate;
pub mod sampler;
pub mod simulator;

pub use choice::{ChoiceFamily, ChoiceProbs, Segment};
pub use domain::{Dataset, StockTrajectory, StockVector, StoreData, TimePeriod};
pub use error::{Error, Result};
pub use model::{ChoiceSpec, ModelParams, ModelSpec};
pub use rate::{PeakTemplate, RateKind, RateModel};
