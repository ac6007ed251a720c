//! Simulation laboratory for the MNL-bandit dynamic assortment problem.
//!
//! The crate is organized bottom-up:
//!
//! * [`mnl`] holds the ground-truth multinomial logit model: instances,
//!   choice probabilities, expected revenue and customer sampling.
//! * [`family`] enumerates the offerable assortments and solves the
//!   optimistic revenue maximization over them.
//! * [`epoch`] runs the offer-until-no-purchase epoch mechanic.
//! * [`policy`] is the epoch-based UCB policy with forced complement
//!   exploration and inverse-propensity-weighted estimates, including the
//!   size-capped and relaxed-attraction variants.
//! * [`baselines`] has the comparison policies (plain epoch UCB and an
//!   EXP3-style learner over assortments).
//! * [`harness`] seeds and runs trials, computes regret and MSE series and
//!   writes CSV/JSON outputs.
//! * [`rates`] fits log-log rates and checks the regret/estimation tradeoff.

pub mod baselines;
pub mod epoch;
pub mod error;
pub mod family;
pub mod harness;
pub mod mnl;
pub mod policy;
pub mod rates;
pub mod stats;

pub use error::{Error, Result};
pub use family::FeasibleFamily;
pub use mnl::{Assortment, ChoiceOutcome, MnlInstance};
pub use policy::{MnlExperimentUcb, PolicyConfig, PolicyState, Variant};
