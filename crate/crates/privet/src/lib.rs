//! Extreme-value scoring of nearest-neighbor distances for auditing
//! synthetic data: which synthetic samples sit anomalously close to the
//! training set, compared with a held-out test set.
//!
//! The flow is: load matrices ([`data`]), compute exact 1-NN distances
//! ([`knn`]), fit a Weibull or Gumbel tail law to the train-to-train
//! distances ([`evt`]), and turn each synthetic sample's rank and distance
//! into order-statistic probabilities and scores ([`orderstats`]).
//! [`pipeline::privet`] runs all of it and produces a [`pipeline::PrivacyReport`].

pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod evt;
pub mod experiments;
pub mod gof;
pub mod knn;
mod optim;
pub mod orderstats;
pub mod pipeline;
pub mod plot;
pub mod rng;

pub use error::{PrivetError, Result};
