//! Demand modelling, dynamic dial-a-ride dispatch and bus comparison for
//! night-time ridepooling.

pub mod bus_baseline;
pub mod cli;
pub mod covariates;
pub mod demand_sim;
pub mod error;
pub mod event_graph;
pub mod fleet;
pub mod metrics;
pub mod network;
pub mod regression;
pub mod request_model;
pub mod rolling_horizon;
pub mod schedule;
pub mod subproblem_solver;
pub mod synthetic;
pub mod validation;

pub use error::{Error, Result};
