//! Capacity simulation for antenna arrays on high-altitude platform stations.
//!
//! The crate is organised bottom-up: [`geometry`] builds the arrays and user
//! fields, [`channel`] and [`pattern`] turn them into link budgets and gains,
//! [`selection`], [`rate`] and [`power`] implement the per-scenario
//! optimisation, and [`scenario`] strings everything into experiments whose
//! results [`output`] writes as CSV.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod output;
pub mod pattern;
pub mod power;
pub mod rate;
pub mod scenario;
pub mod selection;

pub use channel::{ChannelParams, LinkBudget, PlosFormula};
pub use config::{parse_config, parse_config_file, ScenarioConfig};
pub use error::{Error, ErrorKind, Result};
pub use geometry::{build_array, Architecture, ArrayGeometry, ArrayParams, UserField};
pub use pattern::{gain_matrix, GainMatrix, GainPattern};
pub use power::{max_min_power, BisectionConfig};
pub use rate::{sinr_closed_form, GainConvention, PowerAllocation, RateReport};
pub use scenario::{run_scenario, ScenarioResult};
pub use selection::{select_brute_force, select_greedy, SelectionMatrix};
