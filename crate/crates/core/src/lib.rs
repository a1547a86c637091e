//! Energy management for a ship power system: a battery, a generator and a
//! pulsed load on a DC bus, coordinated by a model predictive controller
//! that trades generator smoothness against battery wear.

// `!(x > 0.0)` style checks are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod degradation;
pub mod error;
pub mod figures;
pub mod harness;
pub mod load;
pub mod mpc;
pub mod params;
pub mod plant;
pub mod qp;

pub use nalgebra;

pub use config::Config;
pub use error::{Error, Result};
pub use harness::{compare, run, ComparisonReport, RunSpec, SimLog};
pub use load::LoadProfile;
pub use mpc::{MpcConfig, MpcController, Scenario};
pub use params::SystemParams;
pub use plant::Fidelity;
