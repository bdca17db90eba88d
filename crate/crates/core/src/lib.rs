//! Skill-frontier simulation and staggered difference-in-differences.
//!
//! The crate has two halves that meet at the developer-month panel:
//!
//! * [`learning`] and [`sim`] generate panels from an agent-based Bayesian
//!   learning model in which AI access adds free signals about every language;
//!   [`props`] runs paired AI-on/AI-off experiments on the model itself.
//! * [`panel`], [`did`] and [`aggregate`] turn commit records into outcomes and
//!   estimate group-time average treatment effects with a doubly robust
//!   estimator, event-study aggregation and multiplier-bootstrap inference.
//!
//! [`pipeline`], [`io`] and [`report`] glue the pieces together for the
//! `frontier` command-line tool.

pub mod aggregate;
pub mod config;
pub mod did;
pub mod error;
pub mod io;
pub mod learning;
pub mod panel;
pub mod pipeline;
pub mod props;
pub mod report;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};

/// Version string stamped into every emitted artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(doctest)]
mod book;
