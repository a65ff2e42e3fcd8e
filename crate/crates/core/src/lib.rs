//! Distributed pickup-and-delivery vehicle routing.
//!
//! Layers, bottom to top:
//! - [`instance`], [`graph`]: problem data and task graphs
//! - [`model`], [`builder`]: sparse MILP assembly with big-M linearization
//! - [`lu`], [`simplex`], [`bnb`]: LP/MILP solving stack
//! - [`route`], [`evaluate`], [`oracle`]: solution extraction and checking
//! - [`decomp`], [`network`]: primal-decomposition agents on a simulated
//!   synchronous peer-to-peer network
//! - [`mission`], [`harness`]: execution playback and Monte Carlo runs

pub mod bnb;
pub mod builder;
pub mod decomp;
pub mod error;
pub mod evaluate;
pub mod exact;
pub mod graph;
pub mod harness;
pub mod instance;
pub mod lu;
pub mod mission;
pub mod model;
pub mod network;
pub mod oracle;
pub mod route;
pub mod simplex;

pub use error::{Error, Result};
