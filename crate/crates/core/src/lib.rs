//! Cache-aided network-coded multicast of sparsely updated frames.
//!
//! The pipeline: describe a [`network::Network`], optimize link rates and
//! cache probabilities with [`optimizer::solve`], round the cache decisions,
//! build a random linear network code ([`lnc`]) plus function-update codecs
//! for caching nodes ([`fnupd`]), and replay `M` rounds with
//! [`simulator::run`].

// The numeric kernels index several parallel arrays with one loop variable.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod gf;
pub mod fnupd;
pub mod lnc;
pub mod network;
pub mod optimizer;
pub mod par;
pub mod simulator;

pub use error::{Error, Result};
pub use gf::{FMatrix, Field};
pub use network::{load_topology, min_cut, CostFamily, Instance, Network, Scenario, Units};
pub use par::Parallelism;
