// SPDX-License-Identifier: Apache-2.0

//! Static bounds on the shared-cache misses a task suffers from tasks running
//! in parallel on other cores.
//!
//! The pipeline runs per shared level and cache set: ages and access
//! classification ([`intra`]), memory references ([`refs`]), contention
//! regions ([`regions`]), miss counting against remote access queues
//! ([`contention`]) and a dynamic program over the partial order of both paths
//! ([`dp`]). [`system`] ties the stages together and composes WCET figures.

pub mod baselines;
pub mod cli;
pub mod contention;
pub mod dp;
pub mod error;
pub mod gen;
pub mod intra;
pub mod model;
pub mod oracle;
pub mod refs;
pub mod regions;
pub mod system;

pub use error::{Error, Result};
