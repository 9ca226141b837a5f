//! Nested quantum annealing correction toolkit.
//!
//! Encodes logical Ising problems into nested complete graphs, compiles them
//! onto Chimera hardware, samples them with simulated quantum annealing or
//! parallel tempering, and extracts the resulting energy boost.

pub mod analysis;
pub mod chimera;
pub mod experiment;
pub mod error;
pub mod fixtures;
pub mod interp;
pub mod ising;
pub mod meanfield;
pub mod nesting;
pub mod protocol;
pub mod pt;
pub mod rng;
pub mod samples;
pub mod sqa;

pub use error::{Error, Result};
