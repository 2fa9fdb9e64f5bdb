//! Exact and Monte Carlo analysis of lazy random walks on vertex-transitive
//! graphs and of the lamplighter chains built on top of them.
//!
//! The crate is organized around the pipeline
//!
//! * [`graph`] — base graphs, the lazy step rule, vertex codecs;
//! * [`spectral`] — dense-matrix oracles (spectrum, mixing and hitting
//!   times, Green's function, G*);
//! * [`mc`] — seeded, parallel Monte Carlo simulation: coverage, local
//!   times, excursions, hitting probes;
//! * [`lamplighter`] — the lamp-and-walker chain: exact kernels, the
//!   covered-set dynamic program, proxy mixing estimates;
//! * [`bounds`] — closed-form bound evaluators and the lattice
//!   return-probability oracle;
//! * [`assumption`] — feasibility constants for the bound machinery on a
//!   concrete graph;
//! * [`experiments`] — reproducible scenario runner behind the `mixlab`
//!   binary.

pub mod assumption;
pub mod bitset;
pub mod bounds;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod lamplighter;
pub mod mc;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
