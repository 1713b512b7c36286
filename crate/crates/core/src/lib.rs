//! Cycle-level simulator of tiered-latency DRAM.
//!
//! The crate is organized along the data path:
//!
//! - [`bitline`]: lumped-RC model of a segmented bitline; derives per-segment
//!   timing parameters and the die-size trade-off.
//! - [`device`]: banks as timing-enforcing state machines, including the
//!   in-bank inter-segment transfer command, plus an independent command-log
//!   auditor.
//! - [`controller`]: request translation, FR-FCFS scheduling, and the
//!   near-segment management policies.
//! - [`workload`]: trace parsing, deterministic synthetic traffic, and the
//!   blocking-read core model.
//! - [`metrics`]: energy accounting and run statistics.
//! - [`sim`]: the cycle loop tying the pieces together.
//! - [`config`] / [`experiment`]: run configuration, sweeps, and the bundled
//!   reference experiments.

pub mod bitline;
pub mod controller;
pub mod device;
pub mod metrics;
pub mod sim;
pub mod workload;

pub use bitline::Segment;
