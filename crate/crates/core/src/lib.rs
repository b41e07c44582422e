//! Functional simulator of analog in-memory computing (AIMC) crossbar tiles:
//! non-ideal matrix-vector multiplies, pulsed device updates, in-memory
//! training compounds, inference noise/drift evaluation, hardware-aware
//! training transforms, and an experiment runner.

pub mod compound;
pub mod config;
pub mod device;
pub mod error;
pub mod hwa;
pub mod inference;
pub mod mvm;
pub mod nn;
pub mod num;
pub mod runner;
pub mod update;

pub use error::SimError;
