//! Simulator, file formats and command-line front end for the routing core.

pub mod beacon;
pub mod bench;
pub mod cli;
pub mod files;
pub mod registry;
pub mod router;
pub mod sim;
pub mod topology;

pub use fabrid_core;
