//! Sliding-mode-observer based detection, estimation and classification of
//! cyber-attacks on a two-car cooperative adaptive cruise control platoon.

pub mod attack_lab;
pub mod batch;
pub mod cli_io;
pub mod detection;
pub mod error;
pub mod estimation;
pub mod extended_system;
pub mod linalg;
pub mod platoon_model;
pub mod presets;
pub mod sim_engine;
pub mod smo_core;

pub use error::{Error, Result};
