//! File formats, experiment drivers and self-checks around `contmeas-core`.
//!
//! The binary `contmeas` is a thin layer over [`commands`]; everything it
//! writes goes through [`output`].

pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
