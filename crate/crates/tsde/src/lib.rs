//! File formats, the parallel experiment runner and the `tsde` command line
//! built on top of [`tsde_core`].

pub mod cli;
pub mod config;
pub mod experiment;
pub mod io;
pub mod output;

pub use tsde_core as core;
