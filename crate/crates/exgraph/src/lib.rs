//! Std companion to `exgraph-core`: file formats, a thread-pool executor and
//! the `exgraph` command-line interface.

pub mod cli;
pub mod exec;
pub mod io;

pub use exec::RayonExecutor;
