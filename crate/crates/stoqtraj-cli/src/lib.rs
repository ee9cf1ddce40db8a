//! Library surface of the `stoqtraj` binary: config parsing/validation and
//! mode execution, split out so integration tests can exercise them
//! directly.

pub mod config;
pub mod run;
