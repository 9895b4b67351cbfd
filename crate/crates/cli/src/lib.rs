//! Command-line workflows of nfftgp: configuration, file formats and the
//! subcommands behind the `nfftgp` binary.

pub mod commands;
pub mod config;
pub mod io;
