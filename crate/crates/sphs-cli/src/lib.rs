//! Command-line companion to `sphs-core`: JSON run specs in, CSV/JSON
//! artifacts out.  The core crate is `no_std` and knows nothing about
//! files; everything with an I/O surface lives here.

pub mod checkpoint;
pub mod commands;
pub mod csvio;
pub mod error;
pub mod spec;

pub use error::CmdError;
