//! File formats, run configuration, and the parallel frame driver behind the
//! `groundseg` binary.

pub mod config;
pub mod driver;
pub mod gradcheck;
pub mod io;
