//! IO, file formats, run artifacts, and the command implementations behind
//! the `pathlets` binary.

pub mod commands;
pub mod config;
pub mod geojson;
pub mod io;
