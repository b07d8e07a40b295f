//! File formats, command-line front end and HTTP service for
//! [`countermachine_core`].

pub mod cli;
pub mod csv_io;
pub mod model_file;
pub mod service;

pub use countermachine_core as core;
