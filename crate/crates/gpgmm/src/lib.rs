//! File formats, configuration, benchmark harness and command
//! implementations around [`gpgmm_core`].

pub mod cloud_io;
pub mod commands;
pub mod config;
pub mod error;
pub mod grid_io;
pub mod mesh_io;
pub mod model_io;
pub mod parallel;
pub mod report;
pub mod scene;

pub use error::{Error, Result};
pub use gpgmm_core as core;
