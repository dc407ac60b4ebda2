//! Decomposition of two data views into common-source, distinctive-source
//! and noise parts, with variance-explained diagnostics.

pub mod cca;
pub mod check;
pub mod config;
pub mod decompose;
pub mod denoise;
pub mod error;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod population;
pub mod pve;
pub mod report;
pub mod simulate;

pub use error::{Error, Result};
