//! Design and analysis of volumetric acoustic holograms.

pub mod config;
pub mod error;
pub mod exec;
pub mod fft;
pub mod gradient;
pub mod grid;
pub mod helmholtz;
pub mod io;
pub mod material;
pub mod objective;
pub mod optim;
pub mod pipeline;
pub mod oracle;
pub mod propagation;
pub mod scenario;
pub mod targets;
pub mod thin_element;

pub use error::{HoloError, Result};
