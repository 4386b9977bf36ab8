//! Multi-compound super-resolution of gridded emission maps.
//!
//! A reference compound's low-resolution map is stacked with the maps of other
//! compounds, each sent to uniform [0, 1] by its own quantile transform, passed
//! through a residual channel-attention network, and mapped back to physical
//! units with the reference's inverse transform.

pub mod array;
pub mod config;
pub mod dataset;
pub mod error;
pub mod grid;
pub mod interconnection;
pub mod model;
pub mod patch;
pub mod pipeline;
pub mod render;
pub mod metrics;
pub mod rng;
pub mod synthetic;
pub mod transform;

pub use array::Array2;
pub use error::{Error, Result};
pub use grid::{load_grid, save_grid, EmissionGrid, GridFormat};
