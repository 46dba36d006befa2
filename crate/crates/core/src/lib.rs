//! Settlement-layer harmonization and agreement analysis.
//!
//! Every raster sits on a global lattice anchored at (-180°, +90°), so two
//! grids of equal resolution are aligned by construction and combining them
//! is an index translation.

pub mod agreement;
pub mod error;
pub mod featurize;
pub mod geio;
pub mod geom;
pub mod grid;
pub mod harmonize;
pub mod mlcore;
pub mod rasterize;
pub mod rng;
pub mod synth;
pub mod zonal;

pub use error::{Error, Result};
pub use grid::{BinaryRaster, CategoricalRaster, GridSpec, NumericRaster};
