//! Fringe projection profilometry toolkit.
//!
//! A virtual camera-projector rig renders phase-shifted fringe images of
//! analytic scenes with exact ground truth; phase-shifting retrieval,
//! multi-frequency temporal unwrapping and the geometric-constraint
//! minimum-phase method recover absolute phase; triangulation turns phase
//! into metric point clouds. A refined reference phase lifts two-phase
//! unwrapping to three-frequency quality, and differentiable loss
//! functions plus a small trainable fusion network close the loop for
//! learning-based phase prediction.
//!
//! Per-pixel kernels run row-parallel on rayon under the default
//! `parallel` feature; disabling it yields a bit-identical sequential
//! build.

pub mod error;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod micro;
pub mod par;
pub mod pattern;
pub mod phase;
pub mod raster;
pub mod reconstruct;
pub mod refine;
pub mod render;
pub mod rng;
pub mod surface;
pub mod unwrap;
pub mod dataset;

pub use error::{FppError, Result};
pub use raster::{Raster, RasterKind};
