//! Tabletop language-grounding simulator: objects are named once, then
//! referred to by name in pick-and-place instructions.
//!
//! Geometry and feature-space math is generic over [`Scalar`] (`f32`/`f64`);
//! the aliases below fix the scalar used by the rest of the pipeline.

pub mod error;
pub mod grammar;
pub mod grounder;
pub mod evalharness;
pub mod executor;
pub mod langgen;
pub mod matcher;
pub mod memory;
pub mod rng;
pub mod scalar;
pub mod scene;
pub mod vocab;

pub use error::{Error, Result};
pub use grammar::Grammar;
pub use scalar::Scalar;

/// Image-space box used throughout the pipeline.
pub type BBox = scene::geometry::BBox<f64>;
pub type BBoxF32 = scene::geometry::BBox<f32>;
