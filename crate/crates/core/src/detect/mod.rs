//! From detector score maps to text instances.
//!
//! The detector backend produces a probability map and a threshold map. A
//! pixel is text when its probability exceeds its own threshold and also
//! reaches the global floor; text pixels are grouped into connected
//! components, filtered by height, and traced into polygons.

mod binarize;
mod components;
mod contour;
mod extract;
mod maps;
mod unclip;

pub use binarize::{hard_mask, soft_binarize};
pub use components::{label_components, Component, Connectivity, Labels};
pub use contour::trace_boundary;
pub use extract::{extract_instances, DetectConfig, TextInstance};
pub use maps::{DetectorBackend, ScoreMaps, StencilDetector};
pub use unclip::{unclip, unclip_distance};
