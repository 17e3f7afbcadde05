//! Deterministic building blocks for document image triage.
//!
//! Everything in this crate is pure computation over in-memory buffers and
//! needs only `alloc`: grayscale conversion, CLAHE, tiled upscaling around a
//! pluggable scaler, score-map post-processing into text instances, zero-shot
//! label decisions over an NLI scorer, and detection evaluation by polygon IoU.
//!
//! Neural models never live here. They sit behind the backend traits
//! ([`ScalerBackend`], [`DetectorBackend`], [`RecognizerBackend`],
//! [`NliScorer`]); each trait ships with a small reference implementation so
//! the whole chain runs without model weights.
#![no_std]
// NaN must fail validation, so `!(x > 0.0)` is deliberate
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod backend;
mod error;
mod raster;

pub mod classify;
pub mod detect;
pub mod eval;
pub mod geometry;
pub mod imaging;

pub use backend::{BackendError, BackendErrorKind};

pub use classify::{
    ClassDecision, KeywordScorer, KeywordTable, LabelSet, NliScore, NliScorer, RecognizerBackend,
};
pub use detect::{DetectConfig, DetectorBackend, ScoreMaps, StencilDetector, TextInstance};
pub use error::{Error, Result};
pub use geometry::{BBox, Point};
pub use imaging::{ClaheConfig, NearestScaler, ScalerBackend, TileConfig};
pub use raster::ImageBuffer;
