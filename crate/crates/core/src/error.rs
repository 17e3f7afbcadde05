use alloc::string::String;

use crate::backend::BackendError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("image has zero width or height")]
    EmptyImage,

    #[error("buffer of {actual} samples does not match {width}x{height}x{channels}")]
    BufferSize {
        width: usize,
        height: usize,
        channels: usize,
        actual: usize,
    },

    #[error("unsupported channel count {0} (expected 1 or 3)")]
    Channels(usize),

    /// Grayscale conversion was asked to convert an image that is already gray.
    #[error("image is already single-channel")]
    AlreadyGray,

    #[error("expected a single-channel image, got {0} channels")]
    NotGray(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("map dimensions {left:?} and {right:?} differ")]
    DimMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("map value {value} at index {index} is outside [0, 1]")]
    MapRange { index: usize, value: f64 },

    #[error("softmax of an empty vector")]
    EmptyLogits,

    #[error("non-finite logit {0}")]
    NonFinite(f64),

    #[error("label set is empty")]
    NoLabels,

    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),

    #[error("every label received zero entailment probability")]
    DegenerateDecision,

    #[error("scaler returned {got:?} for tile {tile} (expected {expected:?})")]
    TileProtocol {
        tile: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("tile {tile}: {error}")]
    TileBackend { tile: usize, error: BackendError },

    #[error(transparent)]
    Backend(#[from] BackendError),
}
