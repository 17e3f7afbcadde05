//! Preprocessing: luma conversion, CLAHE and tiled upscaling.

mod clahe;
mod gray;
mod scaler;
mod tiling;

pub use clahe::{clahe, tile_mappings, ClaheConfig, ClaheMappings, TileSpan};
pub use gray::to_grayscale;
pub use scaler::{NearestScaler, ScalerBackend};
pub use tiling::{tile_origins, upscale_tiled, TileConfig, TilePlan};
