//! Detection scoring against ground-truth polygons.

mod iou;
mod matching;
mod rates;

pub use iou::{polygon_iou, IouResult, DEFAULT_IOU_RESOLUTION};
pub use matching::{match_detections, MatchResult};
pub use rates::{Counts, Rates};
