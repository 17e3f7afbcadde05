use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::ImageBuffer;

/// Rec.601 luma, `Y = round(0.299 R + 0.587 G + 0.114 B)`.
///
/// Computed in integer thousandths so the rounding is exact. Single-channel
/// input is rejected with [`Error::AlreadyGray`]; callers that want a
/// pass-through match on it.
pub fn to_grayscale(img: &ImageBuffer) -> Result<ImageBuffer> {
    if img.is_gray() {
        return Err(Error::AlreadyGray);
    }
    let data: Vec<u8> = img
        .data()
        .chunks_exact(3)
        .map(|px| {
            let y = 299 * px[0] as u32 + 587 * px[1] as u32 + 114 * px[2] as u32;
            ((y + 500) / 1000).min(255) as u8
        })
        .collect();
    ImageBuffer::gray(img.width(), img.height(), data)
}
