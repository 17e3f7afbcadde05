//! Image codecs and the raw fixture format.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};
use textriage_core::ImageBuffer;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {error}")]
    File { path: String, error: std::io::Error },
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("cannot encode image: {0}")]
    Encode(String),
    #[error("raw image: {0}")]
    Raw(String),
}

fn from_dynamic(img: DynamicImage) -> Result<ImageBuffer, IoError> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let out = match img {
        DynamicImage::ImageLuma8(g) => ImageBuffer::gray(w, h, g.into_raw()),
        DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_) => ImageBuffer::gray(w, h, img.to_luma8().into_raw()),
        other => ImageBuffer::rgb(w, h, other.to_rgb8().into_raw()),
    };
    out.map_err(|e| IoError::Decode(e.to_string()))
}

/// Decodes PNG or JPEG bytes. Gray images stay single-channel; anything
/// else becomes RGB with alpha dropped.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer, IoError> {
    let img = image::load_from_memory(bytes).map_err(|e| IoError::Decode(e.to_string()))?;
    from_dynamic(img)
}

pub fn load_image(path: &Path) -> Result<ImageBuffer, IoError> {
    let bytes = std::fs::read(path).map_err(|error| IoError::File {
        path: path.display().to_string(),
        error,
    })?;
    if path.extension().is_some_and(|e| e == "raw") {
        return decode_raw(&bytes);
    }
    decode_image(&bytes)
}

fn to_dynamic(img: &ImageBuffer) -> DynamicImage {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let data = img.data().to_vec();
    if img.is_gray() {
        DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, data).expect("sized buffer"))
    } else {
        DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, data).expect("sized buffer"))
    }
}

pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>, IoError> {
    let mut out = Cursor::new(Vec::new());
    to_dynamic(img)
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| IoError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

/// Writes PNG, JPEG or raw depending on the extension (PNG when unknown).
pub fn save_image(img: &ImageBuffer, path: &Path) -> Result<(), IoError> {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    let bytes = match ext.as_str() {
        "raw" => encode_raw(img),
        "jpg" | "jpeg" => {
            let mut out = Cursor::new(Vec::new());
            to_dynamic(img)
                .write_to(&mut out, ImageFormat::Jpeg)
                .map_err(|e| IoError::Encode(e.to_string()))?;
            out.into_inner()
        }
        _ => encode_png(img)?,
    };
    std::fs::write(path, bytes).map_err(|error| IoError::File {
        path: path.display().to_string(),
        error,
    })
}

/// Raw fixture layout: `u32 width`, `u32 height` (little-endian), `u8 channels`,
/// then row-major samples.
pub fn encode_raw(img: &ImageBuffer) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + img.data().len());
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    out.push(img.channels() as u8);
    out.extend_from_slice(img.data());
    out
}

pub fn decode_raw(bytes: &[u8]) -> Result<ImageBuffer, IoError> {
    if bytes.len() < 9 {
        return Err(IoError::Raw(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    let w = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let c = bytes[8] as usize;
    ImageBuffer::new(w, h, c, bytes[9..].to_vec()).map_err(|e| IoError::Raw(e.to_string()))
}
