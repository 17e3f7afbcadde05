use alloc::vec::Vec;

use crate::backend::BackendError;
use crate::raster::ImageBuffer;

/// An integer-factor upscaler applied tile by tile.
///
/// Implementations are used by one worker at a time and may keep state
/// (a child process, a loaded model), hence `&mut self`.
pub trait ScalerBackend {
    fn name(&self) -> &str;

    /// The integer factor every output dimension is multiplied by.
    fn scale(&self) -> usize;

    /// Upscales one tile; the result must measure exactly
    /// `scale * tile.width()` by `scale * tile.height()`.
    fn upscale(&mut self, tile: &ImageBuffer) -> Result<ImageBuffer, BackendError>;
}

impl<T: ScalerBackend + ?Sized> ScalerBackend for &mut T {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn scale(&self) -> usize {
        (**self).scale()
    }
    fn upscale(&mut self, tile: &ImageBuffer) -> Result<ImageBuffer, BackendError> {
        (**self).upscale(tile)
    }
}

impl<T: ScalerBackend + ?Sized> ScalerBackend for alloc::boxed::Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn scale(&self) -> usize {
        (**self).scale()
    }
    fn upscale(&mut self, tile: &ImageBuffer) -> Result<ImageBuffer, BackendError> {
        (**self).upscale(tile)
    }
}

/// Pixel replication: every input sample becomes a `scale x scale` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NearestScaler {
    pub factor: usize,
}

impl NearestScaler {
    pub fn new(factor: usize) -> Self {
        Self { factor }
    }

    pub fn apply(&self, img: &ImageBuffer) -> ImageBuffer {
        let s = self.factor;
        let c = img.channels();
        let (w, h) = img.dims();
        let mut data = Vec::with_capacity(w * h * c * s * s);
        for y in 0..h {
            let row = img.row(y);
            let start = data.len();
            for px in row.chunks_exact(c) {
                for _ in 0..s {
                    data.extend_from_slice(px);
                }
            }
            let end = data.len();
            for _ in 1..s {
                data.extend_from_within(start..end);
            }
        }
        ImageBuffer::new(w * s, h * s, c, data).expect("replicated dims are consistent")
    }
}

impl Default for NearestScaler {
    fn default() -> Self {
        Self { factor: 2 }
    }
}

impl ScalerBackend for NearestScaler {
    fn name(&self) -> &str {
        "nearest"
    }

    fn scale(&self) -> usize {
        self.factor
    }

    fn upscale(&mut self, tile: &ImageBuffer) -> Result<ImageBuffer, BackendError> {
        Ok(self.apply(tile))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn duplicates_each_pixel() {
        let img = ImageBuffer::gray(2, 2, vec![1, 2, 3, 4]).unwrap();
        let out = NearestScaler::new(2).upscale(&img).unwrap();
        assert_eq!(out.dims(), (4, 4));
        assert_eq!(
            out.data(),
            &[1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4]
        );
    }

    #[test]
    fn constant_stays_constant() {
        let img = ImageBuffer::filled(5, 3, 77).unwrap();
        let out = NearestScaler::default().apply(&img);
        assert_eq!(out.dims(), (10, 6));
        assert!(out.data().iter().all(|&v| v == 77));
    }

    #[test]
    fn rgb_keeps_channels_together() {
        let img = ImageBuffer::rgb(1, 1, vec![1, 2, 3]).unwrap();
        let out = NearestScaler::new(2).apply(&img);
        assert_eq!(out.data(), &[1, 2, 3].repeat(4)[..]);
    }
}
