use alloc::vec::Vec;

use crate::backend::BackendError;
use crate::error::{Error, Result};
use crate::raster::ImageBuffer;

/// Probability map `prob` and adaptive threshold map `thresh`, row-major,
/// both `width x height` with values in `[0, 1]`.
///
/// `shrunk` is set by backends whose maps cover shrunk text kernels; the
/// extracted polygons are then dilated back to full size.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMaps {
    width: usize,
    height: usize,
    prob: Vec<f64>,
    thresh: Vec<f64>,
    shrunk: bool,
}

fn check_map(map: &[f64], width: usize, height: usize) -> Result<()> {
    if map.len() != width * height {
        return Err(Error::DimMismatch {
            left: (width, height),
            right: (map.len(), 1),
        });
    }
    match map.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(index) => Err(Error::MapRange {
            index,
            value: map[index],
        }),
        None => Ok(()),
    }
}

impl ScoreMaps {
    pub fn new(
        width: usize,
        height: usize,
        prob: Vec<f64>,
        thresh: Vec<f64>,
        shrunk: bool,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        check_map(&prob, width, height)?;
        check_map(&thresh, width, height)?;
        Ok(Self {
            width,
            height,
            prob,
            thresh,
            shrunk,
        })
    }

    /// Maps with a constant threshold.
    pub fn with_uniform_thresh(
        width: usize,
        height: usize,
        prob: Vec<f64>,
        thresh: f64,
    ) -> Result<Self> {
        let t = alloc::vec![thresh; prob.len()];
        Self::new(width, height, prob, t, false)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn prob(&self) -> &[f64] {
        &self.prob
    }

    pub fn thresh(&self) -> &[f64] {
        &self.thresh
    }

    pub fn shrunk(&self) -> bool {
        self.shrunk
    }
}

/// A text detector producing per-pixel score maps for a grayscale image.
pub trait DetectorBackend {
    fn name(&self) -> &str;

    /// Maps must have the same dimensions as `img`.
    fn score(&mut self, img: &ImageBuffer) -> Result<ScoreMaps, BackendError>;
}

impl<T: DetectorBackend + ?Sized> DetectorBackend for alloc::boxed::Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn score(&mut self, img: &ImageBuffer) -> Result<ScoreMaps, BackendError> {
        (**self).score(img)
    }
}

/// Reference detector for dark-on-light documents: `P = 1 - I/255` with a
/// constant threshold. The maps are never shrunk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilDetector {
    pub thresh: f64,
}

impl Default for StencilDetector {
    fn default() -> Self {
        Self { thresh: 0.3 }
    }
}

impl StencilDetector {
    pub fn maps(&self, img: &ImageBuffer) -> Result<ScoreMaps> {
        if !img.is_gray() {
            return Err(Error::NotGray(img.channels()));
        }
        let prob = img.data().iter().map(|&v| 1.0 - v as f64 / 255.0).collect();
        ScoreMaps::with_uniform_thresh(img.width(), img.height(), prob, self.thresh)
    }
}

impl DetectorBackend for StencilDetector {
    fn name(&self) -> &str {
        "stencil"
    }

    fn score(&mut self, img: &ImageBuffer) -> Result<ScoreMaps, BackendError> {
        self.maps(img)
            .map_err(|e| BackendError::failed("stencil", alloc::format!("{e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn validates_shape_and_range() {
        assert!(ScoreMaps::new(2, 2, vec![0.0; 4], vec![0.0; 3], false).is_err());
        assert_eq!(
            ScoreMaps::new(2, 1, vec![0.0, 1.5], vec![0.0; 2], false),
            Err(Error::MapRange {
                index: 1,
                value: 1.5
            })
        );
        assert!(ScoreMaps::new(1, 1, vec![f64::NAN], vec![0.0], false).is_err());
    }

    #[test]
    fn stencil_on_white_is_zero() {
        let img = ImageBuffer::filled(9, 4, 255).unwrap();
        let maps = StencilDetector::default().score(&img).unwrap();
        assert!(maps.prob().iter().all(|&p| p == 0.0));
        assert!(maps.thresh().iter().all(|&t| t == 0.3));
        assert!(!maps.shrunk());
    }

    #[test]
    fn stencil_word_block_is_only_high_region() {
        let img = ImageBuffer::from_fn(60, 30, |x, y| {
            if (10..30).contains(&x) && (5..13).contains(&y) {
                0
            } else {
                255
            }
        })
        .unwrap();
        let maps = StencilDetector::default().score(&img).unwrap();
        for y in 0..30 {
            for x in 0..60 {
                let p = maps.prob()[y * 60 + x];
                let inside = (10..30).contains(&x) && (5..13).contains(&y);
                assert_eq!(p, if inside { 1.0 } else { 0.0 });
            }
        }
    }
}
