use alloc::string::String;

use crate::backend::BackendError;
use crate::geometry::BBox;
use crate::raster::ImageBuffer;

/// Text recognition for one detected region.
pub trait RecognizerBackend {
    fn name(&self) -> &str;

    /// Called with the original image before any of its regions are
    /// recognized. Lookup-style recognizers use it to select their data.
    fn begin_document(&mut self, _source: &ImageBuffer) -> Result<(), BackendError> {
        Ok(())
    }

    /// `crop` is cut from the image the detector saw; `region` is the same
    /// box in the coordinates of the original image.
    fn recognize(&mut self, crop: &ImageBuffer, region: &BBox) -> Result<String, BackendError>;
}

impl<T: RecognizerBackend + ?Sized> RecognizerBackend for alloc::boxed::Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn begin_document(&mut self, source: &ImageBuffer) -> Result<(), BackendError> {
        (**self).begin_document(source)
    }
    fn recognize(&mut self, crop: &ImageBuffer, region: &BBox) -> Result<String, BackendError> {
        (**self).recognize(crop, region)
    }
}

/// Recognizes nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullRecognizer;

impl RecognizerBackend for NullRecognizer {
    fn name(&self) -> &str {
        "none"
    }

    fn recognize(&mut self, _crop: &ImageBuffer, _region: &BBox) -> Result<String, BackendError> {
        Ok(String::new())
    }
}
