//! Region annotations and the lookup recognizer built on them.
//!
//! An annotation file names an image and lists its text regions:
//!
//! ```json
//! {"image": "invoice.png", "regions": [{"bbox": [40, 30, 120, 16], "text": "INVOICE"}]}
//! ```
//!
//! The recognizer identifies the document by a digest of its decoded
//! pixels, so the same picture arriving over HTTP or from disk resolves to
//! the same annotations.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use textriage_core::{BBox, BackendError, ImageBuffer, RecognizerBackend};

use crate::io::load_image;

pub const ANNOTATION_SUFFIX: &str = ".regions.json";

/// Minimum box IoU between a detected region and an annotated one.
const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub bbox: BBox,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub image: String,
    pub regions: Vec<Region>,
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("{path}: {message}")]
    Load { path: String, message: String },
}

/// Hex SHA-256 over the dimensions and samples of an image.
pub fn image_digest(img: &ImageBuffer) -> String {
    let mut h = Sha256::new();
    h.update((img.width() as u64).to_le_bytes());
    h.update((img.height() as u64).to_le_bytes());
    h.update([img.channels() as u8]);
    h.update(img.data());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Default)]
pub struct AnnotationStore {
    documents: Vec<(String, Vec<Region>)>,
}

impl AnnotationStore {
    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn insert(&mut self, img: &ImageBuffer, regions: Vec<Region>) {
        let digest = image_digest(img);
        self.documents.retain(|(d, _)| *d != digest);
        self.documents.push((digest, regions));
    }

    pub fn regions_for(&self, img: &ImageBuffer) -> Option<&[Region]> {
        let digest = image_digest(img);
        self.documents
            .iter()
            .find(|(d, _)| *d == digest)
            .map(|(_, r)| r.as_slice())
    }

    fn load_file(&mut self, path: &Path) -> Result<(), AnnotationError> {
        let err = |message: String| AnnotationError::Load {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let file: AnnotationFile = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        let image_path = path.parent().unwrap_or(Path::new(".")).join(&file.image);
        let img = load_image(&image_path).map_err(|e| err(e.to_string()))?;
        self.insert(&img, file.regions);
        Ok(())
    }

    /// Loads one annotation file, or every `*.regions.json` in a directory.
    pub fn load(path: &Path) -> Result<Self, AnnotationError> {
        let mut store = Self::default();
        if path.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| AnnotationError::Load {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.file_name()
                        .is_some_and(|n| n.to_string_lossy().ends_with(ANNOTATION_SUFFIX))
                })
                .collect();
            files.sort();
            for f in files {
                store.load_file(&f)?;
            }
        } else {
            store.load_file(path)?;
        }
        Ok(store)
    }
}

/// The annotation file conventionally stored next to `image`
/// (`invoice.png` -> `invoice.regions.json`), if it exists.
pub fn sibling_annotations(image: &Path) -> Option<PathBuf> {
    let stem = image.file_stem()?.to_string_lossy().into_owned();
    let candidate = image.with_file_name(format!("{stem}{ANNOTATION_SUFFIX}"));
    candidate.is_file().then_some(candidate)
}

/// Recognizer that returns annotated text for the region best overlapping
/// the requested box. Unknown documents and unmatched regions read as "".
#[derive(Debug, Clone, Default)]
pub struct FixtureRecognizer {
    store: Arc<AnnotationStore>,
    current: Vec<Region>,
}

impl FixtureRecognizer {
    pub fn new(store: impl Into<Arc<AnnotationStore>>) -> Self {
        Self {
            store: store.into(),
            current: Vec::new(),
        }
    }
}

/// No sample darker than mid-gray.
fn is_blank(crop: &ImageBuffer) -> bool {
    crop.data().iter().all(|&v| v >= 128)
}

impl RecognizerBackend for FixtureRecognizer {
    fn name(&self) -> &str {
        "fixture"
    }

    fn begin_document(&mut self, source: &ImageBuffer) -> Result<(), BackendError> {
        self.current = self
            .store
            .regions_for(source)
            .map(<[Region]>::to_vec)
            .unwrap_or_default();
        Ok(())
    }

    fn recognize(&mut self, crop: &ImageBuffer, region: &BBox) -> Result<String, BackendError> {
        if is_blank(crop) {
            return Ok(String::new());
        }
        let best = self
            .current
            .iter()
            .map(|r| (r.bbox.iou(region), r))
            .filter(|(iou, _)| *iou >= MATCH_IOU)
            .max_by(|a, b| a.0.total_cmp(&b.0));
        Ok(best.map(|(_, r)| r.text.clone()).unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_by_pixels_and_overlap() {
        let img = ImageBuffer::from_fn(20, 10, |x, _| if x < 10 { 0 } else { 255 }).unwrap();
        let mut store = AnnotationStore::default();
        store.insert(
            &img,
            vec![Region {
                bbox: BBox::new(0.0, 0.0, 10.0, 10.0),
                text: "HELLO".into(),
            }],
        );
        let mut rec = FixtureRecognizer::new(store);
        rec.begin_document(&img).unwrap();
        let ink = img.crop(0, 0, 10, 10).unwrap();
        assert_eq!(
            rec.recognize(&ink, &BBox::new(0.5, 0.0, 9.5, 10.0))
                .unwrap(),
            "HELLO"
        );
        assert_eq!(
            rec.recognize(&ink, &BBox::new(8.0, 0.0, 10.0, 10.0))
                .unwrap(),
            ""
        );
        let white = img.crop(12, 0, 5, 5).unwrap();
        assert_eq!(
            rec.recognize(&white, &BBox::new(0.0, 0.0, 10.0, 10.0))
                .unwrap(),
            ""
        );

        let other = ImageBuffer::filled(20, 10, 0).unwrap();
        rec.begin_document(&other).unwrap();
        assert_eq!(
            rec.recognize(&ink, &BBox::new(0.0, 0.0, 10.0, 10.0))
                .unwrap(),
            ""
        );
    }

    #[test]
    fn digest_depends_on_shape() {
        let a = ImageBuffer::filled(4, 2, 0).unwrap();
        let b = ImageBuffer::filled(2, 4, 0).unwrap();
        assert_ne!(image_digest(&a), image_digest(&b));
        assert_eq!(image_digest(&a).len(), 64);
    }
}
