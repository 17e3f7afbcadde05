//! End-to-end processing of one image: preprocessing, detection,
//! recognition and zero-shot classification, each stage timed.

use std::fmt;
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::{json, Map, Value};
use textriage_core::detect::extract_instances;
use textriage_core::imaging::{clahe, to_grayscale, upscale_tiled};
use textriage_core::{
    BackendErrorKind, ClaheConfig, ClassDecision, DetectConfig, Error, ImageBuffer, TextInstance,
};

use crate::backends::Backends;
use crate::config::{PipelineConfig, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineStage {
    Preprocess,
    Detect,
    Recognize,
    Classify,
}

impl fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PipelineStage::Preprocess => "preprocess",
            PipelineStage::Detect => "detect",
            PipelineStage::Recognize => "recognize",
            PipelineStage::Classify => "classify",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage} stage failed: {error}")]
    Stage { stage: PipelineStage, error: Error },
}

impl PipelineError {
    fn at(stage: PipelineStage) -> impl FnOnce(Error) -> PipelineError {
        move |error| PipelineError::Stage { stage, error }
    }

    pub fn stage(&self) -> Option<PipelineStage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            PipelineError::Config(_) => None,
        }
    }

    /// A backend could not be reached at all, as opposed to failing on
    /// this input.
    pub fn is_unavailable(&self) -> bool {
        match self {
            PipelineError::Stage {
                error: Error::Backend(e) | Error::TileBackend { error: e, .. },
                ..
            } => e.kind == BackendErrorKind::Unavailable,
            _ => false,
        }
    }
}

/// Stage durations in milliseconds; stages that did not run stay at 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timings {
    pub preprocess: f64,
    pub detect: f64,
    pub recognize: f64,
    pub classify: f64,
    pub total: f64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentResult {
    pub source: String,
    pub width: usize,
    pub height: usize,
    /// In source image coordinates.
    pub instances: Vec<TextInstance>,
    /// Present iff the classification stage ran.
    pub decision: Option<ClassDecision>,
    pub timings: Timings,
}

impl DocumentResult {
    /// Wire form shared by the CLI and the service.
    pub fn to_json(&self) -> Value {
        let mut probs = Map::new();
        if let Some(d) = &self.decision {
            for (l, p) in d.labels.iter().zip(&d.probs) {
                probs.insert(l.clone(), json!(p));
            }
        }
        json!({
            "source": self.source,
            "width": self.width,
            "height": self.height,
            "instances": self.instances,
            "label": self.decision.as_ref().map(|d| d.label.clone()),
            "label_probs": probs,
            "premise": self.decision.as_ref().map(|d| d.premise.clone()),
            "timings_ms": self.timings,
        })
    }
}

/// Which stages to run after detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub recognize: bool,
    pub classify: bool,
}

impl RunOptions {
    pub const FULL: RunOptions = RunOptions {
        recognize: true,
        classify: true,
    };
    pub const DETECT_ONLY: RunOptions = RunOptions {
        recognize: false,
        classify: false,
    };
}

/// CLAHE grid reduced so that every tile holds at least one pixel.
fn clahe_for(img: &ImageBuffer, cfg: &ClaheConfig) -> ClaheConfig {
    ClaheConfig {
        grid_cols: cfg.grid_cols.min(img.width()),
        grid_rows: cfg.grid_rows.min(img.height()),
        ..*cfg
    }
}

/// Runs the configured stage order. The result is gray and scaled by
/// `cfg.detector_scale()`.
pub fn preprocess(
    img: &ImageBuffer,
    cfg: &PipelineConfig,
    backends: &mut Backends,
) -> Result<ImageBuffer, Error> {
    let mut cur = img.clone();
    for stage in &cfg.stage_order {
        cur = match stage {
            Stage::Grayscale if cur.is_gray() => cur,
            Stage::Grayscale => to_grayscale(&cur)?,
            Stage::Upscale => upscale_tiled(&cur, &cfg.tiles, &mut backends.scaler)?,
            Stage::Clahe => clahe(&cur, &clahe_for(&cur, &cfg.clahe))?,
        };
    }
    Ok(cur)
}

/// Detection thresholds are stated for source pixels; the detector sees
/// the image after upscaling.
fn detector_config(cfg: &PipelineConfig) -> DetectConfig {
    let s = cfg.detector_scale();
    DetectConfig {
        min_height: cfg.detect.min_height * s,
        max_height: cfg.detect.max_height * s,
        ..cfg.detect
    }
}

pub fn process_image(
    img: &ImageBuffer,
    source: &str,
    cfg: &PipelineConfig,
    backends: &mut Backends,
    opts: RunOptions,
) -> Result<DocumentResult, PipelineError> {
    cfg.validate()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let start = Instant::now();
    let mut timings = Timings::default();

    let t = Instant::now();
    let prepared =
        preprocess(img, cfg, backends).map_err(PipelineError::at(PipelineStage::Preprocess))?;
    timings.preprocess = ms(t.elapsed());

    let t = Instant::now();
    let maps = backends
        .detector
        .score(&prepared)
        .map_err(|e| PipelineError::at(PipelineStage::Detect)(e.into()))?;
    if maps.dims() != prepared.dims() {
        return Err(PipelineError::at(PipelineStage::Detect)(
            Error::DimMismatch {
                left: maps.dims(),
                right: prepared.dims(),
            },
        ));
    }
    let found = extract_instances(&maps, &detector_config(cfg))
        .map_err(PipelineError::at(PipelineStage::Detect))?;
    timings.detect = ms(t.elapsed());

    let back = 1.0 / cfg.detector_scale() as f64;
    let mut instances: Vec<TextInstance> = found.iter().map(|i| i.scaled(back)).collect();

    if opts.recognize {
        let t = Instant::now();
        recognize(img, &prepared, &found, &mut instances, backends);
        timings.recognize = ms(t.elapsed());
    }

    let decision = if opts.classify {
        let t = Instant::now();
        let premise = textriage_core::classify::assemble_premise(&instances);
        let d = textriage_core::classify::zero_shot_classify(
            &premise,
            &cfg.labels,
            &cfg.hypothesis_template,
            &mut backends.scorer,
        )
        .map_err(PipelineError::at(PipelineStage::Classify))?;
        timings.classify = ms(t.elapsed());
        Some(d)
    } else {
        None
    };

    timings.total = ms(start.elapsed());
    Ok(DocumentResult {
        source: source.to_string(),
        width: img.width(),
        height: img.height(),
        instances,
        decision,
        timings,
    })
}

/// Fills in `text` for every instance. Failures leave that instance's
/// text empty.
fn recognize(
    source: &ImageBuffer,
    prepared: &ImageBuffer,
    found: &[TextInstance],
    instances: &mut [TextInstance],
    backends: &mut Backends,
) {
    if let Err(e) = backends.recognizer.begin_document(source) {
        tracing::warn!(error = %e, "recognizer could not open the document");
    }
    for (det, inst) in found.iter().zip(instances.iter_mut()) {
        let text = prepared
            .crop_bbox(&det.bbox)
            .map_err(|e| e.to_string())
            .and_then(|crop| {
                backends
                    .recognizer
                    .recognize(&crop, &inst.bbox)
                    .map_err(|e| e.to_string())
            });
        inst.text = Some(text.unwrap_or_else(|e| {
            tracing::warn!(bbox = ?inst.bbox, error = %e, "recognition failed");
            String::new()
        }));
    }
}
